"""Pragmatic decoding: beam search, candidate reranking, belief tracking.

Three decode modes share one beam engine:

* ``base``: rank hypotheses by the cumulative base speaker score.
* ``reconstructor``: run the base beam, then rerank the finished candidates
  by ``lambda * listener + (1 - lambda) * speaker``.
* ``distractor``: decode incrementally against alternative inputs. Each
  hypothesis carries a belief state over the true input and its
  distractors; every candidate token is scored by how strongly it shifts
  that belief toward the true input, blended with the base score and
  renormalized over the vocabulary, and hypotheses are ranked by the
  cumulative sum of those per-step pragmatic log-probabilities.

All rankings break ties the same way: score, then base score, then
lexicographic token ids. Step scores are renormalized in log space before
accumulation so that the degenerate settings (``alpha = 0``,
``lambda = 0``, or a distractor identical to the input) reproduce the base
ranking bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import DegenerateDistributionError, TokenSequence
from .speaker import SpeakerModel

MODE_BASE = "base"
MODE_RECONSTRUCTOR = "reconstructor"
MODE_DISTRACTOR = "distractor"

_MODES = (MODE_BASE, MODE_RECONSTRUCTOR, MODE_DISTRACTOR)


class BeliefCollapseError(ValueError):
    """Raised when every candidate input assigns zero mass to a token."""


# ── configuration ───────────────────────────────────────────────────────────


@dataclass(frozen=True)
class DecodeConfig:
    """Decoding knobs shared by all modes.

    ``lambda_`` weights the listener in reconstructor reranking;
    ``alpha`` scales the belief term in distractor decoding.
    """

    beam_size: int = 10
    max_len: int = 60
    lambda_: float = 0.4
    alpha: float = 0.2
    mode: str = MODE_BASE

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be at least 1")
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ValueError("lambda_ must lie in [0, 1]")
        if self.alpha < 0.0:
            raise ValueError("alpha must be non-negative")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")

    @classmethod
    def mr_preset(cls, **overrides: object) -> "DecodeConfig":
        """Defaults tuned for attribute-value inputs."""
        cfg = cls(beam_size=10, max_len=60, lambda_=0.4, alpha=0.2)
        return replace(cfg, **overrides) if overrides else cfg

    @classmethod
    def summarization_preset(cls, **overrides: object) -> "DecodeConfig":
        """Defaults tuned for sentence inputs with document context."""
        cfg = cls(beam_size=20, max_len=80, lambda_=0.9, alpha=1.0)
        return replace(cfg, **overrides) if overrides else cfg


@dataclass(frozen=True)
class ScoredCandidate:
    """One finished (or length-capped) output with its scores.

    ``listener_logprob`` holds the reconstruction score in reconstructor
    mode and the final log-belief of the true input in distractor mode.
    ``combined_score`` is the mode's ranking objective. Both are present or
    absent together.
    """

    output: TokenSequence
    base_logprob: float
    listener_logprob: float | None = None
    combined_score: float | None = None

    def __post_init__(self) -> None:
        if (self.listener_logprob is None) != (self.combined_score is None):
            raise ValueError(
                "listener_logprob and combined_score must be set together"
            )


@dataclass(frozen=True)
class BeliefState:
    """Distribution over candidate inputs, true input first."""

    support: tuple[object, ...]
    log_beliefs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.support) < 2:
            raise ValueError("belief support needs at least two inputs")
        if len(self.support) != len(self.log_beliefs):
            raise ValueError("support and log_beliefs lengths differ")
        mass = sum(math.exp(b) for b in self.log_beliefs)
        if not math.isfinite(mass) or abs(mass - 1.0) > 1e-6:
            raise ValueError("belief state is not normalized")

    @classmethod
    def uniform(cls, support: Sequence[object]) -> "BeliefState":
        n = len(support)
        return cls(tuple(support), tuple([-math.log(n)] * n))


# ── numeric helpers ─────────────────────────────────────────────────────────


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max()
    if m == -math.inf:
        raise DegenerateDistributionError("degenerate distribution: no finite mass")
    out = scores - (m + math.log(np.exp(scores - m).sum()))
    out.setflags(write=False)
    return out


def _logsumexp_rows(stacked: np.ndarray) -> np.ndarray:
    """Log-sum-exp over axis 0, mapping all -inf columns to -inf."""
    m = stacked.max(axis=0)
    out = np.full(stacked.shape[-1], -math.inf)
    finite = m > -math.inf
    if finite.any():
        shifted = stacked[:, finite] - m[finite]
        out[finite] = m[finite] + np.log(np.exp(shifted).sum(axis=0))
    return out


# ── belief machinery ────────────────────────────────────────────────────────


def belief_update(
    belief: BeliefState, speaker: SpeakerModel, prefix: TokenSequence, token: int
) -> BeliefState:
    """Condition the belief on one more emitted token.

    The new log-belief of each candidate input is its step log-probability
    of ``token`` plus its old log-belief, renormalized over the support, so
    folding updates along a prefix reproduces the direct product of step
    likelihoods with the initial belief.
    """
    if prefix.terminated:
        raise ValueError("prefix is terminated; no further tokens can be scored")
    joint = np.array(
        [
            float(speaker.step_logprobs_ctx(speaker.context_ids(s), prefix.ids)[token])
            + b
            for s, b in zip(belief.support, belief.log_beliefs)
        ]
    )
    m = joint.max()
    if m == -math.inf:
        raise BeliefCollapseError(
            "belief collapse: every candidate input rules out the token"
        )
    log_z = m + math.log(np.exp(joint - m).sum())
    return BeliefState(belief.support, tuple(float(x) for x in joint - log_z))


def distractor_step_scores(
    speaker: SpeakerModel,
    belief: BeliefState,
    input_index: int,
    prefix: TokenSequence,
    alpha: float,
) -> np.ndarray:
    """Pragmatic next-token log-probabilities against the belief state.

    Each vocabulary token is scored by ``alpha`` times the log-belief the
    true input would hold after emitting it, plus the base speaker's step
    score, then renormalized over the vocabulary.
    """
    if alpha < 0.0:
        raise ValueError("alpha must be non-negative")
    if not 0 <= input_index < len(belief.support):
        raise ValueError("input_index is outside the belief support")
    if prefix.terminated:
        raise ValueError("prefix is terminated; no further tokens can be scored")
    stacked = np.stack(
        [
            speaker.step_logprobs_ctx(speaker.context_ids(s), prefix.ids)
            for s in belief.support
        ]
    )
    if alpha == 0.0:
        # Short-circuit keeps the reduction identity exact and avoids
        # 0 * -inf where a token is impossible under every input.
        return _log_softmax(stacked[input_index])
    extended = stacked + np.array(belief.log_beliefs)[:, None]
    denom = _logsumexp_rows(extended)
    with np.errstate(invalid="ignore"):
        listener_term = extended[input_index] - denom
    listener_term[denom == -math.inf] = -math.inf
    return _log_softmax(alpha * listener_term + stacked[input_index])


# ── beam engine ─────────────────────────────────────────────────────────────


@dataclass
class _Hypothesis:
    ids: tuple[int, ...]
    score: float
    base: float
    beliefs: np.ndarray | None = None
    finished: bool = False
    sort_key: tuple = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.sort_key = (-self.score, -self.base, self.ids)


def _beam_decode(
    speaker: SpeakerModel,
    input: object,
    config: DecodeConfig,
    distractors: Sequence[object] | None = None,
) -> list[_Hypothesis]:
    """Shared beam loop for base and distractor decoding.

    Finished hypotheses stay in the beam and compete on their frozen
    scores. With a beam at least as large as the number of possible
    sequences nothing is ever pruned, so the ranking is exhaustive.
    """
    ctx = speaker.context_ids(input)
    pragmatic = distractors is not None
    if pragmatic:
        contexts = [ctx] + [speaker.context_ids(d) for d in distractors]
        init_beliefs = np.full(len(contexts), -math.log(len(contexts)))
    beam = [
        _Hypothesis(
            ids=(),
            score=0.0,
            base=0.0,
            beliefs=init_beliefs if pragmatic else None,
        )
    ]
    for _ in range(config.max_len):
        live = [h for h in beam if not h.finished]
        if not live:
            break
        pool = [h for h in beam if h.finished]
        for hyp in live:
            if pragmatic:
                stacked = np.stack(
                    [speaker.step_logprobs_ctx(c, hyp.ids) for c in contexts]
                )
                base_steps = _log_softmax(stacked[0])
                extended = stacked + hyp.beliefs[:, None]
                denom = _logsumexp_rows(extended)
                if config.alpha == 0.0:
                    # Bitwise reduction to the base objective; also avoids
                    # 0 * -inf on tokens no input can produce.
                    prag_steps = base_steps
                else:
                    with np.errstate(invalid="ignore"):
                        listener_term = extended[0] - denom
                    listener_term[denom == -math.inf] = -math.inf
                    prag_steps = _log_softmax(config.alpha * listener_term + stacked[0])
            else:
                base_steps = _log_softmax(speaker.step_logprobs_ctx(ctx, hyp.ids))
                prag_steps = base_steps
            score_keys = hyp.score + prag_steps
            base_keys = hyp.base + base_steps
            order = np.lexsort((-base_keys, -score_keys))
            for v in order[: config.beam_size]:
                tok = int(v)
                # A -inf step means the token is impossible here; such
                # hypotheses can never outrank a finite one and their
                # belief updates are undefined, so they are not expanded.
                if score_keys[tok] == -math.inf:
                    break
                if pragmatic:
                    new_beliefs = extended[:, tok] - denom[tok]
                else:
                    new_beliefs = None
                pool.append(
                    _Hypothesis(
                        ids=hyp.ids + (tok,),
                        score=float(score_keys[tok]),
                        base=float(base_keys[tok]),
                        beliefs=new_beliefs,
                        finished=tok == speaker.eos_id,
                    )
                )
        pool.sort(key=lambda h: h.sort_key)
        beam = pool[: config.beam_size]
    beam.sort(key=lambda h: h.sort_key)
    return beam


# ── public decoding operations ──────────────────────────────────────────────


def beam_search(
    speaker: SpeakerModel, input: object, config: DecodeConfig
) -> list[ScoredCandidate]:
    """Deterministic beam search under the base speaker.

    Returns up to ``beam_size`` candidates, each EOS-terminated or exactly
    ``max_len`` tokens long, sorted by base score with ties broken by
    lexicographic token ids.
    """
    hyps = _beam_decode(speaker, input, config)
    return [
        ScoredCandidate(
            output=TokenSequence(h.ids, eos_id=speaker.eos_id),
            base_logprob=h.base,
        )
        for h in hyps
    ]


def rerank_reconstructor(
    input: object,
    candidates: Sequence[ScoredCandidate],
    listener: object,
    lambda_: float,
) -> list[ScoredCandidate]:
    """Re-sort candidates by the blended reconstruction objective.

    ``combined = lambda * listener + (1 - lambda) * base``; at
    ``lambda = 0`` the combined score equals the base score exactly, so the
    incoming ranking is preserved.
    """
    if not 0.0 <= lambda_ <= 1.0:
        raise ValueError("lambda_ must lie in [0, 1]")
    rescored = []
    for cand in candidates:
        listener_lp = float(listener.reconstruction_logprob(input, cand.output))
        combined = lambda_ * listener_lp + (1.0 - lambda_) * cand.base_logprob
        rescored.append(
            ScoredCandidate(
                output=cand.output,
                base_logprob=cand.base_logprob,
                listener_logprob=listener_lp,
                combined_score=combined,
            )
        )
    rescored.sort(
        key=lambda c: (-c.combined_score, -c.base_logprob, c.output.ids)
    )
    return rescored


def pragmatic_decode_distractor(
    speaker: SpeakerModel,
    input: object,
    distractors: Sequence[object],
    config: DecodeConfig,
) -> ScoredCandidate:
    """Belief-tracking incremental decode against explicit distractors.

    Hypotheses are ranked by their cumulative pragmatic step scores;
    ``combined_score`` reports that total and ``listener_logprob`` the
    final log-belief assigned to the true input.
    """
    if not distractors:
        raise ValueError(
            "distractor decoding needs at least one distractor; "
            "use base mode when the policy yields none"
        )
    hyps = _beam_decode(speaker, input, config, distractors=list(distractors))
    top = hyps[0]
    return ScoredCandidate(
        output=TokenSequence(top.ids, eos_id=speaker.eos_id),
        base_logprob=top.base,
        listener_logprob=float(top.beliefs[0]),
        combined_score=top.score,
    )


def generate(
    speaker: SpeakerModel,
    input: object,
    config: DecodeConfig,
    listener: object | None = None,
    distractors: Sequence[object] | None = None,
) -> ScoredCandidate:
    """Dispatch one decode according to ``config.mode``.

    Distractor mode falls back to the plain beam output when no distractor
    is supplied (the first unit of a document, a fully unmaskable input).
    """
    if config.mode == MODE_BASE:
        return beam_search(speaker, input, config)[0]
    if config.mode == MODE_RECONSTRUCTOR:
        if listener is None:
            raise ValueError("reconstructor mode requires a listener")
        candidates = beam_search(speaker, input, config)
        return rerank_reconstructor(input, candidates, listener, config.lambda_)[0]
    if config.mode == MODE_DISTRACTOR:
        if not distractors:
            return beam_search(speaker, input, config)[0]
        return pragmatic_decode_distractor(speaker, input, distractors, config)
    raise ValueError(f"unknown decode mode {config.mode!r}")

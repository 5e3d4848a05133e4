"""Micro models and brute-force rankings used as oracles by the tests.

Scores here are accumulated with plain ``math`` calls over Python lists,
independent of the package's numpy helpers, so an agreement test cannot
inherit a bug from the code under test.
"""

from __future__ import annotations

import math
import random
from itertools import product

import numpy as np

from praggen.speaker import SpeakerModel


class TabularSpeaker(SpeakerModel):
    """Speaker backed by an explicit per-(input, prefix) log-prob table.

    Inputs are plain id tuples; ``tables[input][prefix]`` holds the next
    token log-probability row. No BOS bookkeeping, no smoothing: what the
    table says is what the model believes.
    """

    def __init__(self, tables: dict, vocab_size: int, eos_id: int) -> None:
        self.tables = tables
        self.vocab_size = vocab_size
        self.eos_id = eos_id

    def context_ids(self, input: object) -> tuple[int, ...]:
        return tuple(input)

    def step_logprobs_ctx(self, ctx, prefix_ids) -> np.ndarray:
        return np.array(self.tables[tuple(ctx)][tuple(prefix_ids)])


class TabularListener:
    """Listener with one pinned score per (input, output) pair."""

    def __init__(self, scores: dict) -> None:
        self.scores = scores

    def reconstruction_logprob(self, input: object, output) -> float:
        return self.scores[(tuple(input), tuple(output.ids))]


def all_prefixes(vocab_size: int, eos_id: int, max_len: int) -> list[tuple[int, ...]]:
    """Every prefix a decoder can query: EOS-free, length < max_len."""
    others = [t for t in range(vocab_size) if t != eos_id]
    out: list[tuple[int, ...]] = []
    for length in range(max_len):
        out.extend(product(others, repeat=length))
    return out


def candidate_universe(vocab_size: int, eos_id: int, max_len: int) -> list[tuple[int, ...]]:
    """Every sequence a beam of that geometry can finish with.

    Terminated sequences carry at most max_len - 1 content tokens plus
    EOS; unterminated ones are exactly max_len content tokens.
    """
    others = [t for t in range(vocab_size) if t != eos_id]
    seqs: list[tuple[int, ...]] = []
    for length in range(max_len):
        for core in product(others, repeat=length):
            seqs.append(core + (eos_id,))
    seqs.extend(product(others, repeat=max_len))
    return seqs


def stationary_tables(dists: dict, vocab_size: int, eos_id: int, max_len: int) -> dict:
    """Tables that reuse one probability row at every prefix."""
    prefixes = all_prefixes(vocab_size, eos_id, max_len)
    return {
        tuple(ctx): {p: [math.log(x) for x in row] for p in prefixes}
        for ctx, row in dists.items()
    }


def random_speaker(
    rng: random.Random,
    inputs: list[tuple[int, ...]],
    vocab_size: int,
    eos_id: int,
    max_len: int,
) -> TabularSpeaker:
    """Random dense conditional tables; every row is a proper distribution."""
    tables: dict = {}
    for inp in inputs:
        rows = {}
        for prefix in all_prefixes(vocab_size, eos_id, max_len):
            weights = [rng.random() + 0.05 for _ in range(vocab_size)]
            total = sum(weights)
            rows[prefix] = [math.log(w / total) for w in weights]
        tables[tuple(inp)] = rows
    return TabularSpeaker(tables, vocab_size, eos_id)


# ── independent arithmetic ──────────────────────────────────────────────────


def log_softmax_row(row: list[float]) -> list[float]:
    m = max(row)
    z = m + math.log(sum(math.exp(x - m) for x in row))
    return [x - z for x in row]


def logsumexp(values: list[float]) -> float:
    m = max(values)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(v - m) for v in values))


def base_sequence_score(speaker: TabularSpeaker, input: tuple, seq: tuple) -> float:
    """Sum of renormalized step log-probabilities along ``seq``."""
    ctx = tuple(input)
    total = 0.0
    for t, tok in enumerate(seq):
        step = log_softmax_row(list(speaker.tables[ctx][seq[:t]]))
        total += step[tok]
    return total


def distractor_sequence_score(
    speaker: TabularSpeaker, inputs: list[tuple], alpha: float, seq: tuple
) -> tuple[float, float]:
    """(pragmatic total, base total) for ``seq`` decoded against ``inputs``.

    Replays the incremental objective by hand: uniform initial belief,
    candidate-extended listener term, per-step vocabulary renormalization,
    belief conditioned on the emitted token.
    """
    ctxs = [tuple(i) for i in inputs]
    v = speaker.vocab_size
    beliefs = [-math.log(len(ctxs))] * len(ctxs)
    prag_total = 0.0
    base_total = 0.0
    for t, tok in enumerate(seq):
        rows = [list(speaker.tables[c][seq[:t]]) for c in ctxs]
        base_total += log_softmax_row(rows[0])[tok]
        extended = [[rows[j][w] + beliefs[j] for w in range(v)] for j in range(len(ctxs))]
        denom = [logsumexp([extended[j][w] for j in range(len(ctxs))]) for w in range(v)]
        listener = [extended[0][w] - denom[w] for w in range(v)]
        prag = log_softmax_row([alpha * listener[w] + rows[0][w] for w in range(v)])
        prag_total += prag[tok]
        beliefs = [extended[j][tok] - denom[tok] for j in range(len(ctxs))]
    return prag_total, base_total


def best_base_sequence(speaker: TabularSpeaker, input: tuple, max_len: int) -> tuple:
    universe = candidate_universe(speaker.vocab_size, speaker.eos_id, max_len)
    return min(
        universe,
        key=lambda s: (-base_sequence_score(speaker, input, s), s),
    )


def best_distractor_sequence(
    speaker: TabularSpeaker, inputs: list[tuple], alpha: float, max_len: int
) -> tuple:
    universe = candidate_universe(speaker.vocab_size, speaker.eos_id, max_len)

    def key(s: tuple) -> tuple:
        prag, base = distractor_sequence_score(speaker, inputs, alpha, s)
        return (-prag, -base, s)

    return min(universe, key=key)

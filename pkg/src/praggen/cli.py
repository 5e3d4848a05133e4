"""Command line pipeline: synth, train, generate, evaluate, ablate.

Settings resolve in a fixed order: built-in defaults, then a ``--preset``
(generate only), then the ``--config`` JSON file, then explicit flags.
Exit codes are 0 for success, 2 for usage or validation problems, and 3
for runtime or data errors. All outputs are written deterministically, so
a rerun with the same inputs is byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from .core import (
    AttributeSchema,
    detokenize,
    load_schema,
    schema_to_dict,
    tokenize,
)
from .data import (
    CorpusRecord,
    build_corpus_vocabulary,
    default_grammar,
    delexicalize,
    generate_corpus,
    load_grammar,
    read_jsonl,
    relexicalize,
    write_jsonl,
)
from .distractor import (
    POLICY_MASK_ALL,
    POLICY_MASK_SINGLE,
    POLICY_NONE,
    DistractorPolicy,
    value_frequencies,
)
from .evaluation import (
    ablation_matrix,
    bleu,
    coverage_report,
    rouge_l,
    write_ablation_csv,
)
from .listener import (
    load_listener,
    save_listener,
    train_attribute_listener,
    train_reverse_listener,
)
from .pragmatics import (
    MODE_BASE,
    MODE_DISTRACTOR,
    MODE_RECONSTRUCTOR,
    DecodeConfig,
    generate,
)
from .speaker import EnsembleSpeaker, load_speaker, save_speaker, train_ngram_speaker


class UsageError(Exception):
    """Bad arguments or configuration; exit code 2."""


class DataError(Exception):
    """Unreadable or inconsistent data; exit code 3."""


# Every knob a config file may set. Paths are deliberately not
# configurable: they are per-invocation and stay on the command line.
DEFAULTS: dict[str, object] = {
    "seed": 13,
    "workers": 1,
    "train_size": 5000,
    "dev_size": 500,
    "test_size": 500,
    "omission_rate": 0.1,
    "order": 3,
    "k": 0.1,
    "copy_bonus": 1.0,
    "listener_type": "attribute-nb",
    "listener_k": 0.5,
    "mode": MODE_BASE,
    "beam_size": 10,
    "max_len": 60,
    "lambda_": 0.4,
    "alpha": 0.2,
    "distractor_policy": POLICY_NONE,
    "metrics": "bleu,rouge,coverage",
}

_CONFIG_ALIASES = {"lambda": "lambda_"}

_MODES = (MODE_BASE, MODE_RECONSTRUCTOR, MODE_DISTRACTOR)
_LISTENER_TYPES = ("attribute-nb", "reverse")
_METRIC_NAMES = ("bleu", "rouge", "coverage")

_PRESETS: dict[str, Callable[[], DecodeConfig]] = {
    "mr": DecodeConfig.mr_preset,
    "summarization": DecodeConfig.summarization_preset,
}


# ── settings resolution ─────────────────────────────────────────────────────


def _load_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc.msg}") from None
    if not isinstance(payload, dict):
        raise UsageError("config file must hold a JSON object")
    resolved = {}
    for key, value in payload.items():
        key = _CONFIG_ALIASES.get(key, key)
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        resolved[key] = value
    return resolved


def _coerce(cfg: dict, key: str, kind: type) -> None:
    try:
        cfg[key] = kind(cfg[key])
    except (TypeError, ValueError):
        raise UsageError(f"setting {key!r} must be a {kind.__name__}") from None


def _validate_settings(cfg: dict) -> None:
    for key in ("seed", "workers", "train_size", "dev_size", "test_size",
                "order", "beam_size", "max_len"):
        _coerce(cfg, key, int)
    for key in ("omission_rate", "k", "copy_bonus", "listener_k", "lambda_", "alpha"):
        _coerce(cfg, key, float)
    if cfg["workers"] < 1:
        raise UsageError("workers must be >= 1")
    for key in ("train_size", "dev_size", "test_size"):
        if cfg[key] < 0:
            raise UsageError(f"{key} must be non-negative")
    if not 0.0 <= cfg["omission_rate"] <= 1.0:
        raise UsageError("omission_rate must lie in [0, 1]")
    if cfg["order"] < 2:
        raise UsageError("order must be >= 2")
    if cfg["k"] <= 0.0 or cfg["listener_k"] <= 0.0:
        raise UsageError("smoothing constants must be positive")
    if cfg["copy_bonus"] < 0.0:
        raise UsageError("copy_bonus must be non-negative")
    if cfg["beam_size"] < 1 or cfg["max_len"] < 1:
        raise UsageError("beam_size and max_len must be >= 1")
    if not 0.0 <= cfg["lambda_"] <= 1.0:
        raise UsageError("lambda must lie in [0, 1]")
    if cfg["alpha"] < 0.0:
        raise UsageError("alpha must be non-negative")
    if cfg["mode"] not in _MODES:
        raise UsageError(f"mode must be one of {', '.join(_MODES)}")
    if cfg["listener_type"] not in _LISTENER_TYPES:
        raise UsageError(f"listener_type must be one of {', '.join(_LISTENER_TYPES)}")
    metrics = cfg["metrics"]
    if isinstance(metrics, str):
        metrics = [m.strip() for m in metrics.split(",") if m.strip()]
    if not isinstance(metrics, list) or not metrics:
        raise UsageError("metrics must name at least one metric")
    for m in metrics:
        if m not in _METRIC_NAMES:
            raise UsageError(f"unknown metric {m!r}; choose from {', '.join(_METRIC_NAMES)}")
    cfg["metrics"] = metrics


def _settings(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    preset = getattr(args, "preset", None)
    if preset is not None:
        base = _PRESETS[preset]()
        cfg.update(
            beam_size=base.beam_size,
            max_len=base.max_len,
            lambda_=base.lambda_,
            alpha=base.alpha,
        )
    if getattr(args, "config", None):
        cfg.update(_load_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    _validate_settings(cfg)
    return cfg


# ── shared loading helpers ──────────────────────────────────────────────────


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _load_schema(path: str) -> AttributeSchema:
    _require_file(path, "schema file")
    try:
        return load_schema(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: invalid schema ({exc})") from None


def _read_records(path: str, schema: AttributeSchema | None = None) -> list[CorpusRecord]:
    _require_file(path, "data file")
    try:
        return read_jsonl(path, schema)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _load_speaker(path: str, schema: AttributeSchema):
    _require_file(path, "speaker file")
    try:
        return load_speaker(path, schema=schema)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: invalid speaker ({exc})") from None


def _speaker_vocabulary(speaker):
    inner = speaker
    while isinstance(inner, EnsembleSpeaker):
        inner = inner.member_a
    vocab = getattr(inner, "vocab", None)
    if vocab is None:
        raise DataError("speaker model carries no vocabulary")
    return vocab


def _write_lines(lines: Sequence[str], path: str) -> None:
    out = Path(path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# ── commands ────────────────────────────────────────────────────────────────


def cmd_synth(args: argparse.Namespace, cfg: dict) -> int:
    if args.grammar is not None:
        _require_file(args.grammar, "grammar file")
        try:
            grammar = load_grammar(args.grammar)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"{args.grammar}: invalid grammar ({exc})") from None
        if args.omission_rate is not None:
            grammar = replace(grammar, omission_rate=cfg["omission_rate"])
    else:
        grammar = default_grammar(cfg["omission_rate"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = (
        ("train", cfg["train_size"], cfg["seed"]),
        ("dev", cfg["dev_size"], cfg["seed"] + 1),
        ("test", cfg["test_size"], cfg["seed"] + 2),
    )
    for split, size, seed in splits:
        records = generate_corpus(grammar, size, seed, id_prefix=split)
        target = out_dir / f"{split}.jsonl"
        write_jsonl(records, target)
        print(f"wrote {len(records)} records to {target}")
    schema_path = out_dir / "schema.json"
    schema_path.write_text(
        json.dumps(schema_to_dict(grammar.schema), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"wrote schema to {schema_path}")
    return 0


def _training_pairs(records: list[CorpusRecord], schema: AttributeSchema):
    if not records:
        raise UsageError("training data is empty")
    delexed = [delexicalize(r, schema) for r in records]
    vocab = build_corpus_vocabulary(delexed, schema)
    pairs = [(r.mr, tokenize(r.reference, vocab)) for r in delexed]
    return pairs, vocab


def cmd_train(args: argparse.Namespace, cfg: dict) -> int:
    schema = _load_schema(args.schema)
    records = _read_records(args.data, schema)
    pairs, vocab = _training_pairs(records, schema)
    speaker = train_ngram_speaker(
        pairs,
        cfg["order"],
        cfg["k"],
        vocab=vocab,
        schema=schema,
        copy_bonus=cfg["copy_bonus"],
    )
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_speaker(speaker, out)
    print(f"trained order-{cfg['order']} speaker on {len(pairs)} pairs "
          f"(vocab {len(vocab.tokens)}), saved to {out}")
    if args.listener_out is not None:
        if cfg["listener_type"] == "attribute-nb":
            listener = train_attribute_listener(
                pairs, schema, k=cfg["listener_k"], vocab=vocab
            )
            save_listener(listener, args.listener_out)
        else:
            listener = train_reverse_listener(
                pairs, cfg["order"], cfg["k"], schema=schema, vocab=vocab
            )
            model_path = Path(args.listener_out).with_suffix(".model.json")
            save_listener(listener, args.listener_out, model_path=model_path)
        print(f"trained {cfg['listener_type']} listener, saved to {args.listener_out}")
    return 0


def cmd_generate(args: argparse.Namespace, cfg: dict) -> int:
    schema = _load_schema(args.schema)
    speaker = _load_speaker(args.speaker, schema)
    vocab = _speaker_vocabulary(speaker)
    mode = cfg["mode"]
    listener = None
    if args.listener is not None:
        _require_file(args.listener, "listener file")
        try:
            listener = load_listener(args.listener, schema=schema)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"{args.listener}: invalid listener ({exc})") from None
    if mode == MODE_RECONSTRUCTOR and listener is None:
        raise UsageError("reconstructor mode requires --listener")
    try:
        policy = DistractorPolicy.parse(cfg["distractor_policy"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if policy.kind == POLICY_MASK_SINGLE and not schema.has(policy.attribute):
        raise UsageError(f"mask-single names unknown attribute {policy.attribute!r}")
    if mode != MODE_DISTRACTOR and policy.kind != POLICY_NONE:
        raise UsageError("--distractor-policy only applies to --mode distractor")
    try:
        config = DecodeConfig(
            beam_size=cfg["beam_size"],
            max_len=cfg["max_len"],
            lambda_=cfg["lambda_"],
            alpha=cfg["alpha"],
            mode=mode,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    records = _read_records(args.data, schema)
    delexed = [delexicalize(r, schema) for r in records]
    freqs = None
    if mode == MODE_DISTRACTOR and policy.kind == POLICY_MASK_ALL:
        freqs = value_frequencies([r.mr for r in delexed], schema)
    jobs = []
    for i, rec in enumerate(delexed):
        distractors: list[object] = []
        if mode == MODE_DISTRACTOR:
            previous = delexed[i - 1].mr if i > 0 else None
            distractors = policy.distractors(rec.mr, freqs=freqs, previous=previous)
        jobs.append((rec, distractors))

    def decode(job: tuple[CorpusRecord, list[object]]) -> dict:
        rec, distractors = job
        cand = generate(speaker, rec.mr, config, listener=listener, distractors=distractors)
        text = relexicalize(detokenize(cand.output, vocab), rec.delex_map)
        payload: dict[str, object] = {
            "id": rec.id,
            "output": text,
            "base_logprob": cand.base_logprob,
        }
        if cand.listener_logprob is not None:
            payload["listener_logprob"] = cand.listener_logprob
            payload["combined_score"] = cand.combined_score
        return payload

    if cfg["workers"] > 1:
        with ThreadPoolExecutor(max_workers=cfg["workers"]) as pool:
            payloads = list(pool.map(decode, jobs))
    else:
        payloads = [decode(job) for job in jobs]
    _write_lines(
        [json.dumps(p, sort_keys=True, separators=(",", ":")) for p in payloads],
        args.out,
    )
    print(f"decoded {len(payloads)} records ({mode} mode) to {args.out}")
    return 0


def _read_predictions(path: str) -> dict[str, dict]:
    _require_file(path, "predictions file")
    out: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(payload, dict) or "id" not in payload or "output" not in payload:
                raise DataError(f"{path}: line {lineno}: prediction needs id and output")
            if payload["id"] in out:
                raise DataError(f"{path}: line {lineno}: duplicate id {payload['id']!r}")
            out[payload["id"]] = payload
    return out


def cmd_evaluate(args: argparse.Namespace, cfg: dict) -> int:
    schema = _load_schema(args.schema)
    records = _read_records(args.data, schema)
    predictions = _read_predictions(args.predictions)
    if not records:
        raise UsageError("no records to evaluate")
    record_ids = {r.id for r in records}
    pred_ids = set(predictions)
    if record_ids != pred_ids:
        missing = sorted(record_ids - pred_ids)[:5]
        extra = sorted(pred_ids - record_ids)[:5]
        parts = []
        if missing:
            parts.append(f"ids without predictions: {', '.join(missing)}")
        if extra:
            parts.append(f"predictions without records: {', '.join(extra)}")
        raise UsageError("data and predictions do not match; " + "; ".join(parts))
    hyps = [str(predictions[r.id]["output"]) for r in records]
    refs = [r.reference for r in records]
    report: dict[str, object] = {}
    if "bleu" in cfg["metrics"]:
        report["bleu"] = bleu(refs, hyps)
    if "rouge" in cfg["metrics"]:
        report["rouge_l"] = rouge_l(refs, hyps)
    if "coverage" in cfg["metrics"]:
        report["coverage"] = coverage_report(records, hyps, schema)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out is not None:
        _write_lines([text], args.out)
    return 0


def cmd_ablate(args: argparse.Namespace, cfg: dict) -> int:
    schema = _load_schema(args.schema)
    speaker = _load_speaker(args.speaker, schema)
    vocab = _speaker_vocabulary(speaker)
    records = _read_records(args.data, schema)
    if not records:
        raise UsageError("no records to ablate over")
    delexed = [delexicalize(r, schema) for r in records]
    try:
        config = DecodeConfig(
            beam_size=cfg["beam_size"],
            max_len=cfg["max_len"],
            lambda_=cfg["lambda_"],
            alpha=cfg["alpha"],
            mode=MODE_DISTRACTOR,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    matrix = ablation_matrix(speaker, delexed, schema, vocab, config)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_ablation_csv(matrix, out)
    print(f"wrote {len(matrix)}x{len(next(iter(matrix.values())))} "
          f"coverage matrix to {out}")
    return 0


# ── parser ──────────────────────────────────────────────────────────────────


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file of settings; flags override it")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--workers", type=int, help="parallel decode workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="praggen",
        description="Pragmatic text generation: synthesize data, train "
        "speaker and listener models, decode, and evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="write a synthetic corpus")
    _add_common(synth)
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--train-size", type=int, dest="train_size")
    synth.add_argument("--dev-size", type=int, dest="dev_size")
    synth.add_argument("--test-size", type=int, dest="test_size")
    synth.add_argument("--omission-rate", type=float, dest="omission_rate",
                       help="chance a reference drops an assigned clause")
    synth.add_argument("--grammar", help="JSON grammar replacing the built-in one")

    train = sub.add_parser("train", help="train speaker (and optional listener)")
    _add_common(train)
    train.add_argument("--data", required=True, help="training records (JSONL)")
    train.add_argument("--schema", required=True, help="attribute schema (JSON)")
    train.add_argument("--out", required=True, help="speaker model output path")
    train.add_argument("--order", type=int, help="n-gram order (>= 2)")
    train.add_argument("--k", type=float, help="add-k smoothing constant")
    train.add_argument("--copy-bonus", type=float, dest="copy_bonus",
                       help="log-linear bonus for tokens present in the input")
    train.add_argument("--listener-out", dest="listener_out",
                       help="also train a listener and save it here")
    train.add_argument("--listener-type", dest="listener_type",
                       choices=list(_LISTENER_TYPES))
    train.add_argument("--listener-k", type=float, dest="listener_k")

    gen = sub.add_parser("generate", help="decode inputs to text")
    _add_common(gen)
    gen.add_argument("--data", required=True, help="records to decode (JSONL)")
    gen.add_argument("--speaker", required=True, help="speaker model path")
    gen.add_argument("--schema", required=True, help="attribute schema (JSON)")
    gen.add_argument("--out", required=True, help="predictions output path (JSONL)")
    gen.add_argument("--mode", choices=list(_MODES))
    gen.add_argument("--listener", help="listener model (reconstructor mode)")
    gen.add_argument("--beam-size", type=int, dest="beam_size")
    gen.add_argument("--max-len", type=int, dest="max_len")
    gen.add_argument("--lambda", type=float, dest="lambda_",
                     help="listener weight when reranking")
    gen.add_argument("--alpha", type=float,
                     help="belief weight in distractor decoding")
    gen.add_argument("--distractor-policy", dest="distractor_policy",
                     help="mask-all | mask-single:<attr> | previous-unit | none")
    gen.add_argument("--preset", choices=sorted(_PRESETS),
                     help="decoding preset supplying beam, length, and weights")

    ev = sub.add_parser("evaluate", help="score predictions against references")
    _add_common(ev)
    ev.add_argument("--data", required=True, help="gold records (JSONL)")
    ev.add_argument("--predictions", required=True, help="predictions (JSONL)")
    ev.add_argument("--schema", required=True, help="attribute schema (JSON)")
    ev.add_argument("--metrics", help="comma list from: bleu,rouge,coverage")
    ev.add_argument("--out", help="also write the JSON report here")

    ab = sub.add_parser("ablate", help="attribute-masking coverage matrix")
    _add_common(ab)
    ab.add_argument("--data", required=True, help="records to decode (JSONL)")
    ab.add_argument("--speaker", required=True, help="speaker model path")
    ab.add_argument("--schema", required=True, help="attribute schema (JSON)")
    ab.add_argument("--out", required=True, help="matrix output path (CSV)")
    ab.add_argument("--alpha", type=float)
    ab.add_argument("--beam-size", type=int, dest="beam_size")
    ab.add_argument("--max-len", type=int, dest="max_len")

    return parser


_HANDLERS: dict[str, Callable[[argparse.Namespace, dict], int]] = {
    "synth": cmd_synth,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        cfg = _settings(args)
        return _HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

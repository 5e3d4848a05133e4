"""Corpus machinery: synthetic generation, CSV ingestion, delexicalization.

Randomness comes exclusively from ``random.Random`` (the stdlib Mersenne
Twister), seeded per call, so generated corpora are reproducible across
runs and platforms.

The synthetic grammar exists to manufacture a controllable version of the
restaurant-description task: attribute presence is sampled per input,
values are sampled with a mild frequency skew, and the written reference
independently drops each non-name clause with a small probability. That
omission knob is what makes trained base speakers underinformative in a
measurable way.
"""

from __future__ import annotations

import csv
import json
import random
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .core import (
    KIND_BOOLEAN,
    KIND_CATEGORICAL,
    KIND_DELEXICALIZED,
    AttributeSchema,
    AttributeSpec,
    MeaningRepresentation,
    NAME_PLACEHOLDER,
    NEAR_PLACEHOLDER,
    PLACEHOLDER_TOKENS,
    Vocabulary,
    normalize_words,
    schema_from_dict,
    schema_to_dict,
    validate_mr,
)

# ── records ─────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class CorpusRecord:
    """One aligned (input, reference) pair with delexicalization state."""

    id: str
    mr: MeaningRepresentation
    reference: str
    delex_map: dict[str, str] = field(default_factory=dict)


# ── synthetic grammar ───────────────────────────────────────────────────────


@dataclass(frozen=True)
class SyntheticGrammar:
    """Template grammar over a schema.

    ``templates`` maps categorical and delexicalized attributes to at least
    two ``{v}``-bearing clause templates, which realize the value verbatim.
    Boolean attributes instead carry per-value templates in
    ``boolean_templates``; those realize a phrase from the attribute's
    mention lexicon rather than the literal yes/no value.
    """

    schema: AttributeSchema
    templates: Mapping[str, tuple[str, ...]]
    boolean_templates: Mapping[str, Mapping[str, tuple[str, ...]]]
    value_weights: Mapping[str, tuple[float, ...]]
    surface_pools: Mapping[str, tuple[str, ...]]
    presence: Mapping[str, float]
    omission_rate: float = 0.1
    head_attribute: str = "name"

    def __post_init__(self) -> None:
        if not 0.0 <= self.omission_rate <= 1.0:
            raise ValueError("omission_rate must lie in [0, 1]")
        head = self.schema.attribute(self.head_attribute)
        if head.kind != KIND_DELEXICALIZED:
            raise ValueError("the head attribute must be delexicalized")
        for spec in self.schema:
            if spec.kind == KIND_BOOLEAN:
                per_value = self.boolean_templates.get(spec.name)
                if per_value is None or set(per_value) != set(spec.values):
                    raise ValueError(
                        f"boolean attribute {spec.name!r} needs templates per value"
                    )
                for value, options in per_value.items():
                    if len(options) < 2:
                        raise ValueError(
                            f"attribute {spec.name!r} value {value!r} needs >= 2 templates"
                        )
            else:
                options = self.templates.get(spec.name)
                if options is None or len(options) < 2:
                    raise ValueError(f"attribute {spec.name!r} needs >= 2 templates")
                for tpl in options:
                    if "{v}" not in tpl:
                        raise ValueError(
                            f"template {tpl!r} for {spec.name!r} does not realize the value"
                        )
            if spec.kind == KIND_DELEXICALIZED:
                pool = self.surface_pools.get(spec.name)
                if not pool:
                    raise ValueError(
                        f"delexicalized attribute {spec.name!r} needs a surface pool"
                    )
            if spec.name != self.head_attribute:
                pi = self.presence.get(spec.name)
                if pi is None or not 0.0 <= pi <= 1.0:
                    raise ValueError(
                        f"attribute {spec.name!r} needs a presence probability in [0, 1]"
                    )
            weights = self.value_weights.get(spec.name)
            if spec.kind != KIND_DELEXICALIZED and (
                weights is None or len(weights) != len(spec.values)
            ):
                raise ValueError(
                    f"attribute {spec.name!r} needs one weight per value"
                )

    def sample_mr(self, rng: random.Random) -> MeaningRepresentation:
        """Sample surface-valued assignments; the head is always present."""
        assigned: dict[str, str] = {}
        for spec in self.schema:
            if spec.name == self.head_attribute:
                assigned[spec.name] = rng.choice(self.surface_pools[spec.name])
                continue
            if rng.random() >= self.presence[spec.name]:
                continue
            if spec.kind == KIND_DELEXICALIZED:
                assigned[spec.name] = rng.choice(self.surface_pools[spec.name])
            else:
                weights = self.value_weights[spec.name]
                assigned[spec.name] = rng.choices(list(spec.values), weights=weights)[0]
        return MeaningRepresentation(assigned)

    def realize(self, mr: MeaningRepresentation, rng: random.Random) -> str:
        """Write a reference for ``mr``, dropping non-head clauses at
        ``omission_rate``."""
        head_value = mr.get(self.head_attribute)
        if head_value is None:
            raise ValueError("the head attribute must be assigned")
        head = rng.choice(self.templates[self.head_attribute]).format(v=head_value)
        clauses: list[str] = []
        for spec in self.schema:
            if spec.name == self.head_attribute:
                continue
            value = mr.get(spec.name)
            if value is None:
                continue
            if rng.random() < self.omission_rate:
                continue
            if spec.kind == KIND_BOOLEAN:
                tpl = rng.choice(self.boolean_templates[spec.name][value])
                clauses.append(tpl)
            else:
                clauses.append(rng.choice(self.templates[spec.name]).format(v=value))
        if not clauses:
            clauses = ["a place to eat"]
        if len(clauses) == 1:
            body = clauses[0]
        else:
            body = ", ".join(clauses[:-1]) + " and " + clauses[-1]
        return f"{head} {body} ."


def default_grammar(omission_rate: float = 0.1) -> SyntheticGrammar:
    """The shipped restaurant grammar: eight attributes, skewed values."""
    schema = AttributeSchema(
        attributes=(
            AttributeSpec("name", KIND_DELEXICALIZED, (NAME_PLACEHOLDER,)),
            AttributeSpec(
                "eatType", KIND_CATEGORICAL, ("restaurant", "pub", "coffee shop")
            ),
            AttributeSpec(
                "food",
                KIND_CATEGORICAL,
                ("english", "french", "italian", "japanese", "indian", "chinese"),
            ),
            AttributeSpec("priceRange", KIND_CATEGORICAL, ("cheap", "moderate", "high")),
            AttributeSpec(
                "customerRating",
                KIND_CATEGORICAL,
                ("1 out of 5", "3 out of 5", "5 out of 5"),
            ),
            AttributeSpec("area", KIND_CATEGORICAL, ("riverside", "city centre")),
            AttributeSpec(
                "familyFriendly",
                KIND_BOOLEAN,
                ("yes", "no"),
                lexicon=("family friendly", "family-friendly", "child friendly", "kid friendly"),
            ),
            AttributeSpec("near", KIND_DELEXICALIZED, (NEAR_PLACEHOLDER,)),
        )
    )
    geometric = lambda n: tuple(0.7**i for i in range(n))  # noqa: E731
    return SyntheticGrammar(
        schema=schema,
        templates={
            "name": ("{v} is", "you will find that {v} is"),
            "eatType": ("a {v}", "a lovely {v}"),
            "food": ("serving {v} food", "offering {v} dishes"),
            "priceRange": ("with {v} prices", "in the {v} price bracket"),
            "customerRating": ("rated {v}", "with a rating of {v}"),
            "area": ("in the {v} area", "found in the {v} part of town"),
            "near": ("near {v}", "close to {v}"),
        },
        boolean_templates={
            "familyFriendly": {
                "yes": ("family friendly", "child friendly"),
                "no": ("not family friendly", "not child friendly"),
            }
        },
        value_weights={
            "eatType": geometric(3),
            "food": geometric(6),
            "priceRange": geometric(3),
            "customerRating": geometric(3),
            "area": geometric(2),
            "familyFriendly": geometric(2),
        },
        surface_pools={
            "name": (
                "the copper kettle",
                "rose cottage",
                "the red lion",
                "marble arch diner",
                "willow house",
                "the green door",
                "sunset grill",
                "harbor lights",
            ),
            "near": (
                "the old mill",
                "city gallery",
                "union station",
                "maple square",
                "the corner market",
                "king street bakery",
            ),
        },
        presence={name: 0.8 for name in schema.names() if name != "name"},
        omission_rate=omission_rate,
    )


def generate_corpus(
    grammar: SyntheticGrammar, n: int, seed: int, id_prefix: str = "syn"
) -> list[CorpusRecord]:
    """Sample ``n`` aligned records with a Mersenne Twister seeded at ``seed``."""
    if n < 0:
        raise ValueError("corpus size must be non-negative")
    rng = random.Random(seed)
    records = []
    for i in range(n):
        mr = grammar.sample_mr(rng)
        records.append(
            CorpusRecord(
                id=f"{id_prefix}-{i:05d}",
                mr=mr,
                reference=grammar.realize(mr, rng),
            )
        )
    return records


# ── grammar serialization ───────────────────────────────────────────────────


def grammar_to_dict(grammar: SyntheticGrammar) -> dict:
    return {
        "schema": schema_to_dict(grammar.schema),
        "templates": {k: list(v) for k, v in grammar.templates.items()},
        "boolean_templates": {
            k: {val: list(tpls) for val, tpls in v.items()}
            for k, v in grammar.boolean_templates.items()
        },
        "value_weights": {k: list(v) for k, v in grammar.value_weights.items()},
        "surface_pools": {k: list(v) for k, v in grammar.surface_pools.items()},
        "presence": dict(grammar.presence),
        "omission_rate": grammar.omission_rate,
        "head_attribute": grammar.head_attribute,
    }


def grammar_from_dict(payload: Mapping) -> SyntheticGrammar:
    return SyntheticGrammar(
        schema=schema_from_dict(payload["schema"]),
        templates={k: tuple(v) for k, v in payload.get("templates", {}).items()},
        boolean_templates={
            k: {val: tuple(tpls) for val, tpls in v.items()}
            for k, v in payload.get("boolean_templates", {}).items()
        },
        value_weights={
            k: tuple(float(x) for x in v)
            for k, v in payload.get("value_weights", {}).items()
        },
        surface_pools={k: tuple(v) for k, v in payload.get("surface_pools", {}).items()},
        presence={k: float(v) for k, v in payload.get("presence", {}).items()},
        omission_rate=float(payload.get("omission_rate", 0.1)),
        head_attribute=payload.get("head_attribute", "name"),
    )


def load_grammar(path: str | Path) -> SyntheticGrammar:
    with open(path, encoding="utf-8") as fh:
        return grammar_from_dict(json.load(fh))


# ── E2E-style CSV ingestion ─────────────────────────────────────────────────

_CLAUSE_RE = re.compile(r"\s*([^\[\]]+?)\s*\[\s*(.*?)\s*\]\s*$")


def _resolve_value(spec: AttributeSpec, raw: str, where: str) -> str:
    if spec.kind == KIND_DELEXICALIZED:
        if not raw:
            raise ValueError(f"{where}: empty value for attribute {spec.name!r}")
        return raw
    lowered = raw.strip().lower()
    for v in spec.values:
        if v.lower() == lowered:
            return v
    raise ValueError(
        f"{where}: value {raw!r} is not allowed for attribute {spec.name!r}"
    )


def parse_mr_text(mr_text: str, schema: AttributeSchema, where: str) -> MeaningRepresentation:
    """Parse ``attr[value], attr[value]`` syntax against ``schema``."""
    assignments: dict[str, str] = {}
    text = mr_text.strip()
    if not text:
        return MeaningRepresentation({})
    for part in text.split(","):
        m = _CLAUSE_RE.match(part)
        if m is None:
            raise ValueError(f"{where}: malformed MR clause {part.strip()!r}")
        try:
            attr = schema.resolve_name(m.group(1))
        except KeyError:
            raise ValueError(
                f"{where}: unknown attribute {m.group(1).strip()!r}"
            ) from None
        if attr in assignments:
            raise ValueError(f"{where}: attribute {attr!r} assigned twice")
        assignments[attr] = _resolve_value(schema.attribute(attr), m.group(2), where)
    return MeaningRepresentation(assignments)


def parse_e2e_csv(path: str | Path, schema: AttributeSchema) -> list[CorpusRecord]:
    """Read a two-column quoted CSV of (mr, ref) rows with a header."""
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("CSV file is empty") from None
        if [h.strip().lower() for h in header[:2]] != ["mr", "ref"]:
            raise ValueError(f"unexpected CSV header {header!r}; expected mr,ref")
        for idx, row in enumerate(reader):
            where = f"row {reader.line_num}"
            if len(row) < 2:
                raise ValueError(f"{where}: expected two columns, got {len(row)}")
            mr = parse_mr_text(row[0], schema, where)
            ref = row[1].strip()
            if not ref:
                raise ValueError(f"{where}: empty reference")
            records.append(CorpusRecord(id=f"e2e-{idx:05d}", mr=mr, reference=ref))
    return records


# ── delexicalization ────────────────────────────────────────────────────────


def _replace_surface(text: str, surface: str, replacement: str) -> str:
    pattern = r"(?<!\w)" + re.escape(surface) + r"(?!\w)"
    return re.sub(pattern, replacement, text, flags=re.IGNORECASE)


def delexicalize(record: CorpusRecord, schema: AttributeSchema) -> CorpusRecord:
    """Replace delexicalized attributes' surfaces with their placeholders.

    Both the MR value and its occurrences in the reference are rewritten;
    the original surfaces are kept in ``delex_map`` for relexicalization.
    Attributes already carrying their placeholder are left alone.
    """
    assignments = dict(record.mr.assignments)
    text = record.reference
    mapping = dict(record.delex_map)
    for spec in schema:
        if spec.kind != KIND_DELEXICALIZED:
            continue
        value = assignments.get(spec.name)
        if value is None or value == spec.placeholder:
            continue
        text = _replace_surface(text, value, spec.placeholder)
        mapping[spec.placeholder] = value
        assignments[spec.name] = spec.placeholder
    return CorpusRecord(
        id=record.id,
        mr=MeaningRepresentation(assignments),
        reference=text,
        delex_map=mapping,
    )


def relexicalize(text: str, delex_map: Mapping[str, str]) -> str:
    """Substitute original surfaces back for placeholder tokens.

    Placeholders without a mapping are left verbatim with a warning.
    """
    out = text
    for placeholder in sorted(delex_map):
        out = _replace_surface(out, placeholder, delex_map[placeholder])
    for leftover in sorted(PLACEHOLDER_TOKENS):
        if re.search(r"(?<!\w)" + leftover + r"(?!\w)", out):
            warnings.warn(f"unmapped placeholder {leftover} left in output")
    return out


# ── JSONL records ───────────────────────────────────────────────────────────

_RECORD_KEYS = {"id", "mr", "ref", "delex"}


def write_jsonl(records: Iterable[CorpusRecord], path: str | Path) -> None:
    lines = []
    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            raise ValueError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        lines.append(
            json.dumps(
                {
                    "id": rec.id,
                    "mr": dict(rec.mr.assignments),
                    "ref": rec.reference,
                    "delex": dict(rec.delex_map),
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_jsonl(path: str | Path, schema: AttributeSchema | None = None) -> list[CorpusRecord]:
    """Load records, validating shape (and the MR against ``schema`` if given)."""
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(payload, dict) or set(payload) != _RECORD_KEYS:
                raise ValueError(
                    f"line {lineno}: record must have exactly the keys "
                    f"{sorted(_RECORD_KEYS)}"
                )
            rec_id = payload["id"]
            if not isinstance(rec_id, str) or not rec_id:
                raise ValueError(f"line {lineno}: id must be a non-empty string")
            if rec_id in seen:
                raise ValueError(f"line {lineno}: duplicate record id {rec_id!r}")
            seen.add(rec_id)
            mr = MeaningRepresentation(payload["mr"])
            if schema is not None:
                try:
                    validate_mr(mr, schema)
                except ValueError as exc:
                    raise ValueError(f"line {lineno}: {exc}") from None
            records.append(
                CorpusRecord(
                    id=rec_id,
                    mr=mr,
                    reference=payload["ref"],
                    delex_map=dict(payload["delex"]),
                )
            )
    return records


# ── vocabulary assembly ─────────────────────────────────────────────────────


def build_corpus_vocabulary(
    records: Iterable[CorpusRecord], schema: AttributeSchema
) -> Vocabulary:
    """Vocabulary over schema tokens plus every reference token.

    Records should already be delexicalized so proper nouns stay out of
    the vocabulary and placeholders stay in it.
    """
    tokens: list[str] = schema.tokens()
    for rec in records:
        tokens.extend(normalize_words(rec.reference))
    return Vocabulary.build(tokens)

import json

import pytest

from praggen.cli import main
from praggen.data import read_jsonl, write_jsonl


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """A small synthetic corpus with a trained speaker and listener."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert (
        run(
            "synth", "--out", data,
            "--train-size", 60, "--dev-size", 12, "--test-size", 8, "--seed", 5,
        )
        == 0
    )
    assert (
        run(
            "train",
            "--data", data / "train.jsonl",
            "--schema", data / "schema.json",
            "--out", root / "model" / "speaker.json",
            "--listener-out", root / "model" / "listener.json",
        )
        == 0
    )
    return {
        "root": root,
        "schema": data / "schema.json",
        "train": data / "train.jsonl",
        "dev": data / "dev.jsonl",
        "speaker": root / "model" / "speaker.json",
        "listener": root / "model" / "listener.json",
    }


def outputs_of(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line)["output"] for line in fh]


# ── argument plumbing ────────────────────────────────────────────────────────


def test_no_command_is_a_usage_error():
    assert main([]) == 2


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == 0
    assert "synth" in capsys.readouterr().out


def test_unknown_mode_is_rejected_by_the_parser(ws, tmp_path):
    rc = run(
        "generate", "--data", ws["dev"], "--speaker", ws["speaker"],
        "--schema", ws["schema"], "--out", tmp_path / "p.jsonl",
        "--mode", "telepathy",
    )
    assert rc == 2


# ── synth ────────────────────────────────────────────────────────────────────


def test_synth_writes_all_splits(ws):
    for split, size in (("train", 60), ("dev", 12), ("test", 8)):
        records = read_jsonl(ws["root"] / "data" / f"{split}.jsonl")
        assert len(records) == size
        assert records[0].id == f"{split}-00000"
    schema_payload = json.loads(ws["schema"].read_text(encoding="utf-8"))
    assert {a["name"] for a in schema_payload["attributes"]} >= {"name", "food"}


def test_synth_reruns_are_byte_identical(ws, tmp_path):
    args = ["--train-size", 60, "--dev-size", 12, "--test-size", 8, "--seed", 5]
    assert run("synth", "--out", tmp_path / "again", *args) == 0
    for name in ("train.jsonl", "dev.jsonl", "test.jsonl", "schema.json"):
        assert (tmp_path / "again" / name).read_bytes() == (
            ws["root"] / "data" / name
        ).read_bytes()


def test_synth_seed_changes_the_corpus(ws, tmp_path):
    assert (
        run(
            "synth", "--out", tmp_path / "other",
            "--train-size", 60, "--dev-size", 12, "--test-size", 8, "--seed", 6,
        )
        == 0
    )
    assert (tmp_path / "other" / "train.jsonl").read_bytes() != (
        ws["train"]
    ).read_bytes()


def test_synth_validates_settings(tmp_path):
    assert run("synth", "--out", tmp_path, "--omission-rate", 1.5) == 2
    assert run("synth", "--out", tmp_path, "--train-size", -3) == 2
    assert run("synth", "--out", tmp_path, "--grammar", tmp_path / "nope.json") == 2
    bad = tmp_path / "bad_grammar.json"
    bad.write_text("{}", encoding="utf-8")
    assert run("synth", "--out", tmp_path, "--grammar", bad) == 3


# ── train ────────────────────────────────────────────────────────────────────


def test_train_is_deterministic(ws, tmp_path):
    rc = run(
        "train", "--data", ws["train"], "--schema", ws["schema"],
        "--out", tmp_path / "speaker.json",
        "--listener-out", tmp_path / "listener.json",
    )
    assert rc == 0
    assert (tmp_path / "speaker.json").read_bytes() == ws["speaker"].read_bytes()
    assert (tmp_path / "listener.json").read_bytes() == ws["listener"].read_bytes()


def test_train_reverse_listener(ws, tmp_path):
    rc = run(
        "train", "--data", ws["train"], "--schema", ws["schema"],
        "--out", tmp_path / "speaker.json",
        "--listener-out", tmp_path / "rev.json", "--listener-type", "reverse",
    )
    assert rc == 0
    assert (tmp_path / "rev.json").is_file()
    assert (tmp_path / "rev.model.json").is_file()


def test_train_input_errors(ws, tmp_path):
    missing = tmp_path / "missing.jsonl"
    assert run("train", "--data", missing, "--schema", ws["schema"],
               "--out", tmp_path / "m.json") == 2

    malformed = tmp_path / "malformed.jsonl"
    malformed.write_text("{not json\n", encoding="utf-8")
    assert run("train", "--data", malformed, "--schema", ws["schema"],
               "--out", tmp_path / "m.json") == 3

    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    assert run("train", "--data", empty, "--schema", ws["schema"],
               "--out", tmp_path / "m.json") == 2

    assert run("train", "--data", ws["train"], "--schema", ws["schema"],
               "--out", tmp_path / "m.json", "--order", 1) == 2


# ── generate ─────────────────────────────────────────────────────────────────


def test_generate_base_decode(ws, tmp_path):
    out = tmp_path / "base.jsonl"
    rc = run("generate", "--data", ws["dev"], "--speaker", ws["speaker"],
             "--schema", ws["schema"], "--out", out)
    assert rc == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 12
    payloads = [json.loads(line) for line in lines]
    assert [p["id"] for p in payloads] == [r.id for r in read_jsonl(ws["dev"])]
    for p in payloads:
        assert set(p) == {"id", "output", "base_logprob"}
        assert p["output"].strip()


def test_generate_reruns_and_worker_counts_agree(ws, tmp_path):
    args = ["generate", "--data", ws["dev"], "--speaker", ws["speaker"],
            "--schema", ws["schema"]]
    one, again, par = (tmp_path / n for n in ("w1.jsonl", "w1b.jsonl", "w8.jsonl"))
    assert run(*args, "--out", one, "--workers", 1) == 0
    assert run(*args, "--out", again, "--workers", 1) == 0
    assert run(*args, "--out", par, "--workers", 8) == 0
    assert one.read_bytes() == again.read_bytes() == par.read_bytes()


def test_generate_reduction_identities(ws, tmp_path):
    common = ["generate", "--data", ws["dev"], "--speaker", ws["speaker"],
              "--schema", ws["schema"]]
    base, rec, dist = (tmp_path / n for n in ("b.jsonl", "r.jsonl", "d.jsonl"))
    assert run(*common, "--out", base) == 0
    assert run(*common, "--out", rec, "--mode", "reconstructor",
               "--listener", ws["listener"], "--lambda", 0.0) == 0
    assert run(*common, "--out", dist, "--mode", "distractor", "--alpha", 0.0,
               "--distractor-policy", "mask-all") == 0
    assert outputs_of(base) == outputs_of(rec) == outputs_of(dist)


def test_generate_distractor_modes_run(ws, tmp_path):
    common = ["generate", "--data", ws["dev"], "--speaker", ws["speaker"],
              "--schema", ws["schema"], "--mode", "distractor", "--alpha", 1.0]
    for policy in ("mask-all", "mask-single:food", "previous-unit", "none"):
        assert run(*common, "--out", tmp_path / f"{policy.split(':')[0]}.jsonl",
                   "--distractor-policy", policy) == 0


def test_generate_usage_errors(ws, tmp_path):
    out = tmp_path / "p.jsonl"
    common = ["generate", "--data", ws["dev"], "--speaker", ws["speaker"],
              "--schema", ws["schema"], "--out", out]
    assert run(*common, "--mode", "reconstructor") == 2
    assert run(*common, "--mode", "distractor",
               "--distractor-policy", "mask-single:cuisine") == 2
    assert run(*common, "--distractor-policy", "mask-all") == 2
    assert run(*common, "--beam-size", 0) == 2
    assert run("generate", "--data", ws["dev"], "--speaker", tmp_path / "no.json",
               "--schema", ws["schema"], "--out", out) == 2


def test_generate_config_file_resolution(ws, tmp_path):
    out = tmp_path / "p.jsonl"
    common = ["generate", "--data", ws["dev"], "--speaker", ws["speaker"],
              "--schema", ws["schema"], "--out", out]

    unknown = tmp_path / "unknown.json"
    unknown.write_text('{"beam_width": 5}', encoding="utf-8")
    assert run(*common, "--config", unknown) == 2

    invalid = tmp_path / "invalid.json"
    invalid.write_text('{"beam_size": 0}', encoding="utf-8")
    assert run(*common, "--config", invalid) == 2
    # an explicit flag outranks the config file
    assert run(*common, "--config", invalid, "--beam-size", 3) == 0

    aliased = tmp_path / "aliased.json"
    aliased.write_text('{"lambda": 0.25, "mode": "reconstructor"}', encoding="utf-8")
    assert run(*common, "--config", aliased, "--listener", ws["listener"]) == 0

    assert run(*common, "--config", tmp_path / "absent.json") == 2


def test_generate_presets(ws, tmp_path):
    rc = run("generate", "--data", ws["dev"], "--speaker", ws["speaker"],
             "--schema", ws["schema"], "--out", tmp_path / "p.jsonl",
             "--preset", "mr")
    assert rc == 0


# ── evaluate ─────────────────────────────────────────────────────────────────


def echo_predictions(records, path):
    lines = [
        json.dumps({"id": r.id, "output": r.reference}, sort_keys=True)
        for r in records
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_evaluate_self_scores_perfectly(ws, tmp_path, capsys):
    preds = tmp_path / "echo.jsonl"
    echo_predictions(read_jsonl(ws["dev"]), preds)
    rc = run("evaluate", "--data", ws["dev"], "--predictions", preds,
             "--schema", ws["schema"], "--out", tmp_path / "report.json")
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["bleu"] == 100.0
    assert report["rouge_l"] == 1.0
    assert set(report) == {"bleu", "rouge_l", "coverage"}
    assert "macro" in report["coverage"]
    on_disk = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert on_disk == report


def test_evaluate_metric_subset(ws, tmp_path, capsys):
    preds = tmp_path / "echo.jsonl"
    echo_predictions(read_jsonl(ws["dev"]), preds)
    rc = run("evaluate", "--data", ws["dev"], "--predictions", preds,
             "--schema", ws["schema"], "--metrics", "bleu")
    assert rc == 0
    assert set(json.loads(capsys.readouterr().out)) == {"bleu"}
    rc = run("evaluate", "--data", ws["dev"], "--predictions", preds,
             "--schema", ws["schema"], "--metrics", "accuracy")
    assert rc == 2


def test_evaluate_requires_matching_ids(ws, tmp_path, capsys):
    records = read_jsonl(ws["dev"])
    short = tmp_path / "short.jsonl"
    echo_predictions(records[:-1], short)
    assert run("evaluate", "--data", ws["dev"], "--predictions", short,
               "--schema", ws["schema"]) == 2
    assert "ids without predictions" in capsys.readouterr().err

    renamed = tmp_path / "renamed.jsonl"
    lines = [json.dumps({"id": "ghost-1", "output": "x ."})]
    lines += [json.dumps({"id": r.id, "output": r.reference}) for r in records[1:]]
    renamed.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert run("evaluate", "--data", ws["dev"], "--predictions", renamed,
               "--schema", ws["schema"]) == 2


def test_evaluate_rejects_bad_prediction_files(ws, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{oops\n", encoding="utf-8")
    assert run("evaluate", "--data", ws["dev"], "--predictions", bad,
               "--schema", ws["schema"]) == 3

    wrong = tmp_path / "wrong.jsonl"
    wrong.write_text('{"id": "dev-00000"}\n', encoding="utf-8")
    assert run("evaluate", "--data", ws["dev"], "--predictions", wrong,
               "--schema", ws["schema"]) == 3

    dupe = tmp_path / "dupe.jsonl"
    line = json.dumps({"id": "dev-00000", "output": "x ."})
    dupe.write_text(line + "\n" + line + "\n", encoding="utf-8")
    assert run("evaluate", "--data", ws["dev"], "--predictions", dupe,
               "--schema", ws["schema"]) == 3


def test_evaluate_rejects_empty_data(ws, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    assert run("evaluate", "--data", empty, "--predictions", empty,
               "--schema", ws["schema"]) == 2


# ── ablate ───────────────────────────────────────────────────────────────────


def test_ablate_writes_a_deterministic_matrix(ws, tmp_path):
    sample = tmp_path / "sample.jsonl"
    write_jsonl(read_jsonl(ws["dev"])[:5], sample)
    first, second = tmp_path / "m1.csv", tmp_path / "m2.csv"
    args = ["ablate", "--data", sample, "--speaker", ws["speaker"],
            "--schema", ws["schema"], "--alpha", 1.0, "--beam-size", 5]
    assert run(*args, "--out", first) == 0
    assert run(*args, "--out", second) == 0
    content = first.read_text(encoding="utf-8")
    assert content == second.read_text(encoding="utf-8")
    lines = content.strip().splitlines()
    header = lines[0].split(",")
    assert header[0] == "condition"
    measured = header[1:]
    assert len(measured) == 6
    assert [line.split(",")[0] for line in lines[1:]] == ["BASE", *measured]


def test_ablate_rejects_empty_data(ws, tmp_path):
    empty = tmp_path / "none.jsonl"
    empty.write_text("", encoding="utf-8")
    assert run("ablate", "--data", empty, "--speaker", ws["speaker"],
               "--schema", ws["schema"], "--out", tmp_path / "m.csv") == 2

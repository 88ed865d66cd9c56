import json

import pytest

from juris.cli import main


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert main(["synth", "--out", str(d), "--num-queries", "20", "--seed", "3"]) == 0
    return d


def _pipeline(data, out, seed="5"):
    """index -> train-gen -> infer -> rank(features) -> train-scorer -> rank -> eval."""
    c, q, r, t = (str(data / n) for n in ("corpus.jsonl", "queries.jsonl", "qrels.tsv", "taxonomy.json"))
    o = lambda n: str(out / n)  # noqa: E731
    steps = [
        ["index", "--corpus", c, "--out", o("index.json")],
        ["train-gen", "--corpus", c, "--taxonomy", t, "--out", o("gen.json")],
        ["infer", "--gen", o("gen.json"), "--queries", q, "--taxonomy", t, "--out", o("ind.jsonl")],
        ["rank", "--corpus", c, "--queries", q, "--index", o("index.json"), "--indicators", o("ind.jsonl"),
         "--taxonomy", t, "--kind", "rule", "--qrels", r, "--threshold", "3",
         "--features-out", o("features.tsv"), "--out", o("rule.run")],
        ["train-scorer", "--features", o("features.tsv"), "--qrels", r, "--threshold", "3",
         "--epochs", "5", "--seed", seed, "--out", o("scorer.json")],
        ["rank", "--corpus", c, "--queries", q, "--indicators", o("ind.jsonl"), "--taxonomy", t,
         "--scorer", o("scorer.json"), "--threads", "3", "--out", o("mlp.run")],
        ["eval", "--run", o("mlp.run"), "--qrels", r, "--threshold", "3", "--compare", o("rule.run"),
         "--iterations", "500", "--out", o("report.json")],
        ["shapley", "--model", o("scorer.json"), "--features", o("features.tsv"), "--qrels", r,
         "--threshold", "3", "--out", o("shap.tsv"), "--summary-out", o("importance.tsv")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv


def test_full_pipeline_is_byte_deterministic(data_dir, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    _pipeline(data_dir, a)
    _pipeline(data_dir, b)
    for name in ("report.json", "mlp.run", "shap.tsv", "scorer.json", "features.tsv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    report = json.loads((a / "report.json").read_text())
    assert set(report["comparison"]["p_values"]) >= {"MAP", "MRR@5"}
    header = (a / "shap.tsv").read_text().splitlines()[0].split("\t")
    assert header == ["qid", "docid", "phi_v1", "phi_v2", "phi_v3", "phi_v4", "phi_v5", "base", "value"]


def test_eval_default_report_path(data_dir, tmp_path, monkeypatch):
    run = tmp_path / "r.tsv"
    run.write_text("q0000\tx\t1.0\n")
    monkeypatch.chdir(tmp_path)
    assert main(["eval", "--run", str(run), "--qrels", str(data_dir / "qrels.tsv"), "--threshold", "3"]) == 0
    assert (tmp_path / "report.json").exists()


def test_usage_errors(capsys):
    assert main(["bogus"]) == 2
    assert "usage" in capsys.readouterr().err
    assert main(["eval"]) == 2
    assert main([]) == 2


def test_data_error_leaves_no_outputs(tmp_path, capsys):
    bad = tmp_path / "corpus.jsonl"
    bad.write_text('{"id": "d1", "text": "a"}\n{oops\n')
    assert main(["index", "--corpus", str(bad), "--out", str(tmp_path / "idx.json")]) == 1
    assert ":2" in capsys.readouterr().err
    assert sorted(p.name for p in tmp_path.iterdir()) == ["corpus.jsonl"]


def test_missing_input_is_data_error(tmp_path):
    assert main(["index", "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "i")]) == 1


def test_config_file_and_flag_precedence(data_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k1": 2.0, "b": 0.5, "tokenizer": "cjk"}))
    c = str(data_dir / "corpus.jsonl")
    assert main(["index", "--config", str(cfg), "--corpus", c, "--out", str(tmp_path / "a.json")]) == 0
    assert main(["index", "--config", str(cfg), "--k1", "0.9", "--corpus", c, "--out", str(tmp_path / "b.json")]) == 0
    a = json.loads((tmp_path / "a.json").read_text())
    b = json.loads((tmp_path / "b.json").read_text())
    assert (a["k1"], a["b"], a["tokenizer"]["mode"]) == (2.0, 0.5, "cjk-bigram-hybrid")
    assert b["k1"] == 0.9


def test_seed_env_fallback(data_dir, tmp_path, monkeypatch):
    feats = tmp_path / "f.tsv"
    c, q, r = (str(data_dir / n) for n in ("corpus.jsonl", "queries.jsonl", "qrels.tsv"))
    assert main(["rank", "--corpus", c, "--queries", q, "--kind", "rule", "--qrels", r, "--threshold", "3",
                 "--features-out", str(feats), "--out", str(tmp_path / "run")]) == 0
    common = ["train-scorer", "--features", str(feats), "--qrels", r, "--threshold", "3", "--epochs", "1"]
    monkeypatch.setenv("JURIS_SEED", "11")
    assert main(common + ["--out", str(tmp_path / "env.json")]) == 0
    monkeypatch.delenv("JURIS_SEED")
    assert main(common + ["--seed", "11", "--out", str(tmp_path / "flag.json")]) == 0
    assert main(common + ["--out", str(tmp_path / "zero.json")]) == 0
    env, flag, zero = ((tmp_path / n).read_bytes() for n in ("env.json", "flag.json", "zero.json"))
    assert env == flag != zero


def test_distill_render_and_ingest(tmp_path, write_lines):
    corpus = write_lines("c.jsonl", [{"id": "d1", "text": "took a phone", "charges": ["theft"]},
                                     {"id": "d2", "text": "fake contract", "charges": ["fraud"]}])
    assert main(["distill", "render", "--corpus", str(corpus), "--out", str(tmp_path / "prompts")]) == 0
    assert sorted(p.name for p in (tmp_path / "prompts").iterdir()) == ["d1.txt", "d2.txt"]
    resp = tmp_path / "responses"
    resp.mkdir()
    (resp / "d1.txt").write_text('Here: {"legal_elements": ["secret taking", "movable property", "intent"]}')
    (resp / "d2.txt").write_text('{"legal_elements": ["deception", "three years imprisonment"]}')
    assert main(["distill", "ingest", "--corpus", str(corpus), "--responses", str(resp),
                 "--out", str(tmp_path / "silver.jsonl"), "--rejects", str(tmp_path / "rej.jsonl")]) == 0
    silver = [json.loads(x) for x in (tmp_path / "silver.jsonl").read_text().splitlines()]
    rejects = [json.loads(x) for x in (tmp_path / "rej.jsonl").read_text().splitlines()]
    assert [d["id"] for d in silver] == ["d1"] and len(silver[0]["elements"]) == 3
    assert rejects[0]["rejection_reason"] == "sentencing-leakage"


def test_ablate_and_sweep_synthetic(tmp_path):
    assert main(["ablate", "--synthetic", "--num-queries", "20", "--variants", "full,rule-based",
                 "--epochs", "2", "--out", str(tmp_path / "abl.tsv"), "--figure", str(tmp_path / "abl.png")]) == 0
    lines = (tmp_path / "abl.tsv").read_text().splitlines()
    assert lines[0].split("\t")[0] == "variant" and len(lines) == 3
    assert (tmp_path / "abl.png").stat().st_size > 0
    assert main(["ablate", "--synthetic", "--variants", "nonsense", "--out", str(tmp_path / "x")]) == 2
    assert main(["sweep", "--synthetic", "--num-queries", "20", "--ratios", "1.0,0.5", "--epochs", "2",
                 "--out", str(tmp_path / "sweep.tsv")]) == 0
    rows = [ln.split("\t") for ln in (tmp_path / "sweep.tsv").read_text().splitlines()]
    assert rows[0] == ["Ratio", "MAP", "P@3", "R@5", "Hits@5", "MRR@5"]
    assert [r[0] for r in rows[1:]] == ["0.5", "1"]
    assert main(["sweep", "--synthetic", "--ratios", "0,2", "--out", str(tmp_path / "y")]) == 2

import json
import shutil
from pathlib import Path

import pytest
import yaml

from contribscope.cli import main
from contribscope.report import AnalysisSettings, build_report
from contribscope import analytics as an
from contribscope.scoring import OutputDistribution

from conftest import GOLDEN, context, paper, write_jsonl

STAGES = ["ingest", "classify", "parse-credit", "score", "report"]


def make_config(tmp_path, papers, contexts, **extra):
    cfg = {"input": {"papers": str(papers), "contexts": str(contexts)}, "run": {"out": "out"}}
    for section, values in extra.items():
        cfg.setdefault(section, {}).update(values)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def run(config, *commands, flags=()):
    codes = []
    for c in commands:
        codes.append(main([c, "--config", str(config), *flags]))
    return codes


def golden_config(tmp_path, **extra):
    return make_config(tmp_path, GOLDEN / "papers.jsonl", GOLDEN / "contexts.jsonl", **extra)


def test_ingest_valid(tmp_path):
    cfg = golden_config(tmp_path)
    assert run(cfg, "ingest") == [0]
    assert (tmp_path / "out" / "rejections.jsonl").read_text() == ""
    manifest = json.loads((tmp_path / "out" / "manifests" / "ingest.json").read_text())
    assert manifest["status"] == "ok" and len(manifest["inputs"]) == 2


def test_ingest_orphan(tmp_path):
    p = write_jsonl(tmp_path / "p.jsonl", [paper("a")])
    c = write_jsonl(tmp_path / "c.jsonl", [context("c1", "a"), context("c2", "missing")])
    assert run(make_config(tmp_path, p, c), "ingest") == [0]
    rejected = [json.loads(x) for x in (tmp_path / "out" / "rejections.jsonl").read_text().splitlines()]
    assert len(rejected) == 1 and rejected[0]["reason"] == "orphan"


def test_missing_papers_file(tmp_path, capsys):
    c = write_jsonl(tmp_path / "c.jsonl", [])
    assert run(make_config(tmp_path, tmp_path / "nope.jsonl", c), "ingest") == [1]
    err = json.loads(capsys.readouterr().err)
    assert "nope.jsonl" in err["message"] and err["exit_code"] == 1


def test_stage_order_enforced(tmp_path, capsys):
    assert run(golden_config(tmp_path), "score") == [1]
    assert "missing intermediate" in capsys.readouterr().err


def _unlabeled_corpus(tmp_path):
    p = write_jsonl(tmp_path / "p.jsonl", [paper("a", statement="L.C. designed the study. J.D. sang a song.")])
    texts = ["In line with the theory of", "We used the protocol described in", "Data were taken from"]
    c = write_jsonl(tmp_path / "c.jsonl", [context(f"c{i}", "a", text=f"{t} [target cited reference].")
                                           for i, t in enumerate(texts)])
    return p, c


def test_classify_lexicon_and_warm_cache(tmp_path, capsys):
    cfg = make_config(tmp_path, *_unlabeled_corpus(tmp_path))
    assert run(cfg, "ingest", "classify") == [0, 0]
    first = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert first["label_counts"] == {"Theoretical": 1, "Methodological": 1, "Experimental": 0,
                                     "Data-based": 1, "Other": 0}
    assert first["backend_calls"] == 3
    labeled = (tmp_path / "out" / "labeled" / "contexts.jsonl").read_bytes()
    assert run(cfg, "classify") == [0]
    second = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert second["backend_calls"] == 0 and second["cache_hits"] == 3
    assert (tmp_path / "out" / "labeled" / "contexts.jsonl").read_bytes() == labeled


def test_classify_dead_endpoint(tmp_path, capsys):
    cfg = make_config(tmp_path, *_unlabeled_corpus(tmp_path),
                      classifier={"backend": "external",
                                  "endpoint": {"url": "http://127.0.0.1:9/classify", "timeout": 1,
                                               "max_retries": 0}})
    assert run(cfg, "ingest", "classify") == [0, 2]
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "backend" and err["unlabeled"] == 3
    assert json.loads((tmp_path / "out" / "manifests" / "classify.json").read_text())["status"] == "failed"


def test_parse_credit(tmp_path, capsys):
    p = write_jsonl(tmp_path / "p.jsonl", [
        paper("a", statement="L.C. designed the study. J.D. sang a song."),
        paper("b", statement="Liyue Chen: Conceptualization\nJielan Ding: Software"),
        paper("c", statement="All authors wrote the manuscript."),
        paper("d"),
    ])
    c = write_jsonl(tmp_path / "c.jsonl", [])
    assert run(make_config(tmp_path, p, c), "ingest", "parse-credit") == [0, 0]
    diag = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert diag["parsed"] == 3 and diag["no_statement"] == 1
    assert diag["structured"] == 1 and diag["unmapped"] == 1
    recs = {r["paper_id"]: r for r in map(json.loads, (tmp_path / "out" / "assignments.jsonl").read_text().splitlines())}
    assert len(recs) == 3
    assert recs["a"]["unmapped"] == ["sang a song"]
    assert recs["b"]["structured"] and recs["b"]["assignments"]["Jielan Ding"] == ["Software"]


def _scores(tmp_path):
    return {r["paper_id"]: r for r in map(json.loads, (tmp_path / "out" / "scores.jsonl").read_text().splitlines())}


def test_score_end_to_end(tmp_path):
    assert run(golden_config(tmp_path), *STAGES[:4]) == [0] * 4
    s = _scores(tmp_path)
    p01 = s["10.1000/p01"]
    assert p01["credit"]["Conceptualization"] == pytest.approx(5 / 6)
    assert p01["credit"]["WritingReviewEditing"] == pytest.approx(7 / 6)
    assert p01["effort_raw"] == pytest.approx([7 / 9, 0, 2 / 9, 1 / 9, 0])
    assert p01["effort_renorm"] == pytest.approx([0.7, 0, 0.2, 0.1, 0])
    no_statement = s["10.1000/p05"]
    assert not no_statement["input_available"] and no_statement["output_available"]
    assert no_statement["effort_raw"] is None
    no_contexts = s["10.1000/p13"]
    assert no_contexts["input_available"] and not no_contexts["output_available"]
    assert no_contexts["output_props"] is None


def test_report_golden_and_resumable(tmp_path):
    cfg = golden_config(tmp_path)
    assert run(cfg, *STAGES) == [0] * 5
    report_path = tmp_path / "out" / "report.json"
    golden = (GOLDEN / "report.json").read_bytes()
    assert report_path.read_bytes() == golden
    report = json.loads(golden)
    assert report["distributions"]["total"] == sum(report["distributions"]["output"]["counts"])
    for name in ("fig2_totals.csv", "fig3_profiles.csv", "fig4_roles.csv", "fig5_cooccurrence.csv"):
        assert (tmp_path / "out" / "csv" / name).exists()
    report_path.unlink()
    shutil.rmtree(tmp_path / "out" / "cache", ignore_errors=True)
    assert run(cfg, "analyze") == [0]
    assert report_path.read_bytes() == golden


def test_flag_overrides_change_report(tmp_path):
    cfg = golden_config(tmp_path)
    run(cfg, *STAGES[:4])
    assert run(cfg, "analyze", flags=["--types", "4", "--norm", "min", "--threshold", "0.3"]) == [0]
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["correlations"]["types"] == ["Theoretical", "Methodological", "Experimental", "Data-based"]
    assert report["cooccurrence"]["threshold"] == 0.3
    assert report["cooccurrence"]["input"]["divisor"] == "min"
    manifest = json.loads((tmp_path / "out" / "manifests" / "analyze.json").read_text())
    assert manifest["config"]["analytics"]["norm"] == "min"


def test_out_flag(tmp_path):
    cfg = golden_config(tmp_path)
    assert run(cfg, "ingest", flags=["--out", str(tmp_path / "elsewhere")]) == [0]
    assert (tmp_path / "elsewhere" / "corpus" / "papers.jsonl").exists()


def test_empty_result_exit_code(tmp_path, capsys):
    p = write_jsonl(tmp_path / "p.jsonl", [paper("a")])
    c = write_jsonl(tmp_path / "c.jsonl", [])
    assert run(make_config(tmp_path, p, c), *STAGES) == [0, 0, 0, 0, 3]
    assert json.loads(capsys.readouterr().err)["error"] == "empty"


@pytest.mark.parametrize("extra, fragment", [
    ({"analytics": {"threshold": 1.5}}, "threshold"),
    ({"run": {"jobs": 0}}, "jobs"),
    ({"analytics": {"norm": "max"}}, "norm"),
    ({"classifier": {"backend": "external"}}, "url"),
    ({"bogus": {"x": 1}}, "unknown config key"),
])
def test_validate_config_errors(tmp_path, capsys, extra, fragment):
    cfg = golden_config(tmp_path, **extra)
    assert run(cfg, "validate-config") == [1]
    assert fragment in json.loads(capsys.readouterr().err)["message"]


def test_validate_config_ok(tmp_path, capsys):
    assert run(golden_config(tmp_path), "validate-config") == [0]
    assert json.loads(capsys.readouterr().out) == {"valid": True}


def test_relative_paths_resolve_against_config(tmp_path):
    shutil.copytree(GOLDEN, tmp_path / "g")
    (tmp_path / "g" / "out").mkdir(exist_ok=True)
    assert run(tmp_path / "g" / "config.yaml", "ingest") == [0]
    assert (tmp_path / "g" / "out" / "corpus" / "contexts.jsonl").exists()


def test_table_totals_through_report():
    counts = (312084, 216933, 867159, 121284, 17007)
    report = build_report([an.PaperAnalytic("agg", output=OutputDistribution(counts))], AnalysisSettings())
    dist = report["distributions"]
    assert dist["total"] == 1534467
    assert [round(100 * p, 2) for p in dist["output"]["proportions"]] == [20.34, 14.14, 56.51, 7.90, 1.11]

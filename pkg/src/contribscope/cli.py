"""Command-line pipeline: ingest -> classify -> parse-credit -> score -> analyze/report.

Every stage reads and writes line-delimited JSON under the output directory:

    corpus/papers.jsonl, corpus/contexts.jsonl, rejections.jsonl   (ingest)
    labeled/contexts.jsonl, classification_stats.json, cache/      (classify)
    assignments.jsonl, credit_diagnostics.json                     (parse-credit)
    scores.jsonl                                                   (score)
    report.json, csv/*.csv                                         (analyze, report)
    manifests/<command>.json                                       (every command)

Exit codes: 0 success, 1 validation error, 2 backend failure, 3 empty result.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .analytics import PaperAnalytic
from .classifier import (
    ClassificationCache,
    ClassificationIncomplete,
    CueLexicon,
    ExternalBackend,
    LexiconBackend,
    classify_corpus,
)
from .config import ConfigError, PipelineConfig, load_config
from .corpus import Corpus, CorpusError, load_corpus, read_jsonl, save_corpus, write_jsonl
from .credit import AuthorRoleAssignment, RoleLexicon, parse_statement
from .report import build_report, dumps_fixed, write_csv_exports
from .scoring import (
    EMPTY_OUTPUT,
    EffortMapping,
    OutputDistribution,
    PaperScores,
    input_effort_distribution,
    role_credit_scores,
)

logger = logging.getLogger("contribscope")

EXIT_OK, EXIT_VALIDATION, EXIT_BACKEND, EXIT_EMPTY = 0, 1, 2, 3


class StageError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION, **details):
        super().__init__(message)
        self.code = code
        self.details = details


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Layout:
    def __init__(self, out: Path):
        self.out = Path(out)
        self.papers = self.out / "corpus" / "papers.jsonl"
        self.contexts = self.out / "corpus" / "contexts.jsonl"
        self.rejections = self.out / "rejections.jsonl"
        self.labeled = self.out / "labeled" / "contexts.jsonl"
        self.class_stats = self.out / "classification_stats.json"
        self.cache = self.out / "cache"
        self.assignments = self.out / "assignments.jsonl"
        self.credit_diag = self.out / "credit_diagnostics.json"
        self.scores = self.out / "scores.jsonl"
        self.report = self.out / "report.json"
        self.csv = self.out / "csv"
        self.manifests = self.out / "manifests"

    def require(self, *paths: Path) -> None:
        for p in paths:
            if not p.exists():
                raise StageError(f"missing intermediate {p}; run the earlier stage first", path=str(p))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", "utf-8")


class Manifest:
    def __init__(self, command: str, cfg: PipelineConfig):
        self.command = command
        self.cfg = cfg
        self.started = time.perf_counter()
        self.stages: dict[str, dict] = {}
        self.inputs: dict[str, str] = {}
        self.warnings: dict[str, int] = {}

    def digest(self, *paths: Path) -> None:
        for p in paths:
            if p is not None and p.exists():
                self.inputs[str(p)] = _sha256(p)

    def stage(self, name: str, seconds: float, **counts) -> None:
        self.stages[name] = {"seconds": round(seconds, 6), **counts}

    def write(self, layout: Layout, status: str) -> None:
        _write_json(layout.manifests / f"{self.command}.json", {
            "command": self.command,
            "status": status,
            "tool_version": __version__,
            "config": self.cfg.snapshot(),
            "inputs": self.inputs,
            "stages": self.stages,
            "warnings": self.warnings,
            "seconds": round(time.perf_counter() - self.started, 6),
        })


def _load_snapshot(layout: Layout, contexts_path: Path) -> Corpus:
    corpus, report = load_corpus(layout.papers, contexts_path)
    if report.rejections:
        raise StageError(f"snapshot {contexts_path} has {len(report.rejections)} invalid records", path=str(contexts_path))
    return corpus


# -- stages -------------------------------------------------------------------


def cmd_ingest(cfg: PipelineConfig, man: Manifest) -> dict:
    layout = Layout(cfg.out)
    t0 = time.perf_counter()
    try:
        corpus, report = load_corpus(cfg.papers, cfg.contexts)
    except CorpusError as exc:
        raise StageError(str(exc)) from None
    save_corpus(corpus, layout.papers, layout.contexts)
    write_jsonl(layout.rejections, (r.to_json() for r in report.rejections))
    man.digest(cfg.papers, cfg.contexts)
    man.warnings.update(report.warnings)
    summary = {
        "papers": len(corpus.papers),
        "contexts": corpus.n_contexts,
        "input_lines": report.input_lines,
        "accepted": report.accepted,
        "rejected": len(report.rejections),
        "warnings": report.warnings,
    }
    man.stage("ingest", time.perf_counter() - t0, **{k: v for k, v in summary.items() if k != "warnings"})
    return summary


def _backend(cfg: PipelineConfig):
    if cfg.backend == "external":
        return ExternalBackend(cfg.endpoint)
    lexicon = CueLexicon.from_csv(cfg.cue_lexicon) if cfg.cue_lexicon else CueLexicon.default()
    return LexiconBackend(lexicon)


def cmd_classify(cfg: PipelineConfig, man: Manifest, backend=None) -> dict:
    layout = Layout(cfg.out)
    layout.require(layout.papers, layout.contexts)
    corpus = _load_snapshot(layout, layout.contexts)
    backend = backend or _backend(cfg)
    cache = ClassificationCache(layout.cache)
    t0 = time.perf_counter()
    man.digest(layout.papers, layout.contexts, cfg.cue_lexicon)
    try:
        labeled, stats = classify_corpus(corpus, backend, cache, jobs=cfg.jobs)
        failure = None
    except ClassificationIncomplete as exc:
        labeled, stats, failure = exc.corpus, exc.stats, exc
    save_corpus(labeled, layout.papers, layout.labeled)
    result = dict(stats.to_json(), backend=backend.backend_id)
    _write_json(layout.class_stats, result)
    man.stage("classify", time.perf_counter() - t0, backend_calls=stats.backend_calls,
              cache_hits=stats.cache_hits, unlabeled=stats.unlabeled)
    logger.info("classify: %d backend calls, %d cache hits", stats.backend_calls, stats.cache_hits)
    if failure is not None:
        raise StageError(f"classifier backend unavailable: {failure}", EXIT_BACKEND, unlabeled=stats.unlabeled)
    return result


def _parse_one(args):
    paper, lexicon = args
    if not paper.contribution_statement:
        return paper, None
    return paper, parse_statement(paper, lexicon)


def cmd_parse_credit(cfg: PipelineConfig, man: Manifest) -> dict:
    layout = Layout(cfg.out)
    layout.require(layout.papers, layout.contexts)
    corpus = _load_snapshot(layout, layout.contexts)
    lexicon = RoleLexicon.from_csv(cfg.role_lexicon) if cfg.role_lexicon else RoleLexicon.default()
    man.digest(layout.papers, cfg.role_lexicon)
    t0 = time.perf_counter()
    papers = list(corpus.papers.values())
    work = [(p, lexicon) for p in papers]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            parsed = list(pool.map(_parse_one, work))
    else:
        parsed = [_parse_one(w) for w in work]
    records = []
    diag = {"no_statement": 0, "parsed": 0, "structured": 0, "sentences": 0, "triples": 0,
            "residue": 0, "unmapped": 0, "ambiguous": 0, "empty_assignment": 0}
    for paper, assignment in parsed:
        if assignment is None:
            diag["no_statement"] += 1
            continue
        records.append(assignment.to_json(paper.authors))
        diag["parsed"] += 1
        diag["structured"] += assignment.structured
        diag["sentences"] += assignment.n_sentences
        diag["triples"] += len(assignment.triples)
        diag["residue"] += len(assignment.residue)
        diag["unmapped"] += len(assignment.unmapped)
        diag["ambiguous"] += len(assignment.ambiguous)
        diag["empty_assignment"] += assignment.is_empty
    write_jsonl(layout.assignments, records)
    _write_json(layout.credit_diag, diag)
    man.stage("parse-credit", time.perf_counter() - t0, **diag)
    return diag


def _mapping(cfg: PipelineConfig) -> EffortMapping:
    if cfg.mapping is None:
        return EffortMapping.default()
    try:
        return EffortMapping.from_json(cfg.mapping)
    except (OSError, ValueError) as exc:
        raise StageError(f"invalid mapping override {cfg.mapping}: {exc}", path=str(cfg.mapping)) from None


def _load_assignments(layout: Layout, corpus: Corpus) -> dict[str, AuthorRoleAssignment]:
    out = {}
    for rec in read_jsonl(layout.assignments):
        paper = corpus.papers.get(rec["paper_id"])
        if paper is None:
            raise StageError(f"assignment for unknown paper {rec['paper_id']}", path=str(layout.assignments))
        out[paper.paper_id] = AuthorRoleAssignment.from_json(rec, paper.authors)
    return out


def cmd_score(cfg: PipelineConfig, man: Manifest) -> dict:
    layout = Layout(cfg.out)
    layout.require(layout.papers, layout.labeled, layout.assignments)
    corpus = _load_snapshot(layout, layout.labeled)
    assignments = _load_assignments(layout, corpus)
    mapping = _mapping(cfg)
    man.digest(layout.papers, layout.labeled, layout.assignments, cfg.mapping)
    t0 = time.perf_counter()
    records = []
    counts = {"papers": 0, "input_available": 0, "output_available": 0, "no_statement": 0, "unlabeled_contexts": 0}
    for pid, paper in corpus.papers.items():
        labeled = [c for c in corpus.contexts_of(pid) if c.label is not None]
        unlabeled = len(corpus.contexts_of(pid)) - len(labeled)
        counts_vec = [0] * 5
        for c in labeled:
            counts_vec[c.label.index] += 1
        output = OutputDistribution(tuple(counts_vec)) if labeled else EMPTY_OUTPUT
        assignment = assignments.get(pid)
        credit = effort = None
        if assignment is not None:
            credit = role_credit_scores(assignment, len(paper.authors))
            effort = input_effort_distribution(credit, mapping)
        ps = PaperScores(pid, credit, effort, output, assignment is not None, unlabeled)
        rec = ps.to_json()
        records.append(rec)
        counts["papers"] += 1
        counts["input_available"] += rec["input_available"]
        counts["output_available"] += rec["output_available"]
        counts["no_statement"] += assignment is None
        counts["unlabeled_contexts"] += unlabeled
    write_jsonl(layout.scores, records)
    man.stage("score", time.perf_counter() - t0, **counts)
    return counts


def cmd_analyze(cfg: PipelineConfig, man: Manifest) -> dict:
    layout = Layout(cfg.out)
    layout.require(layout.papers, layout.labeled, layout.assignments, layout.scores)
    corpus = _load_snapshot(layout, layout.labeled)
    assignments = _load_assignments(layout, corpus)
    man.digest(layout.papers, layout.labeled, layout.assignments, layout.scores)
    t0 = time.perf_counter()
    papers = []
    for rec in read_jsonl(layout.scores):
        ps = PaperScores.from_json(rec)
        paper = corpus.papers.get(ps.paper_id)
        if paper is None:
            raise StageError(f"scores for unknown paper {ps.paper_id}", path=str(layout.scores))
        a = assignments.get(ps.paper_id)
        papers.append(PaperAnalytic(
            paper_id=ps.paper_id,
            disciplines=paper.disciplines,
            output=ps.output,
            effort=ps.effort,
            credit=ps.credit,
            roles=dict(a.roles) if a else {},
        ))
    if not any(p.input_defined or p.output_defined for p in papers):
        raise StageError("no paper has a defined input or output distribution", EXIT_EMPTY)
    report = build_report(papers, cfg.analysis, _mapping(cfg))
    layout.report.write_text(dumps_fixed(report), "utf-8")
    man.stage("analyze", time.perf_counter() - t0, papers=len(papers))
    return report


def cmd_report(cfg: PipelineConfig, man: Manifest) -> dict:
    report = cmd_analyze(cfg, man)
    written = write_csv_exports(report, Layout(cfg.out).csv)
    man.stage("export", 0.0, files=len(written))
    return report


def cmd_validate_config(cfg: PipelineConfig, man: Manifest) -> dict:
    if cfg.cue_lexicon:
        CueLexicon.from_csv(cfg.cue_lexicon)
    if cfg.role_lexicon:
        RoleLexicon.from_csv(cfg.role_lexicon)
    _mapping(cfg)
    return {"valid": True}


COMMANDS = {
    "ingest": cmd_ingest,
    "classify": cmd_classify,
    "parse-credit": cmd_parse_credit,
    "score": cmd_score,
    "analyze": cmd_analyze,
    "report": cmd_report,
    "validate-config": cmd_validate_config,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contribscope", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--backend", choices=("lexicon", "external"))
        sp.add_argument("--threshold", type=float)
        sp.add_argument("--types", type=int, choices=(4, 5))
        sp.add_argument("--norm", choices=("cosine", "min"))
        sp.add_argument("--jobs", type=int)
    return ap


def _overrides(args) -> dict:
    o: dict = {}
    if args.out is not None:
        o.setdefault("run", {})["out"] = str(args.out.resolve())
    if args.jobs is not None:
        o.setdefault("run", {})["jobs"] = args.jobs
    if args.backend is not None:
        o.setdefault("classifier", {})["backend"] = args.backend
    if args.threshold is not None:
        o.setdefault("analytics", {})["threshold"] = args.threshold
    if args.types is not None:
        o.setdefault("analytics", {}).update(correlation_types=args.types, cooccurrence_types=args.types)
    if args.norm is not None:
        o.setdefault("analytics", {})["norm"] = args.norm
    return o


def _fail(code: int, kind: str, message: str, **details) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": message, **details}, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        cfg.validate()
    except ConfigError as exc:
        details = {"path": exc.path} if exc.path else {}
        return _fail(EXIT_VALIDATION, "config", str(exc), **details)

    man = Manifest(args.command, cfg)
    layout = Layout(cfg.out)
    try:
        result = COMMANDS[args.command](cfg, man)
    except StageError as exc:
        if args.command != "validate-config":
            man.write(layout, "failed")
        kind = {EXIT_BACKEND: "backend", EXIT_EMPTY: "empty"}.get(exc.code, "validation")
        return _fail(exc.code, kind, str(exc), **exc.details)
    except (ValueError, OSError) as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc))
    if args.command != "validate-config":
        man.write(layout, "ok")
    if args.command not in ("analyze", "report"):
        print(json.dumps(result, sort_keys=True))
    else:
        print(str(layout.report))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

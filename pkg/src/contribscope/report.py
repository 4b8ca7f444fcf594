"""Analysis report assembly and byte-stable serialization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import analytics as an
from .corpus import CONTRIBUTION_TYPES
from .scoring import EMPTY_OUTPUT, EffortMapping

FLOAT_DIGITS = 6


@dataclass(frozen=True)
class AnalysisSettings:
    threshold: float = an.DEFAULT_THRESHOLD
    correlation_types: int = 5
    cooccurrence_types: int = 4
    norm: str = "cosine"
    disciplines: Optional[tuple[str, ...]] = None


def dumps_fixed(obj, indent: int = 2) -> str:
    """JSON with every float written with exactly six decimals."""
    return _dump(obj, indent, 0) + "\n"


def _dump(obj, indent, level) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite float in report: {obj}")
        text = f"{obj:.{FLOAT_DIGITS}f}"
        return "0.000000" if text == "-0.000000" else text
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_dump(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(v is None or isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_dump(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _dump(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _corr(res: an.CorrelationResult) -> dict:
    return {"method": res.method, "r": res.r, "p": res.p, "n": res.n}


def _matrix(m: an.CooccurrenceMatrix, nm: an.NormalizedMatrix) -> dict:
    return {
        "types": [t.value for t in m.types],
        "counts": [list(row) for row in m.counts],
        "normalized": [list(row) for row in nm.values],
        "divisor": nm.divisor,
    }


def _profile(gp: an.GroupProfile) -> dict:
    return {
        "group_by": gp.group_by,
        "profile": gp.profile_of,
        "columns": list(gp.columns),
        "baseline": list(gp.baseline),
        "n_eligible": gp.n_eligible,
        "group_sizes": {t.value: n for t, n in gp.group_sizes.items()},
        "groups": {
            t.value: {"n": row["n"], "mean": row["mean"], "normalized": row["normalized"]}
            for t, row in gp.rows.items()
        },
    }


def _dist(d) -> dict:
    return {"counts": list(d.counts), "total": d.total, "proportions": list(d.proportions) if d.defined else None}


def _attempt(diag: dict, section: str, fn):
    try:
        return fn()
    except ValueError as exc:
        diag.setdefault("skipped_sections", {})[section] = str(exc)
        return None


def build_report(papers: Sequence[an.PaperAnalytic], settings: AnalysisSettings = AnalysisSettings(),
                 mapping: Optional[EffortMapping] = None, diagnostics: Optional[dict] = None) -> dict:
    """Run every analysis over ``papers``; sections that cannot be computed become null."""
    mapping = mapping or EffortMapping.default()
    papers = sorted(papers, key=lambda p: p.paper_id)
    diag = dict(diagnostics or {})
    with_input = [p for p in papers if p.input_defined]
    with_output = [p for p in papers if p.output_defined]
    both = [p for p in papers if p.input_defined and p.output_defined]
    diag.update({
        "n_papers": len(papers),
        "n_input_defined": len(with_input),
        "n_output_defined": len(with_output),
        "n_both_defined": len(both),
        "n_empty_assignment": sum(1 for p in papers if p.effort is not None and not p.effort.defined),
    })

    pooled_output = EMPTY_OUTPUT
    for p in papers:
        if p.output is not None:
            pooled_output = pooled_output + p.output
    mean_input = an._mean([list(p.effort.renormalized) for p in with_input]) if with_input else None
    distributions = {
        "types": [t.value for t in CONTRIBUTION_TYPES],
        "output": _dist(pooled_output),
        "total": pooled_output.total,
        "input": {"n_papers": len(with_input), "mean_renormalized": mean_input},
    }

    k = settings.correlation_types
    pairs = [(p.effort.renormalized, p.output.proportions) for p in both]
    pooled = _attempt(diag, "correlations.pooled", lambda: an.pooled_correlation(pairs, k))
    per_paper = _attempt(diag, "correlations.per_paper", lambda: an.per_paper_correlation(pairs, k))
    correlations = {
        "types": [t.value for t in an.type_set(k)],
        "pooled": _corr(pooled) if pooled else None,
        "per_paper": dict(_corr(per_paper.summary), n_undefined=per_paper.n_undefined) if per_paper else None,
    }

    group_profiles = {}
    for group_by, profile_of in (("dominant_input", "output_5"), ("dominant_output", "input_5")):
        key = f"{group_by}:{profile_of}"
        gp = _attempt(diag, f"group_profiles.{key}", lambda: an.normalized_group_profile(papers, group_by, profile_of, k))
        group_profiles[key] = _profile(gp) if gp else None
        if gp:
            diag.setdefault("dominant_ties", {})[key] = gp.ties
    role_gp = _attempt(diag, "role_profiles", lambda: an.normalized_group_profile(papers, "dominant_output", "roles_14", k))
    if role_gp:
        diag.setdefault("dominant_ties", {})["dominant_output:roles_14"] = role_gp.ties

    kc = settings.cooccurrence_types
    m_in = an.input_cooccurrence((p.roles for p in with_input), mapping, kc)
    m_out = an.output_cooccurrence((p.output for p in with_output), settings.threshold, kc)
    cooccurrence = {
        "threshold": settings.threshold,
        "input": _matrix(m_in, an.normalize_diagonal(m_in, settings.norm)),
        "output": _matrix(m_out, an.normalize_diagonal(m_out, settings.norm)),
    }

    share_in = _attempt(diag, "multi_type_share.input",
                        lambda: an.multi_type_share([p.roles for p in with_input], "input", mapping, k=kc))
    share_out = _attempt(diag, "multi_type_share.output",
                         lambda: an.multi_type_share([p.output for p in with_output], "output",
                                                     threshold=settings.threshold, k=kc))
    multi = {
        "input": share_in,
        "output": share_out,
        "n_input": len(with_input),
        "n_output": len(with_output),
    }

    disciplines = {tag: _dist(d) for tag, d in an.discipline_breakdown(papers, settings.disciplines).items()}

    return {
        "distributions": distributions,
        "correlations": correlations,
        "group_profiles": group_profiles,
        "role_profiles": _profile(role_gp) if role_gp else None,
        "cooccurrence": cooccurrence,
        "multi_type_share": multi,
        "disciplines": disciplines,
        "diagnostics": dict(sorted(diag.items())),
    }


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.{FLOAT_DIGITS}f}"
    return v


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_csv_exports(report: dict, directory) -> list[Path]:
    """One CSV per report section; fig*.csv are the plot-data files."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, header, rows):
        path = d / name
        _write_csv(path, header, rows)
        written.append(path)

    dist = report["distributions"]
    out_props = dist["output"]["proportions"] or [None] * 5
    in_props = dist["input"]["mean_renormalized"] or [None] * 5
    emit("fig2_totals.csv", ["type", "output_count", "output_share", "input_share"],
         [(t, c, o, i) for t, c, o, i in zip(dist["types"], dist["output"]["counts"], out_props, in_props)])

    rows = []
    for key, gp in report["group_profiles"].items():
        if gp is None:
            continue
        for group, g in gp["groups"].items():
            for col, mean, norm in zip(gp["columns"], g["mean"], g["normalized"]):
                rows.append((gp["group_by"], gp["profile"], group, g["n"], col, mean, norm))
    emit("fig3_profiles.csv", ["group_by", "profile", "group", "n", "column", "mean", "normalized"], rows)

    rows = []
    rp = report["role_profiles"]
    if rp is not None:
        for group, g in rp["groups"].items():
            for col, mean, norm in zip(rp["columns"], g["mean"], g["normalized"]):
                rows.append((group, g["n"], col, mean, norm))
    emit("fig4_roles.csv", ["group", "n", "role", "mean", "normalized"], rows)

    rows = []
    for perspective in ("input", "output"):
        m = report["cooccurrence"][perspective]
        for i, a in enumerate(m["types"]):
            for j, b in enumerate(m["types"]):
                rows.append((perspective, a, b, m["counts"][i][j], m["normalized"][i][j]))
    emit("fig5_cooccurrence.csv", ["perspective", "type_a", "type_b", "count", "strength"], rows)

    rows = []
    for name, res in report["correlations"].items():
        if name == "types" or res is None:
            continue
        rows.append((res["method"], res["r"], res["p"], res["n"]))
    emit("correlations.csv", ["method", "r", "p", "n"], rows)

    share = report["multi_type_share"]
    emit("multi_type_share.csv", ["perspective", "share", "n_eligible"],
         [("input", share["input"], share["n_input"]), ("output", share["output"], share["n_output"])])

    rows = []
    for tag, dd in report["disciplines"].items():
        props = dd["proportions"] or [None] * 5
        for t, c, p in zip(dist["types"], dd["counts"], props):
            rows.append((tag, t, c, p))
    emit("disciplines.csv", ["discipline", "type", "count", "proportion"], rows)

    rows = [(k, json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v)
            for k, v in report["diagnostics"].items()]
    emit("diagnostics.csv", ["key", "value"], rows)
    return written


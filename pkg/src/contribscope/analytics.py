"""Corpus-level statistics relating input effort to output contribution."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from scipy.special import betainc

from .corpus import ANALYTIC_TYPES, CONTRIBUTION_TYPES, CREDIT_ROLES, ContributionType
from .scoring import (
    CreditScoreTable,
    EffortDistribution,
    EffortMapping,
    OutputDistribution,
    contribution_types_for_role,
    role_share_vector,
)

DEFAULT_THRESHOLD = 0.15


def type_set(k: int) -> tuple[ContributionType, ...]:
    if k == 4:
        return ANALYTIC_TYPES
    if k == 5:
        return CONTRIBUTION_TYPES
    raise ValueError(f"type set must be 4 or 5, got {k}")


# -- correlation --------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationResult:
    r: Optional[float]
    p: Optional[float]
    n: int
    method: str = "pooled"

    @property
    def defined(self) -> bool:
        return self.r is not None


def _flat(values: Sequence[float]) -> bool:
    hi, lo = max(values), min(values)
    return hi - lo <= 1e-12 * max(1.0, abs(hi), abs(lo))


def t_test_p(r: float, n: int) -> Optional[float]:
    """Two-sided p for H0: rho = 0 with df = n - 2, through the regularized incomplete beta."""
    if n < 4:
        return None
    df = n - 2
    if abs(r) >= 1.0:
        return 0.0
    t2 = r * r * df / (1.0 - r * r)
    return float(betainc(df / 2.0, 0.5, df / (df + t2)))


def pearson(x: Sequence[float], y: Sequence[float], method: str = "pooled") -> CorrelationResult:
    """Product-moment correlation. Zero variance gives an undefined result, not an error."""
    n = len(x)
    if n != len(y):
        raise ValueError(f"length mismatch: {n} vs {len(y)}")
    if n < 2:
        raise ValueError("need at least two observations")
    if _flat(x) or _flat(y):
        return CorrelationResult(None, None, n, method)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [a - mx for a in x]
    dy = [b - my for b in y]
    sxy = math.fsum(a * b for a, b in zip(dx, dy))
    sxx = math.fsum(a * a for a in dx)
    syy = math.fsum(b * b for b in dy)
    r = sxy / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    return CorrelationResult(r, t_test_p(r, n), n, method)


def _pairs(papers, k: int):
    idx = [t.index for t in type_set(k)]
    for effort, output in papers:
        yield [effort[i] for i in idx], [output[i] for i in idx]


def pooled_correlation(papers: Iterable[tuple[Sequence[float], Sequence[float]]], k: int = 5) -> CorrelationResult:
    """One sample of all (paper, type) cells: renormalized effort vs. output share."""
    xs, ys = [], []
    for x, y in _pairs(papers, k):
        xs.extend(x)
        ys.extend(y)
    if not xs:
        raise ValueError("no eligible papers")
    if len(xs) < 2:
        return CorrelationResult(None, None, len(xs), "pooled")
    return pearson(xs, ys, method="pooled")


@dataclass(frozen=True)
class PerPaperCorrelation:
    summary: CorrelationResult
    per_paper: tuple[CorrelationResult, ...]
    n_undefined: int


def per_paper_correlation(papers, k: int = 5) -> PerPaperCorrelation:
    """Mean of within-paper r over the type cells; papers with undefined r are skipped.

    The summary p is the mean of the defined per-paper p values and ``n`` is
    the number of papers with a defined r.
    """
    results = tuple(pearson(x, y, method="per_paper") for x, y in _pairs(papers, k))
    defined = [res for res in results if res.defined]
    if not defined:
        raise ValueError("no paper has a defined correlation")
    ps = [res.p for res in defined if res.p is not None]
    summary = CorrelationResult(
        math.fsum(res.r for res in defined) / len(defined),
        math.fsum(ps) / len(ps) if ps else None,
        len(defined),
        "per_paper_mean",
    )
    return PerPaperCorrelation(summary, results, len(results) - len(defined))


# -- dominant type and the co-type rule ----------------------------------------


def _argmax(values: Sequence) -> int:
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def is_tied(dist: Sequence) -> bool:
    top = max(dist)
    return sum(1 for v in dist if v == top) > 1


def dominant_type(dist: Optional[Sequence[float]]) -> ContributionType:
    """Argmax over the five types; ties go to the earlier type in canonical order."""
    if dist is None or len(dist) != len(CONTRIBUTION_TYPES) or not sum(dist) > 0:
        raise ValueError("distribution is undefined")
    return CONTRIBUTION_TYPES[_argmax(dist)]


def _exact(v) -> Fraction:
    # floats go through their shortest repr so 0.35 means 7/20, not its binary neighbour
    if isinstance(v, float):
        return Fraction(repr(v))
    return Fraction(v)


def _exact_vector(dist) -> list[Fraction]:
    if isinstance(dist, OutputDistribution):
        if not dist.defined:
            raise ValueError("distribution is undefined")
        return [Fraction(c, dist.total) for c in dist.counts]
    if dist is None:
        raise ValueError("distribution is undefined")
    return [_exact(v) for v in dist]


def output_cotypes(dist, threshold: float = DEFAULT_THRESHOLD) -> frozenset:
    """The dominant type plus every type trailing it by strictly less than ``threshold``.

    Proportions are compared in exact arithmetic so a gap of exactly 0.15
    is excluded however the proportions were rounded in binary.
    """
    values = _exact_vector(dist)
    if len(values) != len(CONTRIBUTION_TYPES) or not sum(values) > 0:
        raise ValueError("distribution is undefined")
    limit = _exact(threshold)
    top = _argmax(values)
    return frozenset(
        CONTRIBUTION_TYPES[i] for i, v in enumerate(values) if i == top or values[top] - v < limit
    )


def author_effort_types(roles: Iterable, mapping: Optional[EffortMapping] = None) -> frozenset:
    mapping = mapping or EffortMapping.default()
    out = set()
    for r in roles:
        out |= contribution_types_for_role(r, mapping)
    return frozenset(out)


# -- co-occurrence ------------------------------------------------------------


@dataclass
class CooccurrenceMatrix:
    types: tuple[ContributionType, ...]
    counts: list[list[int]]
    perspective: str

    @classmethod
    def zeros(cls, types, perspective) -> "CooccurrenceMatrix":
        k = len(types)
        return cls(tuple(types), [[0] * k for _ in range(k)], perspective)

    def add_set(self, members: Iterable[ContributionType]) -> bool:
        """Count one multi-type unit; sets smaller than two are ignored."""
        idx = sorted(self.types.index(t) for t in set(members) if t in self.types)
        if len(idx) < 2:
            return False
        for a in idx:
            self.counts[a][a] += 1
            for b in idx:
                if b != a:
                    self.counts[a][b] += 1
        return True

    def __getitem__(self, pair: tuple[ContributionType, ContributionType]) -> int:
        a, b = pair
        return self.counts[self.types.index(a)][self.types.index(b)]


def _role_maps(assignments) -> Iterable[Mapping]:
    for a in assignments:
        yield getattr(a, "roles", a)


def input_cooccurrence(assignments, mapping: Optional[EffortMapping] = None, k: int = 4) -> CooccurrenceMatrix:
    """One unit per author whose roles span two or more of the analysed types."""
    mapping = mapping or EffortMapping.default()
    m = CooccurrenceMatrix.zeros(type_set(k), "input")
    for roles_by_author in _role_maps(assignments):
        for roles in roles_by_author.values():
            m.add_set(author_effort_types(roles, mapping))
    return m


def output_cooccurrence(dists, threshold: float = DEFAULT_THRESHOLD, k: int = 4) -> CooccurrenceMatrix:
    """One unit per paper whose co-type set has two or more of the analysed types."""
    m = CooccurrenceMatrix.zeros(type_set(k), "output")
    for d in dists:
        m.add_set(output_cotypes(d, threshold))
    return m


@dataclass(frozen=True)
class NormalizedMatrix:
    types: tuple[ContributionType, ...]
    values: tuple[tuple[Optional[float], ...], ...]
    divisor: str


def normalize_diagonal(m: CooccurrenceMatrix, divisor: str = "cosine") -> NormalizedMatrix:
    """Co-occurrence strength: M_ij / sqrt(M_ii M_jj), or M_ij / min(M_ii, M_jj) with ``divisor='min'``.

    Entries with a zero diagonal on either side are None.
    """
    if divisor not in ("cosine", "min"):
        raise ValueError(f"unknown divisor {divisor!r}")
    c = m.counts
    k = len(c)
    rows = []
    for i in range(k):
        row = []
        for j in range(k):
            if c[i][i] <= 0 or c[j][j] <= 0:
                row.append(None)
            elif divisor == "cosine":
                row.append(c[i][j] / math.sqrt(c[i][i] * c[j][j]))
            else:
                row.append(c[i][j] / min(c[i][i], c[j][j]))
        rows.append(tuple(row))
    return NormalizedMatrix(m.types, tuple(rows), divisor)


def has_multi_type_author(roles_by_author: Mapping, mapping: Optional[EffortMapping] = None, k: int = 4) -> bool:
    types = set(type_set(k))
    return any(len(author_effort_types(r, mapping) & types) >= 2 for r in roles_by_author.values())


def multi_type_share(items, perspective: str, mapping: Optional[EffortMapping] = None,
                     threshold: float = DEFAULT_THRESHOLD, k: int = 4) -> float:
    """Share of eligible papers with co-occurring contribution types.

    ``input``: items are per-paper role maps; a paper counts when any author's
    roles span two or more analysed types. Papers with no credited author are
    not eligible. ``output``: items are output distributions; a paper counts
    when its co-type set holds two or more analysed types.
    """
    types = set(type_set(k))
    eligible = hits = 0
    if perspective == "input":
        for roles_by_author in _role_maps(items):
            if not any(roles_by_author.values()):
                continue
            eligible += 1
            hits += has_multi_type_author(roles_by_author, mapping, k)
    elif perspective == "output":
        for d in items:
            if isinstance(d, OutputDistribution) and not d.defined:
                continue
            eligible += 1
            hits += len(output_cotypes(d, threshold) & types) >= 2
    else:
        raise ValueError(f"unknown perspective {perspective!r}")
    if not eligible:
        raise ValueError("no eligible papers")
    return hits / eligible


# -- group profiles -----------------------------------------------------------


@dataclass(frozen=True)
class PaperAnalytic:
    """Everything the analytics need about one paper."""

    paper_id: str
    disciplines: tuple[str, ...] = ()
    output: Optional[OutputDistribution] = None
    effort: Optional[EffortDistribution] = None
    credit: Optional[CreditScoreTable] = None
    roles: Mapping = field(default_factory=dict)

    @property
    def input_defined(self) -> bool:
        return self.effort is not None and self.effort.defined

    @property
    def output_defined(self) -> bool:
        return self.output is not None and self.output.defined


GROUP_BY = ("dominant_input", "dominant_output")
PROFILES = ("output_5", "input_5", "roles_14")


def _grouping_vector(p: PaperAnalytic, group_by: str):
    if group_by == "dominant_input":
        return p.effort.renormalized if p.input_defined else None
    if group_by == "dominant_output":
        return p.output.proportions if p.output_defined else None
    raise ValueError(f"unknown grouping {group_by!r}")


def _profile_vector(p: PaperAnalytic, profile_of: str, idx: Sequence[int]):
    if profile_of == "output_5":
        return [p.output.proportions[i] for i in idx] if p.output_defined else None
    if profile_of == "input_5":
        return [p.effort.renormalized[i] for i in idx] if p.input_defined else None
    if profile_of == "roles_14":
        return list(role_share_vector(p.credit)) if p.input_defined and p.credit is not None else None
    raise ValueError(f"unknown profile {profile_of!r}")


def _mean(vectors: list) -> list[float]:
    n = len(vectors)
    return [math.fsum(col) / n for col in zip(*vectors)]


@dataclass(frozen=True)
class GroupProfile:
    group_by: str
    profile_of: str
    columns: tuple[str, ...]
    baseline: tuple[float, ...]
    rows: Mapping[ContributionType, dict]
    group_sizes: Mapping[ContributionType, int]
    n_eligible: int
    ties: int


def normalized_group_profile(papers: Iterable[PaperAnalytic], group_by: str, profile_of: str, k: int = 5) -> GroupProfile:
    """Mean profile per dominant-type group divided by the all-paper mean profile.

    Every eligible paper joins exactly one group (including Other), and all of
    them form the baseline; the Other group is left out of ``rows``. Baseline
    components equal to zero give None entries.
    """
    types = type_set(k)
    idx = [t.index for t in types]
    if profile_of == "roles_14":
        columns = tuple(r.label for r in CREDIT_ROLES)
    else:
        columns = tuple(t.value for t in types)
    members: dict[ContributionType, list] = {t: [] for t in CONTRIBUTION_TYPES}
    ties = 0
    for p in papers:
        grouping = _grouping_vector(p, group_by)
        profile = _profile_vector(p, profile_of, idx)
        if grouping is None or profile is None:
            continue
        ties += is_tied(grouping)
        members[dominant_type(grouping)].append(profile)
    everyone = [v for vs in members.values() for v in vs]
    if not everyone:
        raise ValueError("no eligible papers")
    baseline = _mean(everyone)
    rows = {}
    for t in types:
        if t is ContributionType.OTHER or not members[t]:
            continue
        mean = _mean(members[t])
        rows[t] = {
            "n": len(members[t]),
            "mean": mean,
            "normalized": [m / b if b > 0 else None for m, b in zip(mean, baseline)],
        }
    return GroupProfile(
        group_by, profile_of, columns, tuple(baseline), rows,
        {t: len(v) for t, v in members.items()}, len(everyone), ties,
    )


def discipline_breakdown(papers: Iterable[PaperAnalytic], tags: Optional[Iterable[str]] = None) -> dict[str, OutputDistribution]:
    """Pooled output distribution per discipline tag; a multi-tag paper counts under each tag."""
    wanted = set(tags) if tags is not None else None
    out: dict[str, OutputDistribution] = {}
    for p in papers:
        if p.output is None:
            continue
        for tag in p.disciplines:
            if wanted is not None and tag not in wanted:
                continue
            out[tag] = out[tag] + p.output if tag in out else p.output
    return dict(sorted(out.items()))

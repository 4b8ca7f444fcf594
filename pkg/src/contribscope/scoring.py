"""Per-paper input-effort and output-contribution distributions.

Input side: each author spreads one unit of credit evenly over the roles they
hold (fractional counting), role credits are summed into contribution types
through an :class:`EffortMapping`, and divided by the author count. Because
Investigation feeds two types, the raw vector can sum past 1; a renormalized
view is provided next to it.

Output side: every labeled citation context counts once for its type.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .corpus import CONTRIBUTION_TYPES, CREDIT_ROLES, CitationContext, ContributionType, CreditRole

T, M, E, D, O = CONTRIBUTION_TYPES
R = CreditRole

DEFAULT_TYPE_ROLES = {
    T: frozenset({R.CONCEPTUALIZATION, R.WRITING_ORIGINAL_DRAFT, R.WRITING_REVIEW_EDITING}),
    M: frozenset({R.METHODOLOGY, R.SOFTWARE}),
    E: frozenset({R.FORMAL_ANALYSIS, R.INVESTIGATION, R.VALIDATION, R.VISUALIZATION}),
    D: frozenset({R.DATA_CURATION, R.INVESTIGATION, R.RESOURCES}),
    O: frozenset({R.FUNDING_ACQUISITION, R.PROJECT_ADMINISTRATION, R.SUPERVISION}),
}


@dataclass(frozen=True)
class EffortMapping:
    sets: Mapping[ContributionType, frozenset]

    def __post_init__(self):
        if set(self.sets) != set(CONTRIBUTION_TYPES):
            raise ValueError("mapping must cover exactly the five contribution types")
        covered = frozenset().union(*self.sets.values())
        missing = [r.label for r in CREDIT_ROLES if r not in covered]
        if missing:
            raise ValueError(f"roles not mapped to any type: {', '.join(missing)}")

    @classmethod
    def default(cls) -> "EffortMapping":
        return cls(dict(DEFAULT_TYPE_ROLES))

    @classmethod
    def from_json(cls, path) -> "EffortMapping":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError("mapping file must hold a JSON object")
        return cls({ContributionType.parse(k): frozenset(CreditRole.parse(r) for r in v) for k, v in raw.items()})

    def roles_for(self, ctype: ContributionType) -> frozenset:
        return self.sets[ctype]


def contribution_types_for_role(role: CreditRole, mapping: Optional[EffortMapping] = None) -> frozenset:
    mapping = mapping or EffortMapping.default()
    return frozenset(t for t in CONTRIBUTION_TYPES if role in mapping.sets[t])


@dataclass(frozen=True)
class CreditScoreTable:
    credit: Mapping[CreditRole, float]
    n_authors: int
    n_credited: int

    def __getitem__(self, role: CreditRole) -> float:
        return self.credit.get(role, 0.0)


def role_credit_scores(assignment, n_authors: int) -> CreditScoreTable:
    """Fractional role credit: each author adds 1/D_a to each of their D_a roles.

    ``assignment`` is a mapping author index -> role set, or anything with a
    ``roles`` attribute holding one.
    """
    roles_by_author = getattr(assignment, "roles", assignment)
    credit = {r: 0.0 for r in CREDIT_ROLES}
    credited = 0
    for author, roles in roles_by_author.items():
        if not 0 <= author < n_authors:
            raise ValueError(f"author index {author} outside 0..{n_authors - 1}")
        if not roles:
            continue
        credited += 1
        share = 1.0 / len(roles)
        for r in roles:
            credit[r] += share
    return CreditScoreTable(credit, n_authors, credited)


@dataclass(frozen=True)
class EffortDistribution:
    raw: tuple[float, ...]
    renormalized: Optional[tuple[float, ...]]
    n_authors: int
    n_credited: int

    @property
    def defined(self) -> bool:
        return self.renormalized is not None


def input_effort_distribution(scores: CreditScoreTable, mapping: Optional[EffortMapping] = None) -> EffortDistribution:
    mapping = mapping or EffortMapping.default()
    if scores.n_authors <= 0:
        raise ValueError("paper has no authors")
    raw = tuple(sum(scores[r] for r in mapping.sets[t]) / scores.n_authors for t in CONTRIBUTION_TYPES)
    total = sum(raw)
    renorm = tuple(x / total for x in raw) if total > 0 else None
    return EffortDistribution(raw, renorm, scores.n_authors, scores.n_credited)


def role_share_vector(scores: CreditScoreTable) -> tuple[float, ...]:
    return tuple(scores[r] / scores.n_authors for r in CREDIT_ROLES)


@dataclass(frozen=True)
class OutputDistribution:
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def defined(self) -> bool:
        return self.total > 0

    @property
    def proportions(self) -> Optional[tuple[float, ...]]:
        total = self.total
        if total == 0:
            return None
        return tuple(c / total for c in self.counts)

    def __add__(self, other: "OutputDistribution") -> "OutputDistribution":
        return OutputDistribution(tuple(a + b for a, b in zip(self.counts, other.counts)))


EMPTY_OUTPUT = OutputDistribution((0,) * len(CONTRIBUTION_TYPES))


def output_distribution(contexts: Iterable[CitationContext]) -> OutputDistribution:
    counts = [0] * len(CONTRIBUTION_TYPES)
    for c in contexts:
        if c.label is None:
            raise ValueError(f"context {c.context_id} is unlabeled")
        counts[c.label.index] += 1
    return OutputDistribution(tuple(counts))


@dataclass(frozen=True)
class PaperScores:
    """One line of the scores dump. Either side may be missing."""

    paper_id: str
    credit: Optional[CreditScoreTable]
    effort: Optional[EffortDistribution]
    output: OutputDistribution
    has_statement: bool
    n_contexts_unlabeled: int = 0

    def to_json(self) -> dict:
        out = self.output
        return {
            "paper_id": self.paper_id,
            "n_authors": self.effort.n_authors if self.effort else None,
            "n_credited": self.effort.n_credited if self.effort else None,
            "credit": {r.label: self.credit[r] for r in CREDIT_ROLES} if self.credit else None,
            "effort_raw": list(self.effort.raw) if self.effort else None,
            "effort_renorm": list(self.effort.renormalized) if self.effort and self.effort.defined else None,
            "output_counts": list(out.counts),
            "output_props": list(out.proportions) if out.defined else None,
            "input_available": bool(self.effort and self.effort.defined),
            "output_available": out.defined,
            "has_statement": self.has_statement,
            "unlabeled_contexts": self.n_contexts_unlabeled,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "PaperScores":
        credit = effort = None
        if rec.get("credit") is not None:
            credit = CreditScoreTable(
                {CreditRole.parse(k): float(v) for k, v in rec["credit"].items()},
                rec["n_authors"],
                rec["n_credited"],
            )
        if rec.get("effort_raw") is not None:
            renorm = rec.get("effort_renorm")
            effort = EffortDistribution(
                tuple(rec["effort_raw"]),
                tuple(renorm) if renorm is not None else None,
                rec["n_authors"],
                rec["n_credited"],
            )
        return cls(
            paper_id=rec["paper_id"],
            credit=credit,
            effort=effort,
            output=OutputDistribution(tuple(int(c) for c in rec["output_counts"])),
            has_statement=bool(rec.get("has_statement")),
            n_contexts_unlabeled=int(rec.get("unlabeled_contexts", 0)),
        )

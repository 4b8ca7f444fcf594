"""Data model and line-delimited JSON ingestion for papers and citation contexts."""

from __future__ import annotations

import enum
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Optional

logger = logging.getLogger(__name__)

PLACEHOLDER = "[target cited reference]"


class ContributionType(enum.Enum):
    THEORETICAL = "Theoretical"
    METHODOLOGICAL = "Methodological"
    EXPERIMENTAL = "Experimental"
    DATA_BASED = "Data-based"
    OTHER = "Other"

    @property
    def index(self) -> int:
        return _TYPE_INDEX[self]

    @classmethod
    def parse(cls, value: str) -> "ContributionType":
        """Accept the wire label ("Data-based") or the member name ("DataBased", "DATA_BASED")."""
        key = re.sub(r"[^a-z]", "", value.lower())
        try:
            return _TYPE_LOOKUP[key]
        except KeyError:
            raise ValueError(f"unknown contribution type: {value!r}") from None


CONTRIBUTION_TYPES: tuple[ContributionType, ...] = tuple(ContributionType)
ANALYTIC_TYPES: tuple[ContributionType, ...] = CONTRIBUTION_TYPES[:4]
_TYPE_INDEX = {t: i for i, t in enumerate(CONTRIBUTION_TYPES)}
_TYPE_LOOKUP = {}
for _t in ContributionType:
    _TYPE_LOOKUP[re.sub(r"[^a-z]", "", _t.value.lower())] = _t
    _TYPE_LOOKUP[_t.name.lower().replace("_", "")] = _t


class CreditRole(enum.Enum):
    """The fourteen CRediT roles; values are the role numbers 1..14."""

    CONCEPTUALIZATION = 1
    DATA_CURATION = 2
    FORMAL_ANALYSIS = 3
    FUNDING_ACQUISITION = 4
    INVESTIGATION = 5
    METHODOLOGY = 6
    PROJECT_ADMINISTRATION = 7
    RESOURCES = 8
    SOFTWARE = 9
    SUPERVISION = 10
    VALIDATION = 11
    VISUALIZATION = 12
    WRITING_ORIGINAL_DRAFT = 13
    WRITING_REVIEW_EDITING = 14

    @property
    def label(self) -> str:
        """CamelCase name used in files, e.g. ``WritingReviewEditing``."""
        return "".join(part.capitalize() for part in self.name.split("_"))

    @classmethod
    def parse(cls, value: str) -> "CreditRole":
        key = re.sub(r"[^a-z]", "", value.lower())
        try:
            return _ROLE_LOOKUP[key]
        except KeyError:
            raise ValueError(f"unknown CRediT role: {value!r}") from None


CREDIT_ROLES: tuple[CreditRole, ...] = tuple(CreditRole)
_ROLE_LOOKUP = {r.name.lower().replace("_", ""): r for r in CreditRole}


def normalize_text(text: str, keep_newlines: bool = False) -> str:
    """NFC-normalize and collapse whitespace runs to one space.

    With ``keep_newlines`` line structure survives: spaces are collapsed within
    each line and blank lines are dropped.
    """
    text = unicodedata.normalize("NFC", text)
    if keep_newlines:
        lines = (re.sub(r"[^\S\n]+", " ", ln).strip() for ln in text.splitlines())
        return "\n".join(ln for ln in lines if ln)
    return re.sub(r"\s+", " ", text).strip()


def derive_initial_forms(full_name: str) -> list[str]:
    """Name variants used to spot an author in a contribution statement.

    >>> derive_initial_forms("Liyue Chen")
    ['L.C.', 'L. Chen', 'Chen', 'Liyue Chen']
    """
    name = normalize_text(full_name)
    tokens = name.split(" ")
    if len(tokens) < 2:
        return [name]
    initials = [_initial(t) for t in tokens]
    forms = [
        "".join(f"{i}." for i in initials),
        f"{initials[0]}. {tokens[-1]}",
        tokens[-1],
        name,
    ]
    return list(dict.fromkeys(forms))


def _initial(token: str) -> str:
    for ch in token:
        if ch.isalpha():
            return ch.upper()
    return token[:1]


@dataclass(frozen=True)
class AuthorName:
    full_name: str
    aliases: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.full_name.strip():
            raise ValueError("author name is empty")

    @property
    def initial_forms(self) -> list[str]:
        return derive_initial_forms(self.full_name)


_STRUCTURED_LINE = re.compile(r"^\s*([^:\n]{1,120}?)\s*:\s*(\S.*)$")
_NAME_TOKEN = re.compile(r"^(?:[A-Z][\w'\-.]*|(?:[A-Z]\.)+|and|&)$")
_REFERENTIAL_HEAD = re.compile(r"^(?:all (?:co-?)?authors|the authors?)$", re.IGNORECASE)


def looks_structured(statement: str) -> bool:
    """True when every nonblank line has the ``Name: text`` shape."""
    lines = [ln for ln in statement.splitlines() if ln.strip()]
    if not lines:
        return False
    for ln in lines:
        m = _STRUCTURED_LINE.match(ln)
        if not m:
            return False
        head = m.group(1).strip()
        if _REFERENTIAL_HEAD.match(head):
            continue
        tokens = head.replace(",", " ").split()
        if not tokens or len(tokens) > 12 or not all(_NAME_TOKEN.match(t) for t in tokens):
            return False
    return True


@dataclass(frozen=True)
class PaperRecord:
    paper_id: str
    journal: str
    year: int
    disciplines: tuple[str, ...]
    authors: tuple[AuthorName, ...]
    contribution_statement: Optional[str] = None

    def __post_init__(self):
        if not self.paper_id.strip():
            raise ValueError("paper_id is empty")
        if not self.authors:
            raise ValueError("authors is empty")
        if not 1900 <= self.year <= 2100:
            raise ValueError(f"year out of range: {self.year}")

    @property
    def statement_structured(self) -> bool:
        return bool(self.contribution_statement) and looks_structured(self.contribution_statement)

    def to_json(self) -> dict:
        out = {
            "paper_id": self.paper_id,
            "journal": self.journal,
            "year": self.year,
            "disciplines": list(self.disciplines),
            "authors": [a.full_name for a in self.authors],
        }
        if self.contribution_statement is not None:
            out["contribution_statement"] = self.contribution_statement
        return out


LABEL_SOURCES = ("gold", "lexicon", "external")


@dataclass(frozen=True)
class CitationContext:
    context_id: str
    cited_paper_id: str
    text: str
    citing_paper_id: Optional[str] = None
    label: Optional[ContributionType] = None
    label_source: Optional[str] = None
    confidence: Optional[float] = None

    def __post_init__(self):
        if not self.context_id:
            raise ValueError("context_id is empty")
        if PLACEHOLDER not in self.text:
            raise ValueError("missing placeholder")
        if self.label is not None and self.label_source is None:
            raise ValueError("label without label_source")
        if self.label_source is not None and self.label_source not in LABEL_SOURCES:
            raise ValueError(f"unknown label_source: {self.label_source!r}")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")

    @property
    def placeholder_count(self) -> int:
        return self.text.count(PLACEHOLDER)

    def to_json(self) -> dict:
        out = {
            "context_id": self.context_id,
            "cited_paper_id": self.cited_paper_id,
            "text": self.text,
        }
        if self.citing_paper_id is not None:
            out["citing_paper_id"] = self.citing_paper_id
        if self.label is not None:
            out["label"] = self.label.value
        if self.label_source is not None:
            out["label_source"] = self.label_source
        if self.confidence is not None:
            out["confidence"] = self.confidence
        return out


@dataclass(frozen=True)
class Rejection:
    line_number: int
    reason: str
    raw: str
    source: str = ""

    def to_json(self) -> dict:
        return {"line_number": self.line_number, "reason": self.reason, "raw": self.raw}


@dataclass(frozen=True)
class Corpus:
    """Immutable after construction; contexts keep file order within each paper."""

    papers: Mapping[str, PaperRecord]
    contexts: Mapping[str, tuple[CitationContext, ...]]

    def __post_init__(self):
        for pid in self.contexts:
            if pid not in self.papers:
                raise ValueError(f"orphan contexts for unknown paper {pid!r}")
        object.__setattr__(self, "papers", MappingProxyType(dict(self.papers)))
        object.__setattr__(self, "contexts", MappingProxyType(dict(self.contexts)))

    @classmethod
    def build(cls, papers: Iterable[PaperRecord], contexts: Iterable[CitationContext]) -> "Corpus":
        paper_map = {}
        for p in papers:
            if p.paper_id in paper_map:
                raise ValueError(f"duplicate paper_id {p.paper_id!r}")
            paper_map[p.paper_id] = p
        grouped: dict[str, list[CitationContext]] = {}
        for c in contexts:
            grouped.setdefault(c.cited_paper_id, []).append(c)
        return cls(paper_map, {k: tuple(v) for k, v in grouped.items()})

    def iter_contexts(self) -> Iterable[CitationContext]:
        for pid in self.papers:
            yield from self.contexts.get(pid, ())

    def contexts_of(self, paper_id: str) -> tuple[CitationContext, ...]:
        return self.contexts.get(paper_id, ())

    @property
    def n_contexts(self) -> int:
        return sum(len(v) for v in self.contexts.values())

    def with_contexts(self, contexts: Iterable[CitationContext]) -> "Corpus":
        return Corpus.build(self.papers.values(), contexts)


@dataclass
class LoadReport:
    rejections: list[Rejection] = field(default_factory=list)
    input_lines: int = 0
    accepted: int = 0
    warnings: dict[str, int] = field(default_factory=dict)

    def warn(self, key: str) -> None:
        self.warnings[key] = self.warnings.get(key, 0) + 1


class CorpusError(Exception):
    """Raised when an input file cannot be read at all."""


def _require(rec: dict, key: str, kind, optional: bool = False):
    if key not in rec or rec[key] is None:
        if optional:
            return None
        raise ValueError(f"missing field {key!r}")
    val = rec[key]
    # bool is an int subclass; reject it for integer fields
    if not isinstance(val, kind) or (kind is int and isinstance(val, bool)):
        raise ValueError(f"field {key!r} has wrong type")
    return val


def paper_from_json(rec: dict) -> PaperRecord:
    authors = _require(rec, "authors", list)
    if not all(isinstance(a, str) for a in authors):
        raise ValueError("field 'authors' has wrong type")
    disciplines = _require(rec, "disciplines", list)
    if not all(isinstance(d, str) for d in disciplines):
        raise ValueError("field 'disciplines' has wrong type")
    statement = _require(rec, "contribution_statement", str, optional=True)
    if statement is not None:
        statement = normalize_text(statement, keep_newlines=True) or None
    return PaperRecord(
        paper_id=normalize_text(_require(rec, "paper_id", str)),
        journal=normalize_text(_require(rec, "journal", str)),
        year=_require(rec, "year", int),
        disciplines=tuple(normalize_text(d) for d in disciplines),
        authors=tuple(AuthorName(normalize_text(a)) for a in authors),
        contribution_statement=statement,
    )


def context_from_json(rec: dict) -> CitationContext:
    label = _require(rec, "label", str, optional=True)
    source = _require(rec, "label_source", str, optional=True)
    confidence = _require(rec, "confidence", (int, float), optional=True)
    if isinstance(confidence, bool):
        raise ValueError("field 'confidence' has wrong type")
    if label is not None and source is None:
        source = "gold"
    return CitationContext(
        context_id=normalize_text(_require(rec, "context_id", str)),
        cited_paper_id=normalize_text(_require(rec, "cited_paper_id", str)),
        text=normalize_text(_require(rec, "text", str)),
        citing_paper_id=_require(rec, "citing_paper_id", str, optional=True),
        label=ContributionType.parse(label) if label is not None else None,
        label_source=source,
        confidence=float(confidence) if confidence is not None else None,
    )


def _iter_json_lines(path: Path, report: LoadReport):
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            raw = line.rstrip("\n")
            if not raw.strip():
                continue
            report.input_lines += 1
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                report.rejections.append(Rejection(lineno, f"malformed JSON: {exc.msg}", raw, str(path)))
                continue
            if not isinstance(rec, dict):
                report.rejections.append(Rejection(lineno, "malformed JSON: not an object", raw, str(path)))
                continue
            yield lineno, raw, rec


def load_corpus(papers_path, contexts_path) -> tuple[Corpus, LoadReport]:
    """Load and validate a corpus.

    Every nonblank input line ends up either accepted or in ``report.rejections``.
    A context whose ``context_id`` repeats replaces the earlier one; the earlier
    line is reported with reason ``"superseded duplicate context_id"``.
    """
    report = LoadReport()
    papers: dict[str, PaperRecord] = {}
    for lineno, raw, rec in _iter_json_lines(Path(papers_path), report):
        try:
            paper = paper_from_json(rec)
        except ValueError as exc:
            report.rejections.append(Rejection(lineno, str(exc), raw, str(papers_path)))
            continue
        if paper.paper_id in papers:
            report.rejections.append(Rejection(lineno, "duplicate paper_id", raw, str(papers_path)))
            continue
        papers[paper.paper_id] = paper
        report.accepted += 1

    contexts: dict[str, tuple[int, str, CitationContext]] = {}
    for lineno, raw, rec in _iter_json_lines(Path(contexts_path), report):
        try:
            ctx = context_from_json(rec)
        except ValueError as exc:
            report.rejections.append(Rejection(lineno, str(exc), raw, str(contexts_path)))
            continue
        if ctx.cited_paper_id not in papers:
            report.rejections.append(Rejection(lineno, "orphan", raw, str(contexts_path)))
            continue
        if ctx.placeholder_count > 1:
            report.warn("multiple_placeholders")
        prev = contexts.pop(ctx.context_id, None)
        if prev is not None:
            report.warn("duplicate_context_id")
            logger.warning("context_id %s repeated at line %d; last record wins", ctx.context_id, lineno)
            report.rejections.append(Rejection(prev[0], "superseded duplicate context_id", prev[1], str(contexts_path)))
            report.accepted -= 1
        contexts[ctx.context_id] = (lineno, raw, ctx)
        report.accepted += 1

    ordered = sorted(contexts.values(), key=lambda t: t[0])
    corpus = Corpus.build(papers.values(), (c for _, _, c in ordered))
    return corpus, report


def write_jsonl(path, records: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_corpus(corpus: Corpus, papers_path, contexts_path) -> None:
    write_jsonl(papers_path, (p.to_json() for p in corpus.papers.values()))
    write_jsonl(contexts_path, (c.to_json() for c in corpus.iter_contexts()))


def replace_label(ctx: CitationContext, label, source, confidence) -> CitationContext:
    return replace(ctx, label=label, label_source=source, confidence=confidence)

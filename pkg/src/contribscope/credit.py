"""Author contribution statements -> per-author CRediT role sets.

The chain is segment -> align -> map: a statement is split into sentences,
each sentence is split into (author, contribution phrase) pairs, and every
phrase is mapped to roles with a pattern lexicon. Structured statements
(``Name: text`` per line) skip alignment.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

from .classifier import compile_pattern
from .corpus import CREDIT_ROLES, AuthorName, CreditRole, PaperRecord, looks_structured

logger = logging.getLogger(__name__)


class NoStatement(Exception):
    pass


@dataclass(frozen=True)
class RoleLexicon:
    entries: tuple[tuple[str, frozenset], ...]

    def __post_init__(self):
        produced = set()
        for pattern, roles in self.entries:
            if not pattern:
                raise ValueError("empty role pattern")
            produced |= roles
        missing = [r.label for r in CREDIT_ROLES if r not in produced]
        if missing:
            raise ValueError(f"role lexicon cannot produce: {', '.join(missing)}")
        object.__setattr__(self, "_compiled", tuple(compile_pattern(p) for p, _ in self.entries))

    @classmethod
    def from_csv(cls, path) -> "RoleLexicon":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls._from_rows(csv.DictReader(fh))

    @classmethod
    def default(cls) -> "RoleLexicon":
        text = resources.files("contribscope").joinpath("data/role_lexicon.csv").read_text("utf-8")
        return cls._from_rows(csv.DictReader(text.splitlines()))

    @classmethod
    def _from_rows(cls, rows) -> "RoleLexicon":
        entries = []
        for row in rows:
            roles = frozenset(CreditRole.parse(r) for r in row["roles"].split("|") if r.strip())
            entries.append((row["pattern"].strip(), roles))
        return cls(tuple(entries))


def map_roles(phrase: str, lexicon: RoleLexicon) -> frozenset:
    """Union of the role sets of every lexicon entry found in ``phrase``.

    An empty result means the phrase is unmapped; there is no catch-all role.
    """
    roles = set()
    for (_, entry_roles), rx in zip(lexicon.entries, lexicon._compiled):
        if rx.search(phrase):
            roles |= entry_roles
    return frozenset(roles)


# -- segmentation -------------------------------------------------------------

_ABBREVIATIONS = ("et al.", "e.g.", "i.e.", "Fig.", "Dr.", "Prof.")
_INITIALS_TOKEN = re.compile(r"^(?:[A-Z]\.-?)+$")
_BOUNDARY = re.compile(r"[.!?]+(?=\s|$)")


def _protected(text: str, end: int) -> bool:
    """Is the punctuation ending at ``end`` part of an initial run or abbreviation?"""
    head = text[:end]
    for abbr in _ABBREVIATIONS:
        if head.endswith(abbr) and (len(head) == len(abbr) or not head[-len(abbr) - 1].isalnum()):
            return True
    token = head.rsplit(None, 1)[-1].lstrip("([\"'")
    return bool(_INITIALS_TOKEN.match(token))


def segment_statement(statement: str) -> list[str]:
    """Split a statement into sentences.

    Line breaks always end a sentence. Within a line, ``.``, ``!`` or ``?``
    followed by whitespace ends a sentence unless it closes a dotted initial
    run ("L.C.") or one of the protected abbreviations. Semicolons never split.
    """
    sentences = []
    for line in statement.splitlines():
        start = 0
        for m in _BOUNDARY.finditer(line):
            if _protected(line, m.end()):
                continue
            piece = line[start:m.end()].strip()
            if piece:
                sentences.append(piece)
            start = m.end()
        rest = line[start:].strip()
        if rest:
            sentences.append(rest)
    return sentences


# -- alignment ----------------------------------------------------------------

REFERENTIAL_TERMS = ("all authors", "the authors", "the author", "all coauthors", "all co-authors", "all the authors")
_REFERENTIAL = re.compile(
    r"(?<!\w)(?:" + "|".join(re.escape(t) for t in sorted(REFERENTIAL_TERMS, key=len, reverse=True)) + r")(?!\w)",
    re.IGNORECASE,
)


def resolve_referential(subject: str, authors: Sequence[AuthorName]) -> frozenset:
    """Indices of the authors a fixed referential term stands for; empty if unknown."""
    if _REFERENTIAL.fullmatch(subject.strip()):
        return frozenset(range(len(authors)))
    return frozenset()


@dataclass(frozen=True)
class ContributionTriple:
    author: int
    author_name: str
    phrase: str
    roles: frozenset = frozenset()

    @property
    def unmapped(self) -> bool:
        return not self.roles


@dataclass
class Alignment:
    sentence: str
    triples: list[ContributionTriple] = field(default_factory=list)
    residue: bool = False
    ambiguous: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class _Mention:
    start: int
    end: int
    authors: frozenset
    ambiguous: bool = False


def _form_pattern(form: str) -> str:
    if _INITIALS_TOKEN.match(form):
        # "L.C." also matches "L. C."
        parts = [re.escape(p) + r"\." for p in form.split(".") if p]
        return r"\s?".join(parts)
    return r"\s+".join(re.escape(t) for t in form.split())


def _author_forms(authors: Sequence[AuthorName]) -> dict[str, set]:
    forms: dict[str, set] = {}
    for i, a in enumerate(authors):
        for f in list(a.initial_forms) + list(a.aliases):
            forms.setdefault(f, set()).add(i)
    return forms


def find_mentions(text: str, authors: Sequence[AuthorName]) -> list[_Mention]:
    """Author mentions, longest match first, non-overlapping, in text order."""
    candidates = []
    for form, idx in _author_forms(authors).items():
        rx = re.compile(r"(?<![\w.])" + _form_pattern(form) + r"(?!\w)")
        for m in rx.finditer(text):
            candidates.append(_Mention(m.start(), m.end(), frozenset(idx), ambiguous=len(idx) > 1))
    for m in _REFERENTIAL.finditer(text):
        candidates.append(_Mention(m.start(), m.end(), frozenset(range(len(authors)))))
    candidates.sort(key=lambda m: (-(m.end - m.start), m.start))
    taken: list[_Mention] = []
    for c in candidates:
        if all(c.end <= t.start or c.start >= t.end for t in taken):
            taken.append(c)
    return sorted(taken, key=lambda m: m.start)


_CONNECTOR = re.compile(r"^(?:[\s,&]|and\b|as well as\b)*$", re.IGNORECASE)
_PASSIVE_TAIL = re.compile(r"\bby\s*$", re.IGNORECASE)
_SUBORDINATE_TAIL = re.compile(r"\b(?:with|from|of|to|for|thank|thanks|than)\s*$", re.IGNORECASE)
_LEAD_JUNK = re.compile(r"^(?:[\s,;:.&()\-]|and\b|both\b|also\b|who\b|then\b)+", re.IGNORECASE)
_TAIL_JUNK = re.compile(r"(?:[\s,;:.&()\-]|\band|\bby|\bboth)+$", re.IGNORECASE)


def _clean_phrase(text: str) -> str:
    text = _LEAD_JUNK.sub("", text)
    text = _TAIL_JUNK.sub("", text)
    return text.strip()


def _groups(clause: str, mentions: list[_Mention]) -> list[list[_Mention]]:
    groups: list[list[_Mention]] = []
    for m in mentions:
        if groups and _CONNECTOR.match(clause[groups[-1][-1].end:m.start]):
            groups[-1].append(m)
        else:
            groups.append([m])
    # "with input from all authors" names helpers, not subjects
    return [g for g in groups if not _SUBORDINATE_TAIL.search(clause[:g[0].start])]


def _align_clause(clause: str, authors, out: Alignment, inherited: frozenset) -> frozenset:
    """Append triples for one clause; return the subject set later clauses inherit."""
    mentions = find_mentions(clause, authors)
    for m in mentions:
        if m.ambiguous:
            form = clause[m.start:m.end]
            out.ambiguous.append(form)
            logger.info("ambiguous author mention %r in %r", form, out.sentence)
    groups = _groups(clause, mentions)
    if not groups:
        if mentions:
            return frozenset()
        phrase = _clean_phrase(clause)
        if inherited and phrase:
            _emit(out, authors, inherited, phrase)
        return inherited

    subject = frozenset()
    for k, group in enumerate(groups):
        before_start = groups[k - 1][-1].end if k else 0
        after_end = groups[k + 1][0].start if k + 1 < len(groups) else len(clause)
        before = clause[before_start:group[0].start]
        after = clause[group[-1].end:after_end]
        if _PASSIVE_TAIL.search(before) and (k == 0 or _clean_phrase(before)):
            phrase = _clean_phrase(before)
        else:
            phrase = _clean_phrase(after) or _clean_phrase(before)
        subject = frozenset().union(*(m.authors for m in group if not m.ambiguous))
        if subject and phrase:
            _emit(out, authors, subject, phrase)
    return subject


def _emit(out: Alignment, authors, who: frozenset, phrase: str) -> None:
    for i in sorted(who):
        out.triples.append(ContributionTriple(i, authors[i].full_name, phrase))


def align_contributions(sentence: str, authors: Sequence[AuthorName]) -> Alignment:
    """Pair authors mentioned in ``sentence`` with what they did.

    Clauses are split on semicolons; a clause without its own author mention
    inherits the subjects of the previous clause. Mentions that match more
    than one author are excluded and recorded in ``ambiguous``. A sentence
    that yields no triple and no ambiguity is residue.
    """
    if not authors:
        raise ValueError("authors is empty")
    out = Alignment(sentence)
    subject = frozenset()
    for clause in sentence.split(";"):
        subject = _align_clause(clause, authors, out, subject)
    out.residue = not out.triples and not out.ambiguous
    return out


def _align_structured_line(line: str, authors, lexicon: RoleLexicon) -> Alignment:
    out = Alignment(line)
    head, _, body = line.partition(":")
    head, body = head.strip(), body.strip()
    who = set()
    for m in find_mentions(head, authors):
        if m.ambiguous:
            out.ambiguous.append(head[m.start:m.end])
        else:
            who |= m.authors
    if who and body:
        _emit(out, authors, frozenset(who), _clean_phrase(body))
    elif not out.ambiguous and map_roles(head, lexicon):
        # inverse form: "Conceptualization: L.C., J.D."
        for m in find_mentions(body, authors):
            if m.ambiguous:
                out.ambiguous.append(body[m.start:m.end])
            else:
                who |= m.authors
        if who:
            _emit(out, authors, frozenset(who), head)
    out.residue = not out.triples and not out.ambiguous
    return out


# -- statement level ----------------------------------------------------------


@dataclass
class AuthorRoleAssignment:
    paper_id: str
    n_authors: int
    roles: dict[int, frozenset]
    triples: list[ContributionTriple]
    residue: list[str] = field(default_factory=list)
    unmapped: list[str] = field(default_factory=list)
    ambiguous: list[str] = field(default_factory=list)
    structured: bool = False
    n_sentences: int = 0

    @property
    def n_credited(self) -> int:
        return sum(1 for r in self.roles.values() if r)

    @property
    def is_empty(self) -> bool:
        return self.n_credited == 0

    def to_json(self, authors: Sequence[AuthorName]) -> dict:
        return {
            "paper_id": self.paper_id,
            "assignments": {
                authors[i].full_name: [r.label for r in sorted(self.roles.get(i, ()), key=lambda r: r.value)]
                for i in range(len(authors))
            },
            "residue": list(self.residue),
            "unmapped": list(self.unmapped),
            "ambiguous": list(self.ambiguous),
            "structured": self.structured,
        }

    @classmethod
    def from_json(cls, rec: dict, authors: Sequence[AuthorName]) -> "AuthorRoleAssignment":
        index = {}
        for i, a in enumerate(authors):
            index.setdefault(a.full_name, i)
        roles = {}
        for name, labels in rec["assignments"].items():
            if name not in index:
                raise ValueError(f"{rec['paper_id']}: unknown author {name!r} in assignment")
            roles[index[name]] = frozenset(CreditRole.parse(x) for x in labels)
        return cls(
            paper_id=rec["paper_id"],
            n_authors=len(authors),
            roles={i: r for i, r in roles.items() if r},
            triples=[],
            residue=list(rec.get("residue", [])),
            unmapped=list(rec.get("unmapped", [])),
            ambiguous=list(rec.get("ambiguous", [])),
            structured=bool(rec.get("structured", False)),
        )


def parse_statement(paper: PaperRecord, lexicon: Optional[RoleLexicon] = None) -> AuthorRoleAssignment:
    if not paper.contribution_statement:
        raise NoStatement(paper.paper_id)
    lexicon = lexicon or RoleLexicon.default()
    authors = paper.authors
    statement = paper.contribution_statement
    structured = looks_structured(statement)
    if structured:
        units = [ln.strip() for ln in statement.splitlines() if ln.strip()]
        alignments = [_align_structured_line(u, authors, lexicon) for u in units]
    else:
        units = segment_statement(statement)
        alignments = [align_contributions(u, authors) for u in units]

    roles: dict[int, set] = {}
    triples, residue, unmapped, ambiguous = [], [], [], []
    for al in alignments:
        if al.residue:
            residue.append(al.sentence)
        ambiguous.extend(al.ambiguous)
        for t in al.triples:
            mapped = map_roles(t.phrase, lexicon)
            t = ContributionTriple(t.author, t.author_name, t.phrase, mapped)
            triples.append(t)
            roles.setdefault(t.author, set()).update(mapped)
            if not mapped and t.phrase not in unmapped:
                unmapped.append(t.phrase)
    return AuthorRoleAssignment(
        paper_id=paper.paper_id,
        n_authors=len(authors),
        roles={i: frozenset(r) for i, r in sorted(roles.items()) if r},
        triples=triples,
        residue=residue,
        unmapped=unmapped,
        ambiguous=ambiguous,
        structured=structured,
        n_sentences=len(units),
    )

"""Citation-context classification into contribution types.

Two backends share one contract, ``classify(text) -> (ContributionType, confidence)``:

* :class:`LexiconBackend` scores weighted cue patterns. Its confidence is the
  winning score over the total matched score, a ratio and not a calibrated
  probability.
* :class:`ExternalBackend` posts the context to an inference endpoint.

Both are fronted by :class:`ClassificationCache` inside :func:`classify_corpus`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Protocol

import requests

from .corpus import (
    CONTRIBUTION_TYPES,
    CitationContext,
    ContributionType,
    Corpus,
    normalize_text,
    replace_label,
)

logger = logging.getLogger(__name__)

TOKEN_ENV = "CONTRIBSCOPE_API_TOKEN"


class BackendUnavailable(Exception):
    pass


class ProtocolViolation(Exception):
    pass


class ClassifierBackend(Protocol):
    backend_id: str

    @property
    def fingerprint(self) -> str: ...

    def classify(self, text: str) -> tuple[ContributionType, Optional[float]]: ...


def compile_pattern(pattern: str) -> re.Pattern:
    return re.compile(rf"(?<!\w)(?:{pattern})(?!\w)", re.IGNORECASE)


@dataclass(frozen=True)
class CueEntry:
    pattern: str
    type: ContributionType
    weight: float


@dataclass(frozen=True)
class CueLexicon:
    entries: tuple[CueEntry, ...]
    default_type: ContributionType = ContributionType.OTHER

    def __post_init__(self):
        for e in self.entries:
            if not e.pattern:
                raise ValueError("empty cue pattern")
            if not e.weight > 0:
                raise ValueError(f"cue weight must be positive: {e.pattern!r}")
        object.__setattr__(self, "_compiled", tuple(compile_pattern(e.pattern) for e in self.entries))

    @classmethod
    def from_csv(cls, path) -> "CueLexicon":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls._from_rows(csv.DictReader(fh))

    @classmethod
    def default(cls) -> "CueLexicon":
        text = resources.files("contribscope").joinpath("data/cue_lexicon.csv").read_text("utf-8")
        return cls._from_rows(csv.DictReader(text.splitlines()))

    @classmethod
    def _from_rows(cls, rows) -> "CueLexicon":
        entries = []
        for row in rows:
            entries.append(CueEntry(row["pattern"].strip(), ContributionType.parse(row["type"]), float(row["weight"])))
        return cls(tuple(entries))

    def digest(self) -> str:
        h = hashlib.sha256()
        for e in self.entries:
            h.update(f"{e.pattern}\t{e.type.value}\t{e.weight!r}\n".encode())
        h.update(self.default_type.value.encode())
        return h.hexdigest()[:16]


def lexicon_classify(text: str, lexicon: CueLexicon) -> tuple[ContributionType, float]:
    scores = [0.0] * len(CONTRIBUTION_TYPES)
    for entry, rx in zip(lexicon.entries, lexicon._compiled):
        if rx.search(text):
            scores[entry.type.index] += entry.weight
    total = sum(scores)
    if total == 0:
        return lexicon.default_type, 0.0
    # max() keeps the first maximum, i.e. canonical order breaks ties
    best = max(range(len(scores)), key=lambda i: scores[i])
    return CONTRIBUTION_TYPES[best], scores[best] / total


class LexiconBackend:
    backend_id = "lexicon"

    def __init__(self, lexicon: Optional[CueLexicon] = None):
        self.lexicon = lexicon or CueLexicon.default()
        self.calls = 0
        self._lock = threading.Lock()

    @property
    def fingerprint(self) -> str:
        return f"lexicon:{self.lexicon.digest()}"

    def classify(self, text):
        with self._lock:
            self.calls += 1
        return lexicon_classify(text, self.lexicon)


@dataclass
class EndpointConfig:
    url: str
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5
    prompt_template: Optional[str] = None
    token: Optional[str] = None

    def resolved_token(self) -> Optional[str]:
        return self.token if self.token is not None else os.environ.get(TOKEN_ENV)


_RETRYABLE_STATUS = {408, 425, 429, 500, 502, 503, 504}


def external_classify(
    text: str,
    endpoint: EndpointConfig,
    session: Optional[requests.Session] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[ContributionType, Optional[float]]:
    """One classification request with exponential backoff on transient failures.

    Raises BackendUnavailable when retries run out, ProtocolViolation when the
    endpoint answers with something outside the wire contract.
    """
    body = {"text": text, "labels": [t.value for t in CONTRIBUTION_TYPES]}
    if endpoint.prompt_template:
        body["prompt"] = endpoint.prompt_template.replace("{{text}}", text)
    headers = {"Content-Type": "application/json"}
    token = endpoint.resolved_token()
    if token:
        headers["Authorization"] = f"Bearer {token}"
    http = session or requests

    last_error = None
    for attempt in range(endpoint.max_retries + 1):
        if attempt:
            sleep(endpoint.backoff * 2 ** (attempt - 1))
        try:
            resp = http.post(endpoint.url, json=body, headers=headers, timeout=endpoint.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_error = exc
            continue
        if resp.status_code in _RETRYABLE_STATUS:
            last_error = f"HTTP {resp.status_code}"
            continue
        if resp.status_code != 200:
            raise ProtocolViolation(f"HTTP {resp.status_code} from {endpoint.url}")
        return _parse_response(resp)
    raise BackendUnavailable(f"{endpoint.url} unavailable after {endpoint.max_retries + 1} attempts: {last_error}")


def _parse_response(resp) -> tuple[ContributionType, Optional[float]]:
    try:
        payload = resp.json()
    except ValueError:
        raise ProtocolViolation("response is not JSON") from None
    if not isinstance(payload, dict):
        raise ProtocolViolation("response is not a JSON object")
    label = payload.get("label")
    valid = {t.value: t for t in CONTRIBUTION_TYPES}
    if label not in valid:
        raise ProtocolViolation(f"unknown label {label!r}")
    conf = payload.get("confidence")
    if conf is not None:
        if isinstance(conf, bool) or not isinstance(conf, (int, float)) or not 0 <= conf <= 1:
            raise ProtocolViolation(f"confidence out of contract: {conf!r}")
        conf = float(conf)
    return valid[label], conf


class ExternalBackend:
    backend_id = "external"

    def __init__(self, endpoint: EndpointConfig, sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint
        self.sleep = sleep
        self.calls = 0
        self._lock = threading.Lock()
        self._local = threading.local()

    @property
    def fingerprint(self) -> str:
        return f"external:{self.endpoint.url}"

    def _session(self) -> requests.Session:
        # requests.Session is not documented as thread-safe; keep one per worker
        s = getattr(self._local, "session", None)
        if s is None:
            s = self._local.session = requests.Session()
        return s

    def classify(self, text):
        with self._lock:
            self.calls += 1
        return external_classify(text, self.endpoint, session=self._session(), sleep=self.sleep)


class ClassificationCache:
    """On-disk key/value store, one small JSON file per digest.

    Writes go to a temp file in the target directory and are renamed into
    place, so concurrent writers never leave a torn entry behind.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None
        self._mem: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(text: str, fingerprint: str) -> str:
        h = hashlib.sha256()
        h.update(normalize_text(text).encode("utf-8"))
        h.update(b"\x00")
        h.update(fingerprint.encode("utf-8"))
        return h.hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[dict]:
        with self._lock:
            hit = self._mem.get(key)
        if hit is not None or self.directory is None:
            return hit
        path = self._path(key)
        try:
            entry = json.loads(path.read_text("utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, ValueError):
            logger.warning("unreadable cache entry %s ignored", path)
            return None
        with self._lock:
            self._mem[key] = entry
        return entry

    def put(self, key: str, label: ContributionType, confidence, backend_id: str) -> None:
        entry = {"label": label.value, "confidence": confidence, "backend_id": backend_id, "timestamp": time.time()}
        with self._lock:
            self._mem[key] = entry
        if self.directory is None:
            return
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
            raise


@dataclass
class ClassificationStats:
    label_counts: dict[str, int] = field(default_factory=dict)
    prelabeled: int = 0
    backend_calls: int = 0
    cache_hits: int = 0
    failures: int = 0
    protocol_violations: int = 0
    unlabeled: int = 0

    @property
    def cache_hit_rate(self) -> float:
        looked_up = self.backend_calls + self.cache_hits
        return self.cache_hits / looked_up if looked_up else 0.0

    def to_json(self) -> dict:
        return {
            "label_counts": self.label_counts,
            "prelabeled": self.prelabeled,
            "backend_calls": self.backend_calls,
            "cache_hits": self.cache_hits,
            "cache_hit_rate": self.cache_hit_rate,
            "failures": self.failures,
            "protocol_violations": self.protocol_violations,
            "unlabeled": self.unlabeled,
        }


class ClassificationIncomplete(Exception):
    """Backend went away mid-run; ``corpus`` and ``stats`` hold the partial result."""

    def __init__(self, message, corpus: Corpus, stats: ClassificationStats):
        super().__init__(message)
        self.corpus = corpus
        self.stats = stats


def _label_one(ctx: CitationContext, backend, cache: ClassificationCache, down: threading.Event):
    """Return (context, outcome, error); outcome is kept/hit/call/violation/unavailable."""
    if ctx.label is not None:
        return ctx, "kept", None
    key = cache.key(ctx.text, backend.fingerprint)
    entry = cache.get(key)
    if entry is not None:
        label = ContributionType.parse(entry["label"])
        return replace_label(ctx, label, backend.backend_id, entry["confidence"]), "hit", None
    if down.is_set():
        return ctx, "unavailable", None
    try:
        label, conf = backend.classify(ctx.text)
    except ProtocolViolation as exc:
        logger.warning("context %s left unlabeled: %s", ctx.context_id, exc)
        return ctx, "violation", exc
    except BackendUnavailable as exc:
        down.set()
        return ctx, "unavailable", exc
    cache.put(key, label, conf, backend.backend_id)
    return replace_label(ctx, label, backend.backend_id, conf), "call", None


def classify_corpus(corpus: Corpus, backend, cache: Optional[ClassificationCache] = None, jobs: int = 1):
    """Label every unlabeled context; returns ``(labeled_corpus, stats)``.

    Contexts that already carry a label (gold or otherwise) pass through
    untouched. Results are assembled in corpus order whatever ``jobs`` is.
    Once the backend is unavailable no further calls are made, but cached
    labels are still applied; a :class:`ClassificationIncomplete` carrying the
    partial corpus is raised at the end.
    """
    cache = cache if cache is not None else ClassificationCache()
    contexts = list(corpus.iter_contexts())
    down = threading.Event()
    work = lambda c: _label_one(c, backend, cache, down)  # noqa: E731
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, contexts))
    else:
        results = [work(c) for c in contexts]

    stats = ClassificationStats(label_counts={t.value: 0 for t in CONTRIBUTION_TYPES})
    labeled = []
    last_unavailable = None
    for ctx, outcome, err in results:
        labeled.append(ctx)
        if outcome == "kept":
            stats.prelabeled += 1
        elif outcome == "hit":
            stats.cache_hits += 1
        elif outcome == "call":
            stats.backend_calls += 1
        elif outcome == "violation":
            stats.backend_calls += 1
            stats.protocol_violations += 1
            stats.failures += 1
        elif outcome == "unavailable":
            stats.failures += 1
            last_unavailable = err or last_unavailable
        if ctx.label is None:
            stats.unlabeled += 1
        else:
            stats.label_counts[ctx.label.value] += 1

    out = corpus.with_contexts(labeled)
    if last_unavailable is not None:
        raise ClassificationIncomplete(str(last_unavailable), out, stats)
    return out, stats

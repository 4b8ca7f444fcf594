"""Pipeline configuration: one YAML file, command-line flags win.

Schema (every key optional unless marked)::

    input:
      papers: papers.jsonl        # required
      contexts: contexts.jsonl    # required
    lexicons:
      cue: null                   # CSV pattern,type,weight; null = shipped default
      role: null                  # CSV pattern,roles; null = shipped default
    mapping: null                 # JSON type -> [role, ...]; null = default table
    classifier:
      backend: lexicon            # lexicon | external
      endpoint:
        url: null                 # required for the external backend
        timeout: 30
        max_retries: 3
        backoff: 0.5
        prompt_template: null     # string with a {{text}} slot
    analytics:
      threshold: 0.15
      correlation_types: 5        # 4 drops Other
      cooccurrence_types: 4
      norm: cosine                # cosine | min
      disciplines: null           # list of tags; null = every tag present
    run:
      out: out
      jobs: 1
      seed: 0

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .classifier import EndpointConfig
from .report import AnalysisSettings


class ConfigError(Exception):
    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path


DEFAULTS = {
    "input": {"papers": None, "contexts": None},
    "lexicons": {"cue": None, "role": None},
    "mapping": None,
    "classifier": {
        "backend": "lexicon",
        "endpoint": {"url": None, "timeout": 30.0, "max_retries": 3, "backoff": 0.5, "prompt_template": None},
    },
    "analytics": {
        "threshold": 0.15,
        "correlation_types": 5,
        "cooccurrence_types": 4,
        "norm": "cosine",
        "disciplines": None,
    },
    "run": {"out": "out", "jobs": 1, "seed": 0},
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key} must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


@dataclass
class PipelineConfig:
    papers: Path
    contexts: Path
    out: Path
    cue_lexicon: Optional[Path] = None
    role_lexicon: Optional[Path] = None
    mapping: Optional[Path] = None
    backend: str = "lexicon"
    endpoint: Optional[EndpointConfig] = None
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    jobs: int = 1
    seed: int = 0
    source: Optional[Path] = None
    raw: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        """Config as effectively used, minus secrets."""
        snap = copy.deepcopy(self.raw)
        snap.get("classifier", {}).get("endpoint", {}).pop("token", None)
        return snap

    def validate(self) -> None:
        for label, p in (("input.papers", self.papers), ("input.contexts", self.contexts),
                         ("lexicons.cue", self.cue_lexicon), ("lexicons.role", self.role_lexicon),
                         ("mapping", self.mapping)):
            if p is not None and not p.exists():
                raise ConfigError(f"{label}: no such file {p}", str(p))
        if not 0 < self.analysis.threshold < 1:
            raise ConfigError(f"analytics.threshold must lie in (0, 1), got {self.analysis.threshold}")
        if self.jobs < 1:
            raise ConfigError(f"run.jobs must be >= 1, got {self.jobs}")
        if self.backend == "external" and (self.endpoint is None or not self.endpoint.url):
            raise ConfigError("classifier.endpoint.url is required for the external backend")


def _path(value, base: Path) -> Optional[Path]:
    if value is None:
        return None
    p = Path(value).expanduser()
    return p if p.is_absolute() else base / p


def build_config(raw: dict, base: Path, source: Optional[Path] = None) -> PipelineConfig:
    cfg = _merge(DEFAULTS, raw)
    a, r, c = cfg["analytics"], cfg["run"], cfg["classifier"]
    if cfg["input"]["papers"] is None or cfg["input"]["contexts"] is None:
        raise ConfigError("input.papers and input.contexts are required")
    if c["backend"] not in ("lexicon", "external"):
        raise ConfigError(f"classifier.backend must be lexicon or external, got {c['backend']!r}")
    if a["norm"] not in ("cosine", "min"):
        raise ConfigError(f"analytics.norm must be cosine or min, got {a['norm']!r}")
    for key in ("correlation_types", "cooccurrence_types"):
        if a[key] not in (4, 5):
            raise ConfigError(f"analytics.{key} must be 4 or 5, got {a[key]!r}")
    try:
        threshold = float(a["threshold"])
        jobs = int(r["jobs"])
        seed = int(r["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad numeric setting: {exc}") from None
    ep = c["endpoint"]
    endpoint = None
    if ep.get("url"):
        endpoint = EndpointConfig(
            url=ep["url"],
            timeout=float(ep["timeout"]),
            max_retries=int(ep["max_retries"]),
            backoff=float(ep["backoff"]),
            prompt_template=ep["prompt_template"],
        )
    disciplines = a["disciplines"]
    return PipelineConfig(
        papers=_path(cfg["input"]["papers"], base),
        contexts=_path(cfg["input"]["contexts"], base),
        out=_path(r["out"], base),
        cue_lexicon=_path(cfg["lexicons"]["cue"], base),
        role_lexicon=_path(cfg["lexicons"]["role"], base),
        mapping=_path(cfg["mapping"], base),
        backend=c["backend"],
        endpoint=endpoint,
        analysis=AnalysisSettings(
            threshold=threshold,
            correlation_types=a["correlation_types"],
            cooccurrence_types=a["cooccurrence_types"],
            norm=a["norm"],
            disciplines=tuple(disciplines) if disciplines is not None else None,
        ),
        jobs=jobs,
        seed=seed,
        source=source,
        raw=cfg,
    )


def load_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    """Read ``path`` (YAML) and apply ``overrides``, a nested dict of flag values."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text("utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", str(path)) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}", str(path)) from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping", str(path))
    merged = _merge(DEFAULTS, raw)
    if overrides:
        merged = _merge(merged, overrides)
    return build_config(merged, path.parent.resolve(), source=path)

"""Pipeline configuration: defaults, config-file parsing, flag overrides.

Config files are plain ``key = value`` lines (``#`` comments allowed).
Precedence is command-line flags > config file > defaults; unknown keys are
rejected rather than ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Bad key, unparsable value, or out-of-range setting."""


@dataclass(frozen=True)
class PipelineConfig:
    kb_path: str | None = None  # None: packaged knowledge base
    max_gap: float = 3600.0
    split_gap: float | None = None
    max_timestamp: float | None = None  # ingest-time outcome-window cutoff
    k_max: int = 4
    lexicon_cap: int = 10**6
    min_support: float = 0.3
    lambda_init: tuple[float, float, float] = (0.1, 0.1, 0.1)
    tol: float = 1e-6
    max_iter: int = 200
    lambda_cap: float = 100.0
    sample_rate: float = 0.05
    d_max: int = 0
    w_slack: int | None = None
    epsilon: float = 1e-9
    knn_k: int = 7
    max_clusters: int = 10
    sym_similarity: bool = False
    count_features: bool = False
    dump_similarity: bool = False
    seed: int = 0
    workers: int = 0  # 0: use available parallelism

    def __post_init__(self) -> None:
        if self.max_gap <= 0:
            raise ConfigError("max_gap must be > 0")
        if self.split_gap is not None and self.split_gap <= 0:
            raise ConfigError("split_gap must be > 0 when set")
        if self.k_max < 1:
            raise ConfigError("k_max must be >= 1")
        if self.lexicon_cap < 1:
            raise ConfigError("lexicon_cap must be >= 1")
        if not 0 < self.min_support <= 1:
            raise ConfigError("min_support must be in (0, 1]")
        if len(self.lambda_init) != 3 or any(v < 0 for v in self.lambda_init):
            raise ConfigError("lambda_init must be three non-negative values")
        if self.tol <= 0:
            raise ConfigError("tol must be > 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.lambda_cap <= 0:
            raise ConfigError("lambda_cap must be > 0")
        if not 0 < self.sample_rate <= 1:
            raise ConfigError("sample_rate must be in (0, 1]")
        if self.d_max < 0:
            raise ConfigError("d_max must be >= 0")
        if self.w_slack is not None and self.w_slack < 0:
            raise ConfigError("w_slack must be >= 0 when set")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        if self.max_clusters < 1:
            raise ConfigError("max_clusters must be >= 1")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")


_FIELD_TYPES = {f.name: f for f in fields(PipelineConfig)}

_BOOL_VALUES = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    if key == "kb_path":
        return raw or None
    if key == "lambda_init":
        parts = [p for p in raw.replace(" ", "").split(",") if p]
        if len(parts) != 3:
            raise ConfigError("lambda_init needs three comma-separated values")
        return tuple(float(p) for p in parts)
    if key in ("split_gap", "max_timestamp", "w_slack"):
        if raw.lower() in ("", "none", "off"):
            return None
        return int(raw) if key == "w_slack" else float(raw)
    if key in ("sym_similarity", "count_features", "dump_similarity"):
        try:
            return _BOOL_VALUES[raw.lower()]
        except KeyError:
            raise ConfigError(f"{key} must be true/false, got {raw!r}") from None
    if key in ("k_max", "lexicon_cap", "max_iter", "d_max", "knn_k",
               "max_clusters", "seed", "workers"):
        return int(raw)
    return float(raw)


def load_config_file(path: str | Path) -> dict:
    """Parse a key-value config file into an override mapping."""
    overrides: dict = {}
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key in overrides:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            overrides[key] = _parse_value(key, raw)
    return overrides


def resolve_config(
    file_path: str | Path | None = None, **flag_overrides
) -> PipelineConfig:
    """Defaults, then config file, then explicit flags (None flags ignored)."""
    settings: dict = {}
    if file_path is not None:
        settings.update(load_config_file(file_path))
    for key, value in flag_overrides.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            settings[key] = value
    return PipelineConfig(**settings)


def config_to_dict(config: PipelineConfig) -> dict:
    out = {}
    for f in fields(PipelineConfig):
        value = getattr(config, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out

"""Run configuration: defaults, config-file parsing, and hashing."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .errors import ConfigError


@dataclass
class RunConfig:
    """Everything a training or evaluation run needs.

    Defaults follow the documented hyperparameters: m=16 attention heads,
    margin 0.2, learning rate 1e-4, inverse temperature 9, K=2 matching
    steps.
    """

    # paths
    img_embeddings: str = ""
    txt_embeddings: str = ""
    manifest: str = ""
    out_dir: str = "run"
    # model hyperparameters
    d: int = 64
    m: int = 16
    hidden: int = 0          # 0 means "same as d"
    lam: float = 9.0
    margin: float = 0.2
    k_steps: int = 2
    # training
    batch_size: int = 16
    lr: float = 1e-4
    epochs: int = 15
    max_steps: int = 0       # 0 means no cap
    seed: int = 0
    eval_split: str = "test"
    # ablation flags
    frozen_attention: bool = False
    hardest_negative: bool = False
    normalize_over: str = "queries"   # Eq-style column normalization

    def validate(self) -> None:
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.k_steps < 1:
            raise ConfigError("k_steps must be >= 1")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")
        if self.eval_split not in ("train", "val", "test"):
            raise ConfigError(f"unknown eval_split {self.eval_split!r}")
        if self.normalize_over not in ("queries", "context"):
            raise ConfigError(
                f"normalize_over must be 'queries' or 'context', "
                f"got {self.normalize_over!r}")

    @property
    def hidden_width(self) -> int:
        return self.hidden or self.d

    def snapshot(self) -> str:
        """Reproducible `key = value` text covering every field."""
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        """Hash of the model-shaping fields (paths excluded)."""
        keys = ("d", "m", "hidden", "lam", "margin", "k_steps",
                "frozen_attention", "hardest_negative", "normalize_over")
        text = "|".join(f"{k}={getattr(self, k)}" for k in keys)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _parse_value(name: str, raw: str, target_type):
    raw = raw.strip()
    try:
        if target_type is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return target_type(raw)
    except ValueError as exc:
        raise ConfigError(
            f"config key {name!r}: cannot parse {raw!r} as "
            f"{target_type.__name__}") from exc


def load_config(path) -> RunConfig:
    """Parse a line-oriented `key = value` config file with # comments."""
    cfg = RunConfig()
    apply_config_text(cfg, open(path, "r", encoding="utf-8").read(), path)
    return cfg


def apply_config_text(cfg: RunConfig, text: str, origin: str = "<config>") -> None:
    types = {f.name: f.type for f in fields(RunConfig)}
    py_types = {"int": int, "float": float, "str": str, "bool": bool}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in types:
            raise ConfigError(f"{origin}:{lineno}: unknown config key {key!r}")
        target = py_types.get(types[key], str) if isinstance(types[key], str) \
            else types[key]
        setattr(cfg, key, _parse_value(key, raw, target))


def apply_overrides(cfg: RunConfig, overrides: dict) -> None:
    """Apply already-typed values (e.g. from CLI flags); flags win."""
    valid = {f.name for f in fields(RunConfig)}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in valid:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, value)

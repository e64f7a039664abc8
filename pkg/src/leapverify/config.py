"""Experiment configuration: one flat record, validated up front.

Configs live in a plain-text ``key = value`` format so an experiment's
effective settings can be written next to its outputs and fed back in to
reproduce it. Parsing rejects unknown keys outright; a silently ignored typo
in a threshold would otherwise cost a full rerun to notice.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .engine import FF_POLICIES, MOMENTUM_VARIANTS, CascadeConfig
from .predict import LINEAR, MOMENTUM, QUADRATIC
from .tasks import TASK_NAMES
from .verify import CRITERIA

QUAD_VARIANTS = ("paper", "exact")
SWEEP_PREDICTORS = (MOMENTUM, LINEAR, QUADRATIC)
OUT_ENV_VAR = "LEAPVERIFY_OUT"

DEFAULT_K_SET = (5, 10, 25, 50, 75, 100)
DEFAULT_CASCADES = ((4, 25), (2, 50), (10, 10))


@dataclass(frozen=True)
class RunConfig:
    """Everything a full experiment needs; defaults run the full protocol."""

    task: str = "mlp-reg"
    seeds: tuple[int, ...] = (42, 43, 44, 45, 46)
    steps: int = 2000
    delta: int = 50

    # optimizer; lr None defers to the task's recommended rate
    lr: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    eps: float = 1e-8
    warmup_steps: int = 100

    # regime thresholds: explicit taus win, else quantile calibration
    tau_low: float | None = None
    tau_high: float | None = None
    q_low: float = 0.25
    q_high: float = 0.75
    calibration_seeds: tuple[int, ...] = (1, 2)

    # speculation grid and verification knobs
    k_set: tuple[int, ...] = DEFAULT_K_SET
    epsilon: float = 0.05
    adaptive_window: int = 5
    criterion: str = "strict"
    momentum_variant: str = "paper"
    quad_variant: str = "paper"
    ff_policy: str = "carry"
    regime_gating: bool = True
    live_predictor: str = LINEAR
    live_k: int = 50
    cascades: tuple[tuple[int, int], ...] = DEFAULT_CASCADES

    # task construction overrides (None keeps each task's default)
    batch_size: int | None = None
    probe_count: int | None = None
    noise: float | None = None
    dim: int | None = None
    data_seed: int = 7

    out: str | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.task not in TASK_NAMES:
            raise ValueError(f"unknown task {self.task!r}; choose from {TASK_NAMES}")
        if not self.seeds:
            raise ValueError("at least one seed required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("duplicate seeds")
        if self.steps < 1 or self.delta < 1:
            raise ValueError("steps and delta must be >= 1")
        if self.delta > self.steps:
            raise ValueError("delta exceeds steps; no checkpoint would be taken")
        if self.lr is not None and self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.warmup_steps <= self.steps):
            raise ValueError("need 0 <= warmup_steps <= steps")
        if (self.tau_low is None) != (self.tau_high is None):
            raise ValueError("set both tau_low and tau_high or neither")
        if self.tau_low is not None and not (-1.0 <= self.tau_low < self.tau_high <= 1.0):
            raise ValueError("need -1 <= tau_low < tau_high <= 1")
        if not (0.0 <= self.q_low < self.q_high <= 1.0):
            raise ValueError("need 0 <= q_low < q_high <= 1")
        if not self.calibration_seeds:
            raise ValueError("at least one calibration seed required")
        if not self.k_set or any(k < 1 for k in self.k_set):
            raise ValueError("k_set must be non-empty positive integers")
        if len(set(self.k_set)) != len(self.k_set):
            raise ValueError("duplicate K values")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError("epsilon must lie in (0, 1)")
        if self.adaptive_window < 2:
            raise ValueError("adaptive_window must be >= 2")
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.momentum_variant not in MOMENTUM_VARIANTS:
            raise ValueError(f"unknown momentum_variant {self.momentum_variant!r}")
        if self.quad_variant not in QUAD_VARIANTS:
            raise ValueError(f"unknown quad_variant {self.quad_variant!r}")
        if self.ff_policy not in FF_POLICIES:
            raise ValueError(f"unknown ff_policy {self.ff_policy!r}")
        if self.live_predictor not in SWEEP_PREDICTORS:
            raise ValueError(f"live_predictor must be one of {SWEEP_PREDICTORS}")
        if self.live_k < 1:
            raise ValueError("live_k must be >= 1")
        for d, k in self.cascades:
            CascadeConfig(depth=d, k=k)  # reuse its validation
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


def _fmt_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join(f"{d}x{k}" for d, k in value)
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_cascades(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        d, _, k = part.partition("x")
        out.append((int(d), int(k)))
    return tuple(out)


def _opt(convert):
    return lambda text: None if text == "none" else convert(text)


def _parse_bool(text: str) -> bool:
    if text not in ("true", "false"):
        raise ValueError(f"expected true/false, got {text!r}")
    return text == "true"


_PARSERS = {
    "task": str,
    "seeds": _parse_int_tuple,
    "steps": int,
    "delta": int,
    "lr": _opt(float),
    "beta1": float,
    "beta2": float,
    "weight_decay": float,
    "eps": float,
    "warmup_steps": int,
    "tau_low": _opt(float),
    "tau_high": _opt(float),
    "q_low": float,
    "q_high": float,
    "calibration_seeds": _parse_int_tuple,
    "k_set": _parse_int_tuple,
    "epsilon": float,
    "adaptive_window": int,
    "criterion": str,
    "momentum_variant": str,
    "quad_variant": str,
    "ff_policy": str,
    "regime_gating": _parse_bool,
    "live_predictor": str,
    "live_k": int,
    "cascades": _parse_cascades,
    "batch_size": _opt(int),
    "probe_count": _opt(int),
    "noise": _opt(float),
    "dim": _opt(int),
    "data_seed": int,
    "out": _opt(str),
    "jobs": int,
}


def format_config(cfg: RunConfig) -> str:
    lines = [f"{f.name} = {_fmt_value(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse key = value lines onto `base` (default: all defaults).

    Blank lines and #-comments are skipped; keys outside RunConfig raise.
    """
    overrides: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in _PARSERS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in overrides:
            raise ValueError(f"line {lineno}: duplicate config key {key!r}")
        try:
            overrides[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    base = base if base is not None else RunConfig()
    return replace(base, **overrides)


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(), base)


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(format_config(cfg))


def config_dict(cfg: RunConfig) -> dict:
    """JSON-friendly view of the effective config (tuples become lists)."""
    out: dict = {}
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = [list(v) if isinstance(v, tuple) else v for v in value]
        out[f.name] = value
    return out


def resolve_out_root(cfg: RunConfig) -> Path:
    """Output root: explicit config/flag, else $LEAPVERIFY_OUT, else ./out."""
    if cfg.out:
        return Path(cfg.out)
    env = os.environ.get(OUT_ENV_VAR)
    return Path(env) if env else Path("out")

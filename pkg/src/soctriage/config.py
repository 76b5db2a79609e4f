"""Pipeline configuration: a YAML key tree over typed defaults.

Precedence is command-line overrides, then the config file, then the
defaults below. Unknown keys are rejected at every level.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml

from .exceptions import ConfigError


@dataclass
class InputConfig:
    # None means "generate the synthetic scenario".
    path: Optional[str] = None
    columns: Optional[Dict[str, str]] = None
    timestamp_unit: str = "auto"


@dataclass
class SynthConfig:
    duration_min: float = 1440.0
    benign_rate_per_min: float = 10.0
    n_hosts: int = 24
    port_weights: Dict[int, float] = field(default_factory=lambda: {53: 0.30, 80: 0.20, 443: 0.40, 22: 0.10})
    bytes_log_mu: float = 7.0
    bytes_log_sigma: float = 1.0
    attacker_benign_share: float = 0.03
    n_random_attacks: int = 48
    n_random_bursts: int = 10
    n_random_sweeps: int = 12
    external_scan_share: float = 0.5
    scans: Optional[List[dict]] = None
    floods: Optional[List[dict]] = None
    bursts: Optional[List[dict]] = None
    sweeps: Optional[List[dict]] = None


@dataclass
class WindowConfig:
    delta_min: float = 5.0
    vocab_k: int = 16


@dataclass
class AADConfig:
    alpha: float = 0.25
    hidden: int = 8
    bottleneck: int = 2
    epochs: int = 200
    lr: float = 1e-2
    batch_size: int = 32
    epsilon: float = 1e-8


@dataclass
class RewardConfig:
    modes: List[str] = field(default_factory=lambda: ["A", "B", "C", "D"])
    # Optional per-mode overrides: {mode: {tp, fp, fn, tn, noise_sigma}}.
    matrices: Dict[str, Dict[str, float]] = field(default_factory=dict)


@dataclass
class PPOConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    lr: float = 1e-3
    epochs_per_update: int = 4
    minibatch_size: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    total_passes: int = 100
    hidden: int = 64
    state_clip: Optional[float] = 5.0


@dataclass
class CVConfig:
    folds: int = 5


@dataclass
class TriageConfig:
    # Reward mode whose out-of-fold decisions drive triage.
    mode: str = "A"
    threshold_mode: str = "absolute"
    threshold: float = 5.0
    top_pct: float = 10.0
    spl_template: str = "burst_transaction"
    backend: str = "stub"
    max_concurrency: int = 4
    expose_real_ips: bool = False


@dataclass
class PipelineConfig:
    input: InputConfig = field(default_factory=InputConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    windows: WindowConfig = field(default_factory=WindowConfig)
    aad: AADConfig = field(default_factory=AADConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    cv: CVConfig = field(default_factory=CVConfig)
    triage: TriageConfig = field(default_factory=TriageConfig)
    output_dir: str = "out"
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def delta_ms(self) -> int:
        return int(round(self.windows.delta_min * 60_000))


def _build(cls, data: Any, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = f" in {path}" if path else ""
        raise ConfigError(f"unknown config key(s){where}: {', '.join(map(str, unknown))}")
    kwargs = {}
    for name, value in data.items():
        sub = fields[name].type
        where = f"{path}.{name}" if path else name
        target = _SECTIONS.get(sub) if isinstance(sub, str) else None
        kwargs[name] = _build(target, value, where) if target else _coerce(sub, value, where)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


_SCALARS = {"float": float, "int": int, "bool": bool, "str": str}


def _coerce(type_name, value, where: str):
    """Cast scalars to the declared field type; YAML reads ``1e3`` as a string."""
    optional = isinstance(type_name, str) and type_name.startswith("Optional[")
    base = type_name[len("Optional["):-1] if optional else type_name
    cast = _SCALARS.get(base)
    if cast is None or (optional and value is None):
        return value
    if cast is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{where}: expected true/false, got {value!r}")
    if cast is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    try:
        return cast(float(value)) if cast is int and isinstance(value, (str, float)) else cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {base}, got {value!r}") from None


_SECTIONS = {
    "InputConfig": InputConfig, "SynthConfig": SynthConfig, "WindowConfig": WindowConfig,
    "AADConfig": AADConfig, "RewardConfig": RewardConfig, "PPOConfig": PPOConfig,
    "CVConfig": CVConfig, "TriageConfig": TriageConfig,
}


def validate(cfg: PipelineConfig) -> None:
    checks = [
        (cfg.windows.delta_min > 0, "windows.delta_min must be positive"),
        (cfg.windows.vocab_k >= 1, "windows.vocab_k must be at least 1"),
        (0.0 < cfg.aad.alpha < 1.0, "aad.alpha must lie in (0, 1)"),
        (cfg.aad.epsilon > 0, "aad.epsilon must be positive"),
        (cfg.aad.epochs >= 0 and cfg.aad.batch_size >= 1, "aad.epochs/batch_size out of range"),
        (cfg.cv.folds >= 2, "cv.folds must be at least 2"),
        (cfg.triage.threshold >= 0, "triage.threshold must be non-negative"),
        (cfg.triage.threshold_mode in ("absolute", "percentile"), "triage.threshold_mode must be absolute or percentile"),
        (0.0 < cfg.triage.top_pct <= 100.0, "triage.top_pct must lie in (0, 100]"),
        (cfg.triage.spl_template in ("burst_transaction", "host_filter"), "unknown triage.spl_template"),
        (cfg.triage.backend in ("stub", "chat"), "triage.backend must be stub or chat"),
        (cfg.triage.max_concurrency >= 1, "triage.max_concurrency must be at least 1"),
        (cfg.jobs >= 1, "jobs must be at least 1"),
        (len(cfg.rewards.modes) > 0, "rewards.modes must not be empty"),
        (0.0 < cfg.ppo.gamma <= 1.0, "ppo.gamma must lie in (0, 1]"),
        (cfg.ppo.clip_epsilon > 0, "ppo.clip_epsilon must be positive"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    for m in cfg.rewards.modes:
        if m not in ("A", "B", "C", "D") and m not in cfg.rewards.matrices:
            raise ConfigError(f"reward mode {m!r} has no matrix")
    if cfg.triage.mode not in cfg.rewards.modes:
        raise ConfigError(f"triage.mode {cfg.triage.mode!r} is not among rewards.modes")


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_overrides(pairs: List[str]) -> dict:
    """Turn ``["ppo.lr=0.001", "triage.backend=chat"]`` into a nested dict."""
    tree: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, raw = pair.split("=", 1)
        value = yaml.safe_load(raw) if raw else None
        node = tree
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return tree


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    data: dict = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    if overrides:
        data = _merge(data, overrides)
    return _build(PipelineConfig, data, "")


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)

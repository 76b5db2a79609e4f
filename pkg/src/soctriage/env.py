"""Containment MDP over window sequences, reward modes, cost/regret and CV folds."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .exceptions import SteppedPastEnd, TooFewWindows

OUTCOMES = {(1, 1): "TP", (1, 0): "FP", (0, 1): "FN", (0, 0): "TN"}


@dataclass(frozen=True)
class RewardMode:
    """Reward matrix R(a, y) plus optional Gaussian reward noise."""

    mode_id: str
    tp: float
    fp: float
    fn: float
    tn: float
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not (self.tp > self.fn and self.tn > self.fp):
            raise ValueError(
                f"mode {self.mode_id}: the correct action must be strictly preferred "
                "(need tp > fn and tn > fp)"
            )

    def base(self, a: int, y: int) -> float:
        return {(1, 1): self.tp, (1, 0): self.fp, (0, 1): self.fn, (0, 0): self.tn}[(a, y)]

    def to_dict(self) -> dict:
        return asdict(self)


DEFAULT_MODES: Dict[str, RewardMode] = {
    "A": RewardMode("A", tp=1.0, fp=-1.0, fn=-2.0, tn=1.0),
    "B": RewardMode("B", tp=1.0, fp=-3.0, fn=-1.0, tn=2.0),
    "C": RewardMode("C", tp=1.0, fp=-1.5, fn=-1.5, tn=1.0),
    "D": RewardMode("D", tp=1.0, fp=-1.5, fn=-1.5, tn=1.0, noise_sigma=0.1),
}


def reward(mode: RewardMode, a: int, y: int, rng: Optional[np.random.Generator] = None) -> float:
    r = mode.base(a, y)
    if mode.noise_sigma > 0:
        if rng is None:
            raise ValueError("a seeded generator is required for noisy reward modes")
        r += float(rng.normal(0.0, mode.noise_sigma))
    return r


def decision_cost(r: float) -> float:
    return -r


def oracle_reward(mode: RewardMode, y: int) -> float:
    return max(mode.base(0, y), mode.base(1, y))


def regret(mode: RewardMode, a: int, y: int, r_realized: Optional[float] = None) -> float:
    """Oracle reward minus the noise-free reward of ``(a, y)``."""
    if r_realized is None:
        r_realized = mode.base(a, y)
    return oracle_reward(mode, y) - r_realized


def oracle_action(mode: RewardMode, y: int) -> int:
    return int(mode.base(1, y) >= mode.base(0, y))


@dataclass(frozen=True)
class EpisodeStep:
    t: int
    action: int
    label: int
    reward: float
    base_reward: float
    outcome: str

    @property
    def cost(self) -> float:
        return decision_cost(self.base_reward)


class ContainmentEnv:
    """Single-consumer environment walking a window sequence in time order.

    Actions do not influence which window comes next; the label of each
    window only enters through the reward.
    """

    def __init__(self, states, labels, mode: RewardMode, seed=0):
        self.states = np.asarray(states, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=int)
        if len(self.states) != len(self.labels):
            raise ValueError("states and labels must have equal length")
        self.mode = mode
        self.rng = np.random.default_rng(seed)
        self.reset()

    @property
    def horizon(self) -> int:
        return len(self.labels)

    def reset(self):
        self.cursor = 0
        self.log: List[EpisodeStep] = []
        return self.states[0] if self.horizon else None

    @property
    def done(self) -> bool:
        return self.cursor >= self.horizon

    def observe(self):
        return None if self.done else self.states[self.cursor]

    def step(self, a: int):
        if self.done:
            raise SteppedPastEnd(f"environment exhausted after {self.horizon} steps")
        a = int(a)
        y = int(self.labels[self.cursor])
        r = reward(self.mode, a, y, self.rng)
        self.log.append(EpisodeStep(self.cursor, a, y, r, self.mode.base(a, y), OUTCOMES[(a, y)]))
        self.cursor += 1
        return self.observe(), r, self.done


@dataclass(frozen=True)
class FoldSplit:
    fold: int
    train: tuple
    test: tuple


def time_series_folds(windows: Sequence, k: int = 5) -> List[FoldSplit]:
    """Expanding-window folds: fold i trains on the first i/(k+1) of the
    sequence and tests on the following 1/(k+1)."""
    n = len(windows)
    if k < 2:
        raise TooFewWindows("k must be at least 2")
    if n < k + 1:
        raise TooFewWindows(f"{n} windows cannot form {k} folds (need {k + 1})")
    bounds = [(j * n) // (k + 1) for j in range(k + 2)]
    return [
        FoldSplit(fold=i, train=tuple(range(bounds[i])), test=tuple(range(bounds[i], bounds[i + 1])))
        for i in range(1, k + 1)
    ]


@dataclass
class StepLogRow:
    mode: str
    fold: int
    t: int
    a: int
    y: int
    r: float
    cost: float
    regret: float


STEP_LOG_COLUMNS = ("t", "a", "y", "r", "cost", "regret", "mode", "fold")


def step_log_rows(mode: RewardMode, fold: int, t_index: Sequence[int], actions, labels, rewards=None):
    rows = []
    for i, (t, a, y) in enumerate(zip(t_index, actions, labels)):
        a, y = int(a), int(y)
        base = mode.base(a, y)
        r = base if rewards is None else float(rewards[i])
        rows.append(StepLogRow(mode.mode_id, fold, int(t), a, y, r, decision_cost(base), regret(mode, a, y)))
    return rows


def step_log_csv(rows: Iterable[StepLogRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=STEP_LOG_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: getattr(row, k) for k in STEP_LOG_COLUMNS})
    return buf.getvalue()


COST_REGRET_COLUMNS = ("mode", "mean_cost", "std_cost", "mean_regret", "std_regret")


def summarize_cost_regret(rows: Iterable[StepLogRow]) -> List[dict]:
    """Per-mode mean and (population) std of per-step cost and regret."""
    by_mode: Dict[str, list] = {}
    for row in rows:
        by_mode.setdefault(row.mode, []).append(row)
    if not by_mode:
        raise ValueError("need at least one fold log")
    table = []
    for mode in sorted(by_mode):
        costs = np.array([r.cost for r in by_mode[mode]])
        regrets = np.array([r.regret for r in by_mode[mode]])
        table.append({
            "mode": mode,
            "mean_cost": float(costs.mean()),
            "std_cost": float(costs.std()),
            "mean_regret": float(regrets.mean()),
            "std_regret": float(regrets.std()),
        })
    return table

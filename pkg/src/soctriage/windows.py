"""Fixed-length time windows and the per-window state vector."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import EmptyWindow
from .flows import FlowDataset, FlowRecord

FIVE_MINUTES_MS = 5 * 60 * 1000

NUMERIC_FEATURES = (
    "src_port_mean",
    "src_port_max",
    "dest_port_mean",
    "dest_port_max",
    "bytes_in_mean",
    "bytes_out_max",
)
CATEGORICAL_ATTRS = ("src_ip", "dest_ip", "protocol")
OTHER = "OTHER"


@dataclass
class Window:
    index: int
    start_ms: int
    end_ms: int
    flows: List[FlowRecord] = field(default_factory=list)

    @property
    def label(self) -> int:
        # OR over member labels; unlabeled flows count as benign.
        return int(any(f.label == 1 for f in self.flows))

    def __len__(self):
        return len(self.flows)


@dataclass(frozen=True)
class CategoricalVocab:
    src_ip: tuple
    dest_ip: tuple
    protocol: tuple

    def entries(self, attr: str) -> tuple:
        return getattr(self, attr)

    @property
    def size(self) -> int:
        return sum(len(self.entries(a)) for a in CATEGORICAL_ATTRS)

    def feature_names(self) -> list:
        return [f"{a}={v}" for a in CATEGORICAL_ATTRS for v in self.entries(a)]

    def to_dict(self) -> dict:
        return {a: list(self.entries(a)) for a in CATEGORICAL_ATTRS}

    @classmethod
    def from_dict(cls, d: dict) -> "CategoricalVocab":
        return cls(**{a: tuple(d[a]) for a in CATEGORICAL_ATTRS})


@dataclass(frozen=True)
class WindowState:
    numeric: np.ndarray
    categorical: np.ndarray

    @property
    def dim(self) -> int:
        return self.numeric.size + self.categorical.size

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.numeric, self.categorical])


@dataclass(frozen=True)
class WindowMetadata:
    flow_id: str
    src_ip: str
    dest_ip: str
    dest_port: int
    flow_count: int
    distinct_dest_count: int
    distinct_dest_ports: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def partition_windows(
    d: FlowDataset | Sequence[FlowRecord],
    delta_ms: int = FIVE_MINUTES_MS,
    origin_ms: Optional[int] = None,
) -> List[Window]:
    """Bucket time-sorted flows into non-overlapping windows of ``delta_ms``.

    The grid is anchored at ``origin_ms`` (default: the first timestamp
    floored to a multiple of ``delta_ms``). Empty buckets are skipped, so
    window indices are consecutive over non-empty windows only.
    """
    if delta_ms <= 0:
        raise ValueError("delta_ms must be positive")
    records = list(d)
    if not records:
        return []
    if origin_ms is None:
        origin_ms = (records[0].timestamp // delta_ms) * delta_ms
    windows: List[Window] = []
    current_bucket = None
    for rec in records:
        bucket = (rec.timestamp - origin_ms) // delta_ms
        if current_bucket is not None and bucket < current_bucket:
            raise ValueError("flows must be sorted by timestamp")
        if bucket != current_bucket:
            start = origin_ms + bucket * delta_ms
            windows.append(Window(index=len(windows), start_ms=start, end_ms=start + delta_ms))
            current_bucket = bucket
        windows[-1].flows.append(rec)
    return windows


def aggregate_numeric(w: Window) -> np.ndarray:
    """Return [mean(src_port), max(src_port), mean(dest_port), max(dest_port),
    mean(bytes_in), max(bytes_out)] for the window's flows."""
    if not w.flows:
        raise EmptyWindow(f"window {w.index} has no flows")
    raw = np.array(
        [(f.src_port, f.dest_port, f.bytes_in, f.bytes_out) for f in w.flows],
        dtype=np.float64,
    )
    mean = raw.mean(axis=0)
    mx = raw.max(axis=0)
    return np.array([mean[0], mx[0], mean[1], mx[1], mean[2], mx[3]])


def build_vocab(train_windows: Iterable[Window], k: int = 16) -> CategoricalVocab:
    if k < 1:
        raise ValueError("k must be >= 1")
    counters = {a: Counter() for a in CATEGORICAL_ATTRS}
    for w in train_windows:
        for f in w.flows:
            for a in CATEGORICAL_ATTRS:
                counters[a][getattr(f, a)] += 1
    vocab = {}
    for a, counts in counters.items():
        counts.pop(OTHER, None)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        vocab[a] = tuple(v for v, _ in ranked[:k]) + (OTHER,)
    return CategoricalVocab(**vocab)


def _categorical_counts(w: Window, vocab: CategoricalVocab) -> np.ndarray:
    parts = []
    for a in CATEGORICAL_ATTRS:
        entries = vocab.entries(a)
        pos = {v: i for i, v in enumerate(entries)}
        other = len(entries) - 1
        counts = np.zeros(len(entries))
        for f in w.flows:
            counts[pos.get(getattr(f, a), other)] += 1
        parts.append(counts)
    return np.concatenate(parts)


def build_state(w: Window, vocab: CategoricalVocab) -> WindowState:
    return WindowState(numeric=aggregate_numeric(w), categorical=_categorical_counts(w, vocab))


def _mode_first(values: Sequence) -> object:
    counts = Counter(values)
    best = max(counts.values())
    # Counter preserves insertion order, so the first hit is the earliest value.
    return next(v for v, c in counts.items() if c == best)


def build_metadata(w: Window) -> WindowMetadata:
    if not w.flows:
        raise EmptyWindow(f"window {w.index} has no flows")
    return WindowMetadata(
        flow_id=_mode_first([f.flow_id for f in w.flows]),
        src_ip=_mode_first([f.src_ip for f in w.flows]),
        dest_ip=_mode_first([f.dest_ip for f in w.flows]),
        dest_port=_mode_first([f.dest_port for f in w.flows]),
        flow_count=len(w.flows),
        distinct_dest_count=len({f.dest_ip for f in w.flows}),
        distinct_dest_ports=len({f.dest_port for f in w.flows}),
    )


def numeric_matrix(windows: Sequence[Window]) -> np.ndarray:
    if not windows:
        return np.empty((0, len(NUMERIC_FEATURES)))
    return np.vstack([aggregate_numeric(w) for w in windows])


class WindowFeaturizer(TransformerMixin, BaseEstimator):
    """Turns windows into fixed-width state vectors.

    ``fit`` learns the reduced categorical vocabulary from training windows;
    ``transform`` stacks the numeric 6-vector and the categorical counts.

    Parameters
    ----------
    k : int
        Number of most frequent values kept per categorical attribute.
    """

    def __init__(self, k: int = 16):
        self.k = k

    def fit(self, windows, y=None):
        self.vocab_ = build_vocab(windows, self.k)
        self.n_features_out_ = len(NUMERIC_FEATURES) + self.vocab_.size
        return self

    def transform(self, windows) -> np.ndarray:
        check_is_fitted(self, "vocab_")
        if not windows:
            return np.empty((0, self.n_features_out_))
        return np.vstack([build_state(w, self.vocab_).vector for w in windows])

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "vocab_")
        return np.array(list(NUMERIC_FEATURES) + self.vocab_.feature_names(), dtype=object)


def states_to_csv(windows: Sequence[Window], vocab: CategoricalVocab) -> str:
    """Debug export: one row per window, numeric fields then categorical counts."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "start_ms", "label", *NUMERIC_FEATURES, *vocab.feature_names()])
    for w in windows:
        vec = build_state(w, vocab).vector
        writer.writerow([w.index, w.start_ms, w.label, *(repr(float(x)) for x in vec)])
    return buf.getvalue()

"""Self-contained numeric check of the worked aggregation -> AAD -> policy example.

No input files, no network. Each step compares this package's code path
against the published hand-computed values.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import List

import numpy as np

from .aad import BenignStandardizer, aad_score, load_explicit_weights
from .flows import FlowRecord
from .ppo import action_probs
from .windows import Window, aggregate_numeric, build_metadata
from .aad import ScoredWindow
from .triage import compute_priorities

# (src_port, dest_port, bytes_in, bytes_out) of the four example flows.
EXAMPLE_FLOWS = [
    (443, 52344, 1200, 300),
    (443, 52345, 1300, 350),
    (22, 52346, 8000, 9000),
    (22, 52347, 9000, 11000),
]
EXAMPLE_MU = [200, 400, 52000, 52000, 2000, 5000]
EXAMPLE_SIGMA = [100, 100, 200, 200, 2000, 3000]
EXAMPLE_WEIGHTS = {
    "weights": [
        [[0.30, 0.10, 0.05, 0.05, 0.10, 0.20],
         [0.10, 0.20, 0.10, 0.10, 0.20, 0.10],
         [0.05, 0.05, 0.30, 0.30, 0.10, 0.10],
         [0.10, 0.10, 0.20, 0.20, 0.10, 0.05]],
        [[0.6, 0.2, 0.1, 0.1],
         [0.1, 0.2, 0.6, 0.1]],
        [[0.20, 0.00], [0.10, 0.05], [0.30, 0.10], [0.30, 0.10], [0.10, 0.20], [0.05, 0.40]],
    ],
    "activations": ["relu", "relu", "identity"],
}

EXPECTED = {
    "aggregation": [232.5, 443, 52345.5, 52347, 4875, 11000],
    "standardization": [0.325, 0.43, 1.7275, 1.735, 1.4375, 2.0],
    "bottleneck": [0.9482, 1.2297],
    "aad": 1.1558,
    "softmax_end_to_end": [0.057, 0.943],
    "softmax_single_window": [0.08, 0.92],
}
TOLERANCE = {
    "aggregation": 0.0,
    "standardization": 1e-9,
    "bottleneck": 1e-3,
    "aad": 1e-3,
    "softmax_end_to_end": 5e-3,
    "softmax_single_window": 5e-3,
    "priority": 0.0,
}


@dataclass(frozen=True)
class OracleCheck:
    step: str
    expected: object
    actual: object
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.step:<24} actual={_show(self.actual)} expected={_show(self.expected)} tol={self.tolerance:g}"


def _show(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(f"{float(x):.6g}" for x in v) + "]"
    return f"{float(v):.6g}"


def _check(step: str, actual, expected) -> OracleCheck:
    tol = TOLERANCE[step]
    diff = np.max(np.abs(np.asarray(actual, dtype=float) - np.asarray(expected, dtype=float)))
    return OracleCheck(step, expected, actual, tol, bool(diff <= tol))


def example_window() -> Window:
    w = Window(index=0, start_ms=0, end_ms=300_000)
    for i, (sp, dp, bi, bo) in enumerate(EXAMPLE_FLOWS):
        w.flows.append(FlowRecord(timestamp=1000 * i, flow_id=f"ex{i + 1}", src_ip="192.0.2.10",
                                  dest_ip="192.0.2.20", src_port=sp, dest_port=dp, protocol="TCP",
                                  bytes_in=bi, bytes_out=bo, label=1))
    return w


def run_oracle() -> List[OracleCheck]:
    checks = []
    w = example_window()
    x = aggregate_numeric(w)
    checks.append(_check("aggregation", x.tolist(), EXPECTED["aggregation"]))

    x_std = BenignStandardizer.from_params(EXAMPLE_MU, EXAMPLE_SIGMA).transform(x)
    checks.append(_check("standardization", x_std.tolist(), EXPECTED["standardization"]))

    model = load_explicit_weights(EXAMPLE_WEIGHTS)
    checks.append(_check("bottleneck", model.encode(x_std).tolist(), EXPECTED["bottleneck"]))

    score = aad_score(model, x_std)
    checks.append(_check("aad", score, EXPECTED["aad"]))

    checks.append(_check("softmax_end_to_end", action_probs(np.array([-1.2, 1.6])).tolist(),
                         EXPECTED["softmax_end_to_end"]))
    checks.append(_check("softmax_single_window", action_probs(np.array([-1.31, 1.11])).tolist(),
                         EXPECTED["softmax_single_window"]))

    scored = [ScoredWindow(0, 0, score, build_metadata(w), 1)]
    contained = compute_priorities([1], scored)[0].priority
    allowed = compute_priorities([0], scored)[0].priority
    checks.append(OracleCheck("priority", [score, 0.0], [contained, allowed], 0.0,
                              contained == score and allowed == 0.0))
    return checks


def oracle_report() -> tuple:
    """Run every check; returns ``(checks, elapsed_seconds, text)``."""
    t0 = time.perf_counter()
    checks = run_oracle()
    elapsed = time.perf_counter() - t0
    lines = [c.line() for c in checks]
    n_ok = sum(c.passed for c in checks)
    lines.append(f"{n_ok}/{len(checks)} steps passed in {elapsed * 1000:.1f} ms")
    return checks, elapsed, "\n".join(lines)

"""Stage orchestration shared by the CLI and the acceptance checks."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .aad import (BenignStandardizer, ReconstructionAutoencoder, ScoredWindow,
                  benign_training_matrix, save_aad_model, score_windows)
from .config import PipelineConfig
from .env import (COST_REGRET_COLUMNS, DEFAULT_MODES, RewardMode, StepLogRow, step_log_csv,
                  step_log_rows, summarize_cost_regret, time_series_folds)
from .exceptions import EmptyTrainingSet, MissingArtifact
from .flows import (ColumnMapping, FlowDataset, dedupe_and_sort, filter_benign, read_flows,
                    split_train_period)
from .ppo import ContainmentAgent, EvalMetrics, TrainConfig
from .seeding import derive_seed
from .synth import ScenarioConfig, compose_scenario
from .triage import (ChatBackend, PseudonymMap, StubBackend, build_reports, compute_priorities,
                     percentile_threshold, resolve_spl, select_for_analysis, summary_csv)
from .windows import Window, WindowFeaturizer, WindowMetadata, partition_windows

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("mode", "fold", "precision", "recall", "f1", "mean_cost", "mean_regret", "reduction_pct")
SCORED_COLUMNS = ("t", "start_ms", "aad_score", "label", "flow_id", "src_ip", "dest_ip", "dest_port",
                  "flow_count", "distinct_dest_count", "distinct_dest_ports")
ACTION_COLUMNS = ("t", "mode", "fold", "action")


def scenario_config(cfg: PipelineConfig) -> ScenarioConfig:
    s = cfg.synth
    return ScenarioConfig(
        duration_min=s.duration_min, benign_rate_per_min=s.benign_rate_per_min, n_hosts=s.n_hosts,
        port_weights=dict(s.port_weights), bytes_log_mu=s.bytes_log_mu,
        bytes_log_sigma=s.bytes_log_sigma, attacker_benign_share=s.attacker_benign_share,
        scans=s.scans, floods=s.floods, bursts=s.bursts, sweeps=s.sweeps,
        n_random_attacks=s.n_random_attacks, n_random_bursts=s.n_random_bursts,
        n_random_sweeps=s.n_random_sweeps, external_scan_share=s.external_scan_share, seed=cfg.seed,
    )


def input_schema(cfg: PipelineConfig) -> Optional[ColumnMapping]:
    if cfg.input.columns:
        return ColumnMapping.from_dict(cfg.input.columns, cfg.input.timestamp_unit)
    if cfg.input.timestamp_unit != "auto":
        return ColumnMapping(timestamp_unit=cfg.input.timestamp_unit)
    return None


def load_dataset(cfg: PipelineConfig) -> FlowDataset:
    """Configured input file, or the synthetic scenario when no path is set."""
    if cfg.input.path:
        if not os.path.exists(cfg.input.path):
            raise MissingArtifact(f"input file not found: {cfg.input.path}")
        d = read_flows(cfg.input.path, input_schema(cfg))
        if d.malformed:
            log.warning("%d malformed rows skipped in %s", len(d.malformed), cfg.input.path)
        return dedupe_and_sort(d)
    return compose_scenario(scenario_config(cfg))


def reward_modes(cfg: PipelineConfig) -> Dict[str, RewardMode]:
    modes = {}
    for m in cfg.rewards.modes:
        if m in cfg.rewards.matrices:
            modes[m] = RewardMode(m, **cfg.rewards.matrices[m])
        else:
            modes[m] = DEFAULT_MODES[m]
    return modes


@dataclass
class AADResult:
    standardizer: BenignStandardizer
    model: ReconstructionAutoencoder
    windows: List[Window]
    scored: List[ScoredWindow]
    train_end_ms: int
    benign_windows: int


def fit_aad(d: FlowDataset, cfg: PipelineConfig) -> AADResult:
    """Benign-only standardization and autoencoder fit, then score every window."""
    d = dedupe_and_sort(d)
    windows = partition_windows(d, cfg.delta_ms)
    train, _ = split_train_period(d, cfg.aad.alpha)
    benign = filter_benign(train)
    if not benign.records:
        raise EmptyTrainingSet("no benign training rows")
    # Same grid as the full dataset so training aggregates line up with scored windows.
    benign_windows = partition_windows(benign, cfg.delta_ms, origin_ms=windows[0].start_ms)
    X = benign_training_matrix(benign_windows)
    standardizer = BenignStandardizer(epsilon=cfg.aad.epsilon).fit(X)
    model = ReconstructionAutoencoder(
        hidden=cfg.aad.hidden, bottleneck=cfg.aad.bottleneck, epochs=cfg.aad.epochs,
        lr=cfg.aad.lr, batch_size=cfg.aad.batch_size, random_state=derive_seed(cfg.seed, "aad"),
    ).fit(standardizer.transform(X))
    return AADResult(standardizer, model, windows, score_windows(model, standardizer, windows),
                     train.records[-1].timestamp, len(benign_windows))


@dataclass
class FoldOutcome:
    mode: str
    fold: int
    test_t: List[int]
    actions: List[int]
    labels: List[int]
    metrics: EvalMetrics
    agent: ContainmentAgent
    step_rows: List[StepLogRow]


@dataclass
class TrainResult:
    outcomes: List[FoldOutcome] = field(default_factory=list)
    pooled: Dict[str, EvalMetrics] = field(default_factory=dict)

    def oof_actions(self, mode: str, n_windows: int) -> np.ndarray:
        """Out-of-fold decision per window; windows never tested keep action 0."""
        acts = np.zeros(n_windows, dtype=int)
        for o in self.outcomes:
            if o.mode == mode:
                acts[o.test_t] = o.actions
        return acts

    def metric_rows(self) -> List[dict]:
        rows = []
        for o in self.outcomes:
            rows.append({"mode": o.mode, "fold": o.fold, **_metric_fields(o.metrics)})
        for mode, m in self.pooled.items():
            rows.append({"mode": mode, "fold": "pooled", **_metric_fields(m)})
        return rows

    def cost_regret_rows(self) -> List[dict]:
        return summarize_cost_regret([r for o in self.outcomes for r in o.step_rows])


def _metric_fields(m: EvalMetrics) -> dict:
    return {k: getattr(m, k) for k in METRIC_COLUMNS[2:]}


def _train_mode(args):
    mode, fold_data, ppo_cfg = args
    out = []
    for fold, train_t, Xtr, ytr, test_t, Xte, yte in fold_data:
        agent = ContainmentAgent.from_config(mode, ppo_cfg).fit(Xtr, ytr)
        acts = agent.predict(Xte).tolist()
        metrics = EvalMetrics.from_actions(acts, yte, mode)
        rows = step_log_rows(mode, fold, test_t, acts, yte)
        out.append(FoldOutcome(mode.mode_id, fold, list(test_t), acts, list(map(int, yte)),
                               metrics, agent, rows))
    return out


def train_cv(windows: Sequence[Window], cfg: PipelineConfig) -> TrainResult:
    """Per-mode PPO agents over expanding-window folds.

    The categorical vocabulary is refit on each fold's training windows so
    test-period identifiers never leak into the state layout.
    """
    y = np.array([w.label for w in windows], dtype=int)
    fold_data = []
    for split in time_series_folds(windows, cfg.cv.folds):
        fz = WindowFeaturizer(k=cfg.windows.vocab_k).fit([windows[i] for i in split.train])
        tr, te = list(split.train), list(split.test)
        fold_data.append((split.fold, tr, fz.transform([windows[i] for i in tr]), y[tr],
                          te, fz.transform([windows[i] for i in te]), y[te]))
    p = cfg.ppo
    ppo_cfg = TrainConfig(
        gamma=p.gamma, gae_lambda=p.gae_lambda, clip_epsilon=p.clip_epsilon, lr=p.lr,
        epochs_per_update=p.epochs_per_update, minibatch_size=p.minibatch_size,
        entropy_coef=p.entropy_coef, value_coef=p.value_coef, total_passes=p.total_passes,
        hidden=p.hidden, state_clip=p.state_clip, seed=derive_seed(cfg.seed, "ppo") % (2**32),
    )
    jobs = [(mode, fold_data, ppo_cfg) for mode in reward_modes(cfg).values()]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(jobs))) as pool:
            per_mode = list(pool.map(_train_mode, jobs))
    else:
        per_mode = [_train_mode(j) for j in jobs]
    result = TrainResult()
    for (mode, _, _), outs in zip(jobs, per_mode):
        result.outcomes.extend(outs)
        result.pooled[mode.mode_id] = EvalMetrics.from_actions(
            [a for o in outs for a in o.actions], [l for o in outs for l in o.labels], mode)
    return result


@dataclass
class TriageResult:
    items: list
    selected: list
    reduction_pct: float
    threshold: float
    reports: list
    summary_rows: List[dict]
    pmap: PseudonymMap


def make_backend(cfg: PipelineConfig, stub: StubBackend):
    if cfg.triage.backend == "chat":
        chat = ChatBackend(max_concurrency=cfg.triage.max_concurrency)
        if chat.configured:
            return chat
        log.warning("chat backend selected but SOCTRIAGE_LLM_URL is unset; using stub")
        noted = StubBackend(stub.threshold, stub.reference_median)
        noted.backend_id = "stub (fallback from chat: not configured)"
        return noted
    return stub


def run_triage(scored: Sequence[ScoredWindow], windows: Sequence[Window], actions, cfg: PipelineConfig,
               backend=None) -> TriageResult:
    items = compute_priorities(actions, scored, windows)
    if cfg.triage.threshold_mode == "percentile":
        threshold = percentile_threshold(items, cfg.triage.top_pct)
    else:
        threshold = cfg.triage.threshold
    selected, reduction = select_for_analysis(items, threshold)
    contained = [it.priority for it in items if it.action == 1]
    stub = StubBackend(threshold, float(np.median(contained)) if contained else 0.0)
    backend = backend or make_backend(cfg, stub)
    reports, rows, pmap = build_reports(selected, backend, spl_template=cfg.triage.spl_template,
                                        fallback=stub)
    return TriageResult(items, selected, reduction, threshold, reports, rows, pmap)


# ---- artifact I/O ----------------------------------------------------------

def _csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in columns})
    return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _read_csv(path: str) -> List[dict]:
    if not os.path.exists(path):
        raise MissingArtifact(f"required artifact not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def scored_csv(scored: Sequence[ScoredWindow]) -> str:
    rows = [{"t": s.t, "start_ms": s.start_ms, "aad_score": s.aad_score, "label": s.label,
             **s.metadata.to_dict()} for s in scored]
    return _csv_text(rows, SCORED_COLUMNS)


def read_scored(path: str) -> List[ScoredWindow]:
    out = []
    for r in _read_csv(path):
        meta = WindowMetadata(
            flow_id=r["flow_id"], src_ip=r["src_ip"], dest_ip=r["dest_ip"],
            dest_port=int(r["dest_port"]), flow_count=int(r["flow_count"]),
            distinct_dest_count=int(r["distinct_dest_count"]),
            distinct_dest_ports=int(r["distinct_dest_ports"]),
        )
        out.append(ScoredWindow(int(r["t"]), int(r["start_ms"]), float(r["aad_score"]), meta, int(r["label"])))
    return out


def read_actions(path: str, mode: str, n_windows: int) -> np.ndarray:
    acts = np.zeros(n_windows, dtype=int)
    rows = [r for r in _read_csv(path) if r["mode"] == mode]
    if not rows:
        raise MissingArtifact(f"{path} holds no decisions for mode {mode}")
    for r in rows:
        acts[int(r["t"])] = int(r["action"])
    return acts


def write_score_artifacts(out_dir: str, res: AADResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_text(os.path.join(out_dir, "scored_windows.csv"), scored_csv(res.scored))
    save_aad_model(os.path.join(out_dir, "aad_model.json"), res.model, res.standardizer)


def write_train_artifacts(out_dir: str, res: TrainResult) -> None:
    agents_dir = os.path.join(out_dir, "agents")
    logs_dir = os.path.join(out_dir, "step_logs")
    os.makedirs(agents_dir, exist_ok=True)
    os.makedirs(logs_dir, exist_ok=True)
    curve_rows, action_rows = [], []
    for o in res.outcomes:
        o.agent.save(os.path.join(agents_dir, f"agent_{o.mode}_fold{o.fold}.json"))
        write_text(os.path.join(logs_dir, f"{o.mode}_fold{o.fold}.csv"), step_log_csv(o.step_rows))
        for c in o.agent.training_curve_:
            curve_rows.append({"mode": o.mode, "fold": o.fold, **c})
        action_rows.extend({"t": t, "mode": o.mode, "fold": o.fold, "action": a}
                           for t, a in zip(o.test_t, o.actions))
    write_text(os.path.join(out_dir, "metrics.csv"), _csv_text(res.metric_rows(), METRIC_COLUMNS))
    write_text(os.path.join(out_dir, "cost_regret.csv"), _csv_text(res.cost_regret_rows(), COST_REGRET_COLUMNS))
    write_text(os.path.join(out_dir, "actions.csv"), _csv_text(action_rows, ACTION_COLUMNS))
    if curve_rows:
        write_text(os.path.join(out_dir, "training_curves.csv"), _csv_text(curve_rows, list(curve_rows[0])))


def write_triage_artifacts(out_dir: str, res: TriageResult, expose_real_ips: bool = False) -> None:
    tdir = os.path.join(out_dir, "triage")
    sdir = os.path.join(tdir, "spl")
    os.makedirs(sdir, exist_ok=True)
    # One JSON document per flow, one per line.
    write_text(os.path.join(tdir, "reports.jsonl"),
               "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in res.reports))
    write_text(os.path.join(tdir, "master_summary.csv"),
               summary_csv(res.summary_rows, res.pmap if expose_real_ips else None))
    write_text(os.path.join(tdir, "pseudonym_map.csv"), res.pmap.to_csv())
    for t, query in sorted({(r.window, r.spl_query) for r in res.reports}):
        write_text(os.path.join(sdir, f"window_{t:05d}.spl"), query + "\n")
        write_text(os.path.join(sdir, f"window_{t:05d}.resolved.spl"), resolve_spl(query, res.pmap) + "\n")
    summary = {"windows": len(res.items), "selected_windows": len(res.selected),
               "flow_reports": len(res.reports), "threshold": res.threshold,
               "reduction_pct": res.reduction_pct}
    write_text(os.path.join(tdir, "triage_summary.json"), json.dumps(summary, indent=1) + "\n")

"""Command-line entry point: ``soctriage <subcommand> [options]``.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from . import pipeline as pl
from .config import PipelineConfig, dump_config, load_config, parse_overrides
from .exceptions import TriageError, ValidationError
from .flows import dedupe_and_sort, flows_to_csv, read_flows
from .oracle import oracle_report
from .synth import class_balance
from .windows import partition_windows

log = logging.getLogger("soctriage")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes for training")
    common.add_argument("--input", help="flow CSV to use instead of the synthetic scenario")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set ppo.lr=0.001 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="soctriage", description="Flow anomaly scoring, PPO containment and SOC triage.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "generate the synthetic labeled flow dataset",
        "ingest": "parse, validate and deduplicate a flow CSV",
        "score": "fit the benign autoencoder and score every window",
        "train": "train PPO agents per reward mode over time-series folds",
        "triage": "prioritize contained windows and build analyst reports",
        "oracle": "check the worked numeric example end to end",
        "report": "summarize metrics and triage artifacts",
        "run": "simulate/ingest, score, train, triage and report in one go",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def resolve_config(args) -> PipelineConfig:
    overrides = parse_overrides(args.set)
    for key, value in (("seed", args.seed), ("output_dir", args.out), ("jobs", args.jobs)):
        if value is not None:
            overrides[key] = value
    if args.input:
        overrides.setdefault("input", {})["path"] = args.input
    return load_config(args.config, overrides)


def _out(cfg: PipelineConfig, *parts) -> str:
    return os.path.join(cfg.output_dir, *parts)


def _save_config(cfg: PipelineConfig) -> None:
    pl.write_text(_out(cfg, "config.yaml"), dump_config(cfg))


def cmd_simulate(cfg: PipelineConfig) -> str:
    d = pl.compose_scenario(pl.scenario_config(cfg))
    pl.write_text(_out(cfg, "flows.csv"), flows_to_csv(d))
    summary = {"source": d.source_name, "seed": cfg.seed, **class_balance(d),
               "windows": len(partition_windows(d, cfg.delta_ms))}
    pl.write_text(_out(cfg, "scenario_summary.json"), json.dumps(summary, indent=1) + "\n")
    return (f"simulate: {summary['flows']} flows ({summary['malicious_pct']:.1f}% malicious) "
            f"in {summary['windows']} windows -> {_out(cfg, 'flows.csv')}")


def cmd_ingest(cfg: PipelineConfig) -> str:
    if not cfg.input.path:
        raise ValidationError("ingest needs an input file (--input or input.path)")
    if not os.path.exists(cfg.input.path):
        raise pl.MissingArtifact(f"input file not found: {cfg.input.path}")
    raw = read_flows(cfg.input.path, pl.input_schema(cfg))
    clean = dedupe_and_sort(raw)
    pl.write_text(_out(cfg, "flows_clean.csv"), flows_to_csv(clean))
    summary = {
        "source": cfg.input.path, "rows_kept": len(clean), "malformed": len(raw.malformed),
        "duplicates_removed": clean.duplicates_removed,
        "malformed_examples": [{"line": n, "reason": r} for n, r in raw.malformed[:20]],
    }
    pl.write_text(_out(cfg, "ingest_summary.json"), json.dumps(summary, indent=1) + "\n")
    return (f"ingest: {len(clean)} flows kept, {len(raw.malformed)} malformed, "
            f"{clean.duplicates_removed} duplicates removed")


def cmd_score(cfg: PipelineConfig) -> str:
    res = pl.fit_aad(pl.load_dataset(cfg), cfg)
    pl.write_score_artifacts(cfg.output_dir, res)
    scores = np.array([s.aad_score for s in res.scored])
    labels = np.array([s.label for s in res.scored])
    parts = [f"score: {len(res.scored)} windows scored ({res.benign_windows} benign training windows)"]
    if labels.any() and (~labels.astype(bool)).any():
        parts.append(f"median AAD attack={np.median(scores[labels == 1]):.4g} "
                     f"benign={np.median(scores[labels == 0]):.4g}")
    return "; ".join(parts)


def cmd_train(cfg: PipelineConfig) -> str:
    windows = partition_windows(dedupe_and_sort(pl.load_dataset(cfg)), cfg.delta_ms)
    res = pl.train_cv(windows, cfg)
    pl.write_train_artifacts(cfg.output_dir, res)
    pooled = ", ".join(f"{m}: P={v.precision:.3f} R={v.recall:.3f} red={v.reduction_pct:.1f}%"
                       for m, v in res.pooled.items())
    return f"train: {len(res.outcomes)} agents over {len(windows)} windows; pooled {pooled}"


def cmd_triage(cfg: PipelineConfig) -> str:
    scored = pl.read_scored(_out(cfg, "scored_windows.csv"))
    windows = partition_windows(dedupe_and_sort(pl.load_dataset(cfg)), cfg.delta_ms)
    if len(windows) != len(scored):
        raise ValidationError(
            f"scored_windows.csv has {len(scored)} windows but the dataset has {len(windows)}; re-run score")
    actions = pl.read_actions(_out(cfg, "actions.csv"), cfg.triage.mode, len(windows))
    res = pl.run_triage(scored, windows, actions, cfg)
    pl.write_triage_artifacts(cfg.output_dir, res, cfg.triage.expose_real_ips)
    backends = sorted({r.backend_id for r in res.reports}) or ["none"]
    return (f"triage: {len(res.selected)}/{len(res.items)} windows selected "
            f"(threshold {res.threshold:.4g}, reduction {res.reduction_pct:.1f}%), "
            f"{len(res.reports)} flow reports, backend {', '.join(backends)}")


def _read_rows(path: str) -> List[dict]:
    if not os.path.exists(path):
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_report(cfg: PipelineConfig) -> str:
    metrics = _read_rows(_out(cfg, "metrics.csv"))
    cost = _read_rows(_out(cfg, "cost_regret.csv"))
    if not metrics:
        raise pl.MissingArtifact(f"required artifact not found: {_out(cfg, 'metrics.csv')}")
    lines = ["# Run report", "", "## Pooled out-of-fold metrics", "",
             "| mode | precision | recall | f1 | mean cost | mean regret | reduction % |",
             "|---|---|---|---|---|---|---|"]
    for r in metrics:
        if r["fold"] == "pooled":
            lines.append(f"| {r['mode']} | {float(r['precision']):.3f} | {float(r['recall']):.3f} | "
                         f"{float(r['f1']):.3f} | {float(r['mean_cost']):.3f} | "
                         f"{float(r['mean_regret']):.3f} | {float(r['reduction_pct']):.1f} |")
    if cost:
        lines += ["", "## Decision cost and regret (per step, over all test folds)", "",
                  "| mode | mean cost | std cost | mean regret | std regret |", "|---|---|---|---|---|"]
        for r in cost:
            lines.append(f"| {r['mode']} | {float(r['mean_cost']):.3f} | {float(r['std_cost']):.3f} | "
                         f"{float(r['mean_regret']):.3f} | {float(r['std_regret']):.3f} |")
    tpath = _out(cfg, "triage", "triage_summary.json")
    if os.path.exists(tpath):
        with open(tpath, encoding="utf-8") as fh:
            t = json.load(fh)
        lines += ["", "## Triage", "",
                  f"{t['selected_windows']} of {t['windows']} windows above threshold {t['threshold']:.4g} "
                  f"(reduction {t['reduction_pct']:.1f}%), {t['flow_reports']} flow reports."]
    text = "\n".join(lines) + "\n"
    pl.write_text(_out(cfg, "report.md"), text)
    return text.rstrip()


def cmd_oracle(cfg: Optional[PipelineConfig] = None) -> tuple:
    checks, _, text = oracle_report()
    return all(c.passed for c in checks), text


def cmd_run(cfg: PipelineConfig) -> str:
    steps = [cmd_ingest(cfg) if cfg.input.path else cmd_simulate(cfg)]
    steps += [cmd_score(cfg), cmd_train(cfg), cmd_triage(cfg)]
    cmd_report(cfg)
    return "\n".join(steps)


COMMANDS = {
    "simulate": cmd_simulate, "ingest": cmd_ingest, "score": cmd_score, "train": cmd_train,
    "triage": cmd_triage, "report": cmd_report, "run": cmd_run,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "oracle":
            ok, text = cmd_oracle()
            print(text)
            return EXIT_OK if ok else EXIT_RUNTIME
        cfg = resolve_config(args)
        os.makedirs(cfg.output_dir, exist_ok=True)
        _save_config(cfg)
        print(COMMANDS[args.command](cfg))
        return EXIT_OK
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TriageError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

from collections import Counter

import numpy as np
import pytest

from soctriage.flows import flows_to_csv
from soctriage.synth import (FloodConfig, ScanConfig, ScenarioConfig, attack_intervals, class_balance,
                             compose_scenario, gen_benign, gen_portscan, gen_udp_flood)
from soctriage.windows import partition_windows


def quiet(**kw):
    base = dict(scans=[], floods=[], bursts=[], sweeps=[])
    base.update(kw)
    return ScenarioConfig(**base)


def test_benign_count_and_labels():
    d = gen_benign(ScenarioConfig(duration_min=10, benign_rate_per_min=100), np.random.default_rng(0))
    assert len(d) == 1000 and all(r.label == 0 for r in d)
    assert {r.dest_port for r in d} <= {53, 80, 443, 22}


def test_benign_deterministic():
    cfg = ScenarioConfig(duration_min=10, benign_rate_per_min=50)
    a = gen_benign(cfg, np.random.default_rng(4))
    b = gen_benign(cfg, np.random.default_rng(4))
    assert a.records == b.records


def test_benign_port_histogram():
    cfg = ScenarioConfig(duration_min=100, benign_rate_per_min=100)
    d = gen_benign(cfg, np.random.default_rng(1))
    counts = Counter(r.dest_port for r in d)
    total = sum(cfg.port_weights.values())
    for port, w in cfg.port_weights.items():
        assert abs(counts[port] / len(d) - w / total) <= 0.02


def test_portscan_sweep():
    d = gen_portscan(ScanConfig(start_min=0, port_start=1, port_end=100), np.random.default_rng(0))
    assert [r.dest_port for r in d] == list(range(1, 101))
    assert len({(r.src_ip, r.dest_ip) for r in d}) == 1
    assert all(r.label == 1 for r in d)


def test_scan_windows_exceed_benign_port_spread():
    cfg = ScenarioConfig(duration_min=60)
    benign = partition_windows(gen_benign(cfg, np.random.default_rng(0)))
    scan = partition_windows(gen_portscan(ScanConfig(start_min=0, port_end=500, rate_per_min=100),
                                          np.random.default_rng(0), cfg.start_ms))
    benign_max = max(len({f.dest_port for f in w.flows}) for w in benign)
    assert min(len({f.dest_port for f in w.flows}) for w in scan) > benign_max


def test_flood_contract():
    d = gen_udp_flood(FloodConfig(start_min=0, duration_min=1, rate_per_min=5000), np.random.default_rng(0))
    assert len(d) == 5000
    assert all(r.protocol == "UDP" and r.label == 1 for r in d)


def test_flood_bytes_exceed_benign():
    cfg = ScenarioConfig(duration_min=30)
    benign = gen_benign(cfg, np.random.default_rng(0))
    flood = gen_udp_flood(FloodConfig(start_min=0), np.random.default_rng(0), cfg.benign_mean_bytes)
    b = np.mean([r.bytes_in for r in benign])
    f = np.mean([r.bytes_in for r in flood])
    assert f > 10 * b


def test_flood_deterministic():
    cfg = FloodConfig(start_min=0, spoof_fraction=0.5)
    assert gen_udp_flood(cfg, np.random.default_rng(2)).records == gen_udp_flood(cfg, np.random.default_rng(2)).records


def test_compose_class_balance():
    cfg = quiet(duration_min=10, benign_rate_per_min=100,
                scans=[ScanConfig(start_min=0, port_start=1, port_end=100, rate_per_min=100)],
                floods=[FloodConfig(start_min=0, duration_min=1, rate_per_min=500)])
    d = compose_scenario(cfg)
    bal = class_balance(d)
    assert bal["flows"] == 1600
    assert bal["malicious_pct"] == pytest.approx(37.5)


def test_compose_no_attacks():
    d = compose_scenario(quiet(duration_min=20))
    assert all(r.label == 0 for r in d)
    ts = [r.timestamp for r in d]
    assert ts == sorted(ts) and len({r.dedup_key for r in d}) == len(d)


def test_compose_rejects_out_of_range_episode():
    with pytest.raises(ValueError):
        compose_scenario(quiet(duration_min=10, floods=[FloodConfig(start_min=8, duration_min=5)]))


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(external_scan_share=1.5)
    with pytest.raises(ValueError):
        ScenarioConfig(duration_min=0)


def test_default_scenario_csv_deterministic():
    cfg = ScenarioConfig(duration_min=120, n_random_attacks=6, n_random_sweeps=3, seed=7)
    assert flows_to_csv(compose_scenario(cfg)) == flows_to_csv(compose_scenario(cfg))


def test_attack_flows_inside_intervals_and_window_labels():
    cfg = ScenarioConfig(duration_min=240, n_random_attacks=8, n_random_sweeps=3, seed=1)
    d = compose_scenario(cfg)
    spans = attack_intervals(cfg)
    for r in d:
        if r.label == 1:
            assert any(lo <= r.timestamp <= hi for lo, hi in spans)
    for w in partition_windows(d):
        has_attack = any(f.label == 1 for f in w.flows)
        assert w.label == int(has_attack)


def test_sweeps_are_benign_scans():
    cfg = ScenarioConfig(duration_min=240, n_random_attacks=4, n_random_sweeps=3, seed=2)
    sweep_flows = [r for r in compose_scenario(cfg) if r.flow_id.startswith("v")]
    assert sweep_flows and all(r.label == 0 for r in sweep_flows)

"""Labeled synthetic flow generator: benign background, port scans, UDP floods.

All generators are deterministic for a given seed. The default scenario
spreads attack episodes of varying intensity over a day of benign traffic;
the attacker host also produces ordinary traffic and benign hosts produce
occasional bulk transfers, so neither source address nor volume alone
identifies an attack.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .flows import FlowDataset, FlowRecord, dedupe_and_sort
from .seeding import derive_seed

MINUTE_MS = 60_000
# 2026-01-05T00:00:00Z, a multiple of five minutes.
DEFAULT_START_MS = 1_767_571_200_000

ATTACKER_IP = "10.0.2.4"
TARGET_IP = "10.0.2.15"

DEFAULT_PORT_WEIGHTS = {53: 0.30, 80: 0.20, 443: 0.40, 22: 0.10}
DEFAULT_SERVERS = {
    53: ("10.0.2.1", "8.8.8.8"),
    80: ("93.184.216.34", "151.101.1.69", "104.16.132.229"),
    443: ("93.184.216.34", "151.101.1.69", "104.16.132.229", "142.250.74.46", "13.107.42.14"),
    22: ("10.0.2.20",),
}


@dataclass(frozen=True)
class ScanConfig:
    start_min: float
    port_start: int = 1
    port_end: int = 100
    rate_per_min: float = 20.0
    attacker_ip: str = ATTACKER_IP
    target_ip: str = TARGET_IP
    # 0 for an authorized sweep (vulnerability scanner, research scanner).
    label: int = 1

    @property
    def n_ports(self) -> int:
        return self.port_end - self.port_start + 1

    @property
    def duration_min(self) -> float:
        return self.n_ports / self.rate_per_min


@dataclass(frozen=True)
class FloodConfig:
    start_min: float
    duration_min: float = 5.0
    rate_per_min: float = 200.0
    # Per-flow bytes_in drawn uniformly from these multiples of the benign mean.
    bytes_factor: tuple = (10.0, 100.0)
    attacker_ip: str = ATTACKER_IP
    target_ip: str = TARGET_IP
    dest_port: int = 7
    spoof_fraction: float = 0.0


@dataclass(frozen=True)
class BurstConfig:
    """Benign bulk transfer (backup, update mirror) from one internal host."""

    start_min: float
    duration_min: float = 5.0
    rate_per_min: float = 30.0
    bytes_factor: tuple = (5.0, 40.0)
    src_ip: str = "10.0.2.30"
    dest_ip: str = "10.0.2.20"
    dest_port: int = 22


@dataclass
class ScenarioConfig:
    duration_min: float = 1440.0
    benign_rate_per_min: float = 10.0
    n_hosts: int = 24
    port_weights: Dict[int, float] = field(default_factory=lambda: dict(DEFAULT_PORT_WEIGHTS))
    bytes_log_mu: float = 7.0
    bytes_log_sigma: float = 1.0
    # Share of benign flows emitted by the attacker host.
    attacker_benign_share: float = 0.03
    scans: Optional[List[ScanConfig]] = None
    floods: Optional[List[FloodConfig]] = None
    bursts: Optional[List[BurstConfig]] = None
    sweeps: Optional[List[ScanConfig]] = None
    # Used when the explicit lists above are None.
    n_random_attacks: int = 48
    n_random_bursts: int = 10
    n_random_sweeps: int = 12
    # Share of planned attack scans launched from a fresh external address.
    external_scan_share: float = 0.5
    start_ms: int = DEFAULT_START_MS
    seed: int = 0

    def __post_init__(self):
        if self.duration_min <= 0 or self.benign_rate_per_min < 0:
            raise ValueError("duration must be positive and rates non-negative")
        if not self.port_weights or any(w < 0 for w in self.port_weights.values()):
            raise ValueError("port weights must be non-negative and non-empty")
        self.port_weights = {int(k): float(v) for k, v in self.port_weights.items()}
        if not 0.0 <= self.external_scan_share <= 1.0:
            raise ValueError("external_scan_share must lie in [0, 1]")
        for name, cls in (("scans", ScanConfig), ("floods", FloodConfig), ("bursts", BurstConfig),
                          ("sweeps", ScanConfig)):
            items = getattr(self, name)
            if items is not None:
                setattr(self, name, [i if isinstance(i, cls) else cls(**i) for i in items])

    @property
    def benign_mean_bytes(self) -> float:
        return float(np.exp(self.bytes_log_mu + self.bytes_log_sigma**2 / 2))

    def to_dict(self) -> dict:
        return asdict(self)


def _host_pool(n_hosts: int) -> list:
    hosts = [f"10.0.2.{100 + i}" for i in range(n_hosts)]
    return hosts + [TARGET_IP]


def _lognormal_bytes(rng, mu, sigma, n):
    return np.maximum(1, np.round(rng.lognormal(mu, sigma, size=n))).astype(np.int64)


def gen_benign(cfg: ScenarioConfig, rng: np.random.Generator) -> FlowDataset:
    n = int(round(cfg.duration_min * cfg.benign_rate_per_min))
    span = cfg.duration_min * MINUTE_MS
    offsets = np.sort(rng.uniform(0, span, size=n))
    ports = np.array(sorted(cfg.port_weights))
    weights = np.array([cfg.port_weights[p] for p in ports])
    dports = rng.choice(ports, size=n, p=weights / weights.sum())
    hosts = _host_pool(cfg.n_hosts)
    from_attacker = rng.random(n) < cfg.attacker_benign_share
    host_idx = rng.integers(0, len(hosts), size=n)
    sports = rng.integers(49152, 65536, size=n)
    b_in = _lognormal_bytes(rng, cfg.bytes_log_mu, cfg.bytes_log_sigma, n)
    b_out = _lognormal_bytes(rng, cfg.bytes_log_mu - 0.5, cfg.bytes_log_sigma, n)
    server_pick = rng.random(n)
    records = []
    for i in range(n):
        port = int(dports[i])
        servers = DEFAULT_SERVERS.get(port, ("198.51.100.10",))
        records.append(FlowRecord(
            timestamp=cfg.start_ms + int(offsets[i]),
            flow_id=f"b{i:06d}",
            src_ip=ATTACKER_IP if from_attacker[i] else hosts[host_idx[i]],
            dest_ip=servers[int(server_pick[i] * len(servers))],
            src_port=int(sports[i]),
            dest_port=port,
            protocol="UDP" if port == 53 else "TCP",
            bytes_in=int(b_in[i]),
            bytes_out=int(b_out[i]),
            label=0,
        ))
    return FlowDataset(records=records, source_name="synthetic-benign")


def gen_portscan(cfg: ScanConfig, rng: np.random.Generator, start_ms: int = DEFAULT_START_MS,
                 tag: str = "s") -> FlowDataset:
    """Sequential sweep of ``port_start..port_end`` at ``rate_per_min``."""
    if cfg.port_end < cfg.port_start:
        raise ValueError("empty port range")
    if cfg.rate_per_min <= 0:
        raise ValueError("scan rate must be positive")
    step_ms = MINUTE_MS / cfg.rate_per_min
    t0 = start_ms + cfg.start_min * MINUTE_MS
    sport = int(rng.integers(40000, 60000))
    records = []
    for i, port in enumerate(range(cfg.port_start, cfg.port_end + 1)):
        records.append(FlowRecord(
            timestamp=int(t0 + i * step_ms),
            flow_id=f"{tag}{i:06d}",
            src_ip=cfg.attacker_ip,
            dest_ip=cfg.target_ip,
            src_port=sport,
            dest_port=port,
            protocol="TCP",
            bytes_in=40,
            bytes_out=44,
            label=cfg.label,
        ))
    return FlowDataset(records=records, source_name="synthetic-portscan")


def gen_udp_flood(cfg: FloodConfig, rng: np.random.Generator, benign_mean_bytes: float = 1808.0,
                  start_ms: int = DEFAULT_START_MS, tag: str = "u") -> FlowDataset:
    if cfg.rate_per_min <= 0 or cfg.duration_min <= 0:
        raise ValueError("flood rate and duration must be positive")
    n = int(round(cfg.rate_per_min * cfg.duration_min))
    t0 = start_ms + cfg.start_min * MINUTE_MS
    offsets = np.sort(rng.uniform(0, cfg.duration_min * MINUTE_MS, size=n))
    lo, hi = cfg.bytes_factor
    b_in = np.round(rng.uniform(lo, hi, size=n) * benign_mean_bytes).astype(np.int64)
    spoofed = rng.random(n) < cfg.spoof_fraction
    spoof_octets = rng.integers(1, 255, size=(n, 2))
    sports = rng.integers(1024, 65536, size=n)
    records = []
    for i in range(n):
        src = (f"203.0.{spoof_octets[i, 0]}.{spoof_octets[i, 1]}" if spoofed[i] else cfg.attacker_ip)
        records.append(FlowRecord(
            timestamp=int(t0 + offsets[i]),
            flow_id=f"{tag}{i:06d}",
            src_ip=src,
            dest_ip=cfg.target_ip,
            src_port=int(sports[i]),
            dest_port=cfg.dest_port,
            protocol="UDP",
            bytes_in=int(b_in[i]),
            bytes_out=0,
            label=1,
        ))
    return FlowDataset(records=records, source_name="synthetic-udpflood")


def gen_burst(cfg: BurstConfig, rng: np.random.Generator, benign_mean_bytes: float,
              start_ms: int = DEFAULT_START_MS, tag: str = "k") -> FlowDataset:
    n = int(round(cfg.rate_per_min * cfg.duration_min))
    t0 = start_ms + cfg.start_min * MINUTE_MS
    offsets = np.sort(rng.uniform(0, cfg.duration_min * MINUTE_MS, size=n))
    lo, hi = cfg.bytes_factor
    b_in = np.round(rng.uniform(lo, hi, size=n) * benign_mean_bytes).astype(np.int64)
    sports = rng.integers(49152, 65536, size=n)
    records = [
        FlowRecord(
            timestamp=int(t0 + offsets[i]), flow_id=f"{tag}{i:06d}", src_ip=cfg.src_ip,
            dest_ip=cfg.dest_ip, src_port=int(sports[i]), dest_port=cfg.dest_port,
            protocol="TCP", bytes_in=int(b_in[i]), bytes_out=int(b_in[i] // 50), label=0,
        )
        for i in range(n)
    ]
    return FlowDataset(records=records, source_name="synthetic-burst")


def random_attack_plan(cfg: ScenarioConfig) -> tuple:
    """Place attack episodes and benign bursts on the five-minute grid.

    The day is cut into ``n_random_attacks`` equal segments with one
    attack per segment, alternating scan and flood, with intensity drawn
    from a wide range so some episodes are faint. Some scans come from a
    fresh external address, and authorized sweeps from other external
    hosts look the same but are benign, so those windows stay ambiguous.
    """
    rng = np.random.default_rng(derive_seed(cfg.seed, "plan"))
    scans, floods, bursts = [], [], []
    n = cfg.n_random_attacks
    slot = 5.0
    if n:
        seg = cfg.duration_min / n
        for i in range(n):
            length_slots = int(rng.integers(1, 4))
            free = max(0, int((seg - length_slots * slot) // slot))
            start = i * seg + slot * int(rng.integers(0, free + 1))
            start = slot * np.floor(start / slot)
            if i % 2 == 0:
                rate = float(rng.choice([40.0, 100.0, 200.0]))
                n_ports = max(1, int(rate * length_slots * slot))
                first = int(rng.integers(1, 900))
                scans.append(ScanConfig(start_min=float(start), port_start=first,
                                        port_end=min(65535, first + n_ports - 1), rate_per_min=rate))
            else:
                rate = float(rng.choice([100.0, 200.0, 500.0]))
                lo = float(rng.choice([2.0, 5.0, 10.0]))
                floods.append(FloodConfig(start_min=float(start), duration_min=length_slots * slot,
                                          rate_per_min=rate, bytes_factor=(lo, 10 * lo),
                                          spoof_fraction=float(rng.choice([0.0, 0.5]))))
    hosts = _host_pool(cfg.n_hosts)
    n_slots = max(1, int(cfg.duration_min // slot))
    for _ in range(cfg.n_random_bursts):
        start = slot * int(rng.integers(0, n_slots))
        bursts.append(BurstConfig(
            start_min=float(start), duration_min=slot,
            rate_per_min=float(rng.choice([5.0, 20.0, 60.0])),
            bytes_factor=(2.0, float(rng.choice([20.0, 60.0]))),
            src_ip=hosts[int(rng.integers(0, len(hosts)))],
            dest_ip=str(rng.choice(["10.0.2.20", "13.107.42.14"])),
            dest_port=int(rng.choice([22, 443])),
        ))
    ext_rng = np.random.default_rng(derive_seed(cfg.seed, "external"))
    for i, sc in enumerate(scans):
        if ext_rng.random() < cfg.external_scan_share:
            scans[i] = replace(sc, attacker_ip=f"203.0.113.{10 + i}")
    sweep_rng = np.random.default_rng(derive_seed(cfg.seed, "sweeps"))
    sweeps = []
    for i in range(cfg.n_random_sweeps):
        length_slots = min(int(sweep_rng.integers(1, 4)), n_slots)
        start = slot * int(sweep_rng.integers(0, n_slots - length_slots + 1))
        rate = float(sweep_rng.choice([40.0, 100.0, 200.0]))
        n_ports = max(1, int(rate * length_slots * slot))
        first = int(sweep_rng.integers(1, 900))
        sweeps.append(ScanConfig(start_min=float(start), port_start=first,
                                 port_end=min(65535, first + n_ports - 1), rate_per_min=rate,
                                 attacker_ip=f"198.51.100.{10 + i}", label=0))
    return scans, floods, bursts, sweeps


def episode_lists(cfg: ScenarioConfig) -> tuple:
    """Explicit episode lists where given, the random plan for the rest."""
    given = (cfg.scans, cfg.floods, cfg.bursts, cfg.sweeps)
    if all(g is not None for g in given):
        return given
    planned = random_attack_plan(cfg)
    return tuple(g if g is not None else p for g, p in zip(given, planned))


def compose_scenario(cfg: ScenarioConfig) -> FlowDataset:
    """Merge benign traffic with the configured (or randomly planned) attacks."""
    scans, floods, bursts, sweeps = episode_lists(cfg)
    for item in [*scans, *floods, *bursts, *sweeps]:
        dur = item.duration_min
        if item.start_min < 0 or item.start_min + dur > cfg.duration_min + 1e-9:
            raise ValueError(f"episode {item} lies outside the scenario duration")

    parts = [gen_benign(cfg, np.random.default_rng(derive_seed(cfg.seed, "benign")))]
    for i, sc in enumerate(scans):
        rng = np.random.default_rng(derive_seed(cfg.seed, f"scan{i}"))
        parts.append(gen_portscan(sc, rng, cfg.start_ms, tag=f"s{i:02d}_"))
    for i, fl in enumerate(floods):
        rng = np.random.default_rng(derive_seed(cfg.seed, f"flood{i}"))
        parts.append(gen_udp_flood(fl, rng, cfg.benign_mean_bytes, cfg.start_ms, tag=f"u{i:02d}_"))
    for i, bu in enumerate(bursts):
        rng = np.random.default_rng(derive_seed(cfg.seed, f"burst{i}"))
        parts.append(gen_burst(bu, rng, cfg.benign_mean_bytes, cfg.start_ms, tag=f"k{i:02d}_"))
    for i, sw in enumerate(sweeps):
        rng = np.random.default_rng(derive_seed(cfg.seed, f"sweep{i}"))
        parts.append(gen_portscan(sw, rng, cfg.start_ms, tag=f"v{i:02d}_"))
    records = [r for p in parts for r in p.records]
    return dedupe_and_sort(FlowDataset(records=records, source_name=f"synthetic-seed{cfg.seed}"))


def attack_intervals(cfg: ScenarioConfig) -> list:
    """``(start_ms, end_ms)`` of every attack episode in the scenario."""
    scans, floods, _, _ = episode_lists(cfg)
    return [
        (cfg.start_ms + int(a.start_min * MINUTE_MS),
         cfg.start_ms + int((a.start_min + a.duration_min) * MINUTE_MS))
        for a in [*scans, *floods]
        if getattr(a, "label", 1) == 1
    ]


def class_balance(d: Sequence[FlowRecord]) -> dict:
    n = len(d)
    malicious = sum(1 for r in d if r.label == 1)
    return {
        "flows": n,
        "malicious": malicious,
        "benign": n - malicious,
        "malicious_pct": 100.0 * malicious / n if n else 0.0,
    }

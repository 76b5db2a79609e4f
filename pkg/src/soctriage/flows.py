"""Flow log ingestion: parsing, de-duplication, ordering and temporal splits."""

from __future__ import annotations

import csv
import hashlib
import io
import ipaddress
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Iterable, Mapping, Optional, Sequence

from .exceptions import BadFraction, EmptyInput, MissingColumn, UnlabeledRecord

PROTOCOLS = ("TCP", "UDP", "ICMP", "OTHER")

# Canonical column order used for every CSV this package writes.
FLOW_COLUMNS = (
    "timestamp",
    "flow_id",
    "src_ip",
    "dest_ip",
    "src_port",
    "dest_port",
    "protocol",
    "bytes_in",
    "bytes_out",
    "label",
)

_PROTO_ALIASES = {
    "tcp": "TCP",
    "6": "TCP",
    "udp": "UDP",
    "17": "UDP",
    "icmp": "ICMP",
    "1": "ICMP",
}

# Epoch values at or above this are taken to be milliseconds (1e11 s is ~year 5138).
_MS_CUTOFF = 1e11


@dataclass(frozen=True)
class FlowRecord:
    timestamp: int
    flow_id: str
    src_ip: str
    dest_ip: str
    src_port: int
    dest_port: int
    protocol: str = "TCP"
    bytes_in: int = 0
    bytes_out: int = 0
    label: Optional[int] = None

    def __post_init__(self):
        for name in ("src_port", "dest_port"):
            port = getattr(self, name)
            if not 0 <= port <= 65535:
                raise ValueError(f"{name} out of range: {port}")
        if self.bytes_in < 0 or self.bytes_out < 0:
            raise ValueError("byte counts must be non-negative")
        if self.label not in (None, 0, 1):
            raise ValueError(f"label must be 0, 1 or None, got {self.label!r}")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")

    @property
    def dedup_key(self) -> tuple:
        return (
            self.timestamp,
            self.flow_id,
            self.src_ip,
            self.dest_ip,
            self.src_port,
            self.dest_port,
        )

    def as_row(self) -> dict:
        row = {name: getattr(self, name) for name in FLOW_COLUMNS}
        row["label"] = "" if self.label is None else self.label
        return row


@dataclass(frozen=True)
class FlowDataset:
    records: tuple = ()
    source_name: str = ""
    malformed: tuple = ()
    duplicates_removed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "malformed", tuple(self.malformed))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    def with_records(self, records: Iterable[FlowRecord], **changes) -> "FlowDataset":
        return replace(self, records=tuple(records), **changes)

    @property
    def labels(self) -> list:
        return [r.label for r in self.records]


@dataclass(frozen=True)
class ColumnMapping:
    """Maps FlowRecord field names to header names in a CSV export.

    ``flow_id`` and ``label`` may be omitted. Without a flow id column a
    stable content hash is used; without a label column records are
    unlabeled. ``timestamp_unit`` is one of ``auto``, ``s``, ``ms``, ``iso``.
    """

    columns: Mapping[str, str] = field(
        default_factory=lambda: {name: name for name in FLOW_COLUMNS}
    )
    timestamp_unit: str = "auto"

    REQUIRED = ("timestamp", "src_ip", "dest_ip", "src_port", "dest_port", "bytes_in", "bytes_out")

    @classmethod
    def from_dict(cls, mapping: Mapping[str, str], timestamp_unit: str = "auto") -> "ColumnMapping":
        unknown = set(mapping) - set(FLOW_COLUMNS)
        if unknown:
            raise MissingColumn(f"unknown flow fields in column mapping: {sorted(unknown)}")
        return cls(columns=dict(mapping), timestamp_unit=timestamp_unit)


def _parse_iso(value: str) -> int:
    text = value.strip().replace("Z", "+00:00")
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(round(dt.timestamp() * 1000))


def _detect_timestamp_unit(values: Sequence[str]) -> str:
    numeric = []
    for v in values:
        try:
            numeric.append(float(v))
        except ValueError:
            return "iso"
    if not numeric:
        return "ms"
    return "ms" if max(abs(x) for x in numeric) >= _MS_CUTOFF else "s"


def _to_epoch_ms(value: str, unit: str) -> int:
    if unit == "iso":
        return _parse_iso(value)
    number = float(value)
    if not math.isfinite(number):
        raise ValueError(f"non-finite timestamp {value!r}")
    return int(round(number * 1000)) if unit == "s" else int(round(number))


def _parse_int(value: str, name: str) -> int:
    text = value.strip()
    number = float(text)
    if not number.is_integer():
        raise ValueError(f"{name} is not an integer: {value!r}")
    return int(number)


def _parse_label(value: Optional[str]) -> Optional[int]:
    if value is None:
        return None
    text = value.strip().lower()
    if text == "":
        return None
    if text in ("0", "0.0", "false", "benign"):
        return 0
    if text in ("1", "1.0", "true", "malicious"):
        return 1
    raise ValueError(f"bad label {value!r}")


def normalize_protocol(value: str) -> str:
    text = value.strip()
    if text.upper() in PROTOCOLS:
        return text.upper()
    return _PROTO_ALIASES.get(text.lower(), "OTHER")


def _content_flow_id(ts: int, src: str, dst: str, sport: int, dport: int, proto: str) -> str:
    digest = hashlib.sha1(f"{ts}|{src}|{dst}|{sport}|{dport}|{proto}".encode()).hexdigest()
    return digest[:12]


def parse_flows(
    csv_text: str,
    schema: Optional[ColumnMapping] = None,
    source_name: str = "",
) -> FlowDataset:
    """Parse CSV text into a FlowDataset.

    Rows that fail to parse are collected in ``FlowDataset.malformed`` as
    ``(line_number, reason)`` pairs instead of raising.
    """
    schema = schema or ColumnMapping()
    reader = csv.DictReader(io.StringIO(csv_text))
    header = reader.fieldnames or []
    for fld in ColumnMapping.REQUIRED:
        if fld not in schema.columns:
            raise MissingColumn(f"column mapping has no entry for {fld!r}")
    for fld, col in schema.columns.items():
        if col not in header:
            raise MissingColumn(f"column {col!r} (for {fld}) not in header {header}")

    rows = list(reader)
    if not rows:
        raise EmptyInput("flow file has no data rows")

    col = schema.columns
    unit = schema.timestamp_unit
    if unit == "auto":
        unit = _detect_timestamp_unit([r[col["timestamp"]] for r in rows if r.get(col["timestamp"])])

    records, malformed = [], []
    for lineno, row in enumerate(rows, start=2):
        try:
            ts = _to_epoch_ms(row[col["timestamp"]], unit)
            src = str(ipaddress.IPv4Address(row[col["src_ip"]].strip()))
            dst = str(ipaddress.IPv4Address(row[col["dest_ip"]].strip()))
            sport = _parse_int(row[col["src_port"]], "src_port")
            dport = _parse_int(row[col["dest_port"]], "dest_port")
            proto = normalize_protocol(row[col["protocol"]]) if "protocol" in col else "OTHER"
            rec = FlowRecord(
                timestamp=ts,
                flow_id=(
                    row[col["flow_id"]].strip()
                    if "flow_id" in col
                    else _content_flow_id(ts, src, dst, sport, dport, proto)
                ),
                src_ip=src,
                dest_ip=dst,
                src_port=sport,
                dest_port=dport,
                protocol=proto,
                bytes_in=_parse_int(row[col["bytes_in"]], "bytes_in"),
                bytes_out=_parse_int(row[col["bytes_out"]], "bytes_out"),
                label=_parse_label(row[col["label"]]) if "label" in col else None,
            )
        except (ValueError, TypeError, AttributeError) as exc:
            malformed.append((lineno, str(exc)))
            continue
        records.append(rec)
    return FlowDataset(records=records, source_name=source_name, malformed=malformed)


def read_flows(path, schema: Optional[ColumnMapping] = None) -> FlowDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_flows(fh.read(), schema, source_name=str(path))


def flows_to_csv(dataset: Iterable[FlowRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=FLOW_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in dataset:
        writer.writerow(rec.as_row())
    return buf.getvalue()


def write_flows(dataset: Iterable[FlowRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(flows_to_csv(dataset))


def dedupe_and_sort(d: FlowDataset) -> FlowDataset:
    """Drop duplicate flows (first occurrence wins) and stable-sort by time.

    Byte counters are not part of the duplicate key.
    """
    seen = set()
    kept = []
    for rec in d.records:
        key = rec.dedup_key
        if key in seen:
            continue
        seen.add(key)
        kept.append(rec)
    kept.sort(key=lambda r: r.timestamp)
    removed = len(d.records) - len(kept)
    return d.with_records(kept, duplicates_removed=d.duplicates_removed + removed)


def _is_sorted(records: Sequence[FlowRecord]) -> bool:
    return all(a.timestamp <= b.timestamp for a, b in zip(records, records[1:]))


def split_train_period(d: FlowDataset, alpha: float) -> tuple:
    """Return ``(train, all)`` where train holds the earliest ceil(alpha*N) records."""
    if not 0.0 < alpha < 1.0:
        raise BadFraction(f"alpha must lie in (0, 1), got {alpha}")
    if not _is_sorted(d.records):
        raise ValueError("dataset must be sorted by timestamp before splitting")
    n_train = math.ceil(alpha * len(d.records))
    return d.with_records(d.records[:n_train]), d


def filter_benign(train: FlowDataset) -> FlowDataset:
    for i, rec in enumerate(train.records):
        if rec.label is None:
            raise UnlabeledRecord(f"record {i} ({rec.flow_id}) has no label")
    return train.with_records(r for r in train.records if r.label == 0)

"""Priority gating, pseudonymization, SPL generation, MITRE mapping and reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
import urllib.error
import urllib.request
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .aad import ScoredWindow
from .exceptions import BackendUnavailable, LengthMismatch, UnknownToken
from .flows import FlowRecord
from .windows import Window, WindowMetadata

log = logging.getLogger(__name__)

TOKEN_RE = re.compile(r"HOST_\d{4,}")
SUMMARY_COLUMNS = ("Flow ID", "Source IP", "Destination IP", "Priority Score", "MITRE ID", "Agent Answer")


@dataclass(frozen=True)
class PriorityItem:
    t: int
    action: int
    aad_score: float
    priority: float
    metadata: WindowMetadata
    flows: tuple = ()


def compute_priorities(actions: Sequence[int], scores: Sequence[ScoredWindow],
                       windows: Optional[Sequence[Window]] = None) -> List[PriorityItem]:
    """priority = action * AAD, sorted descending (ties keep window order)."""
    if len(actions) != len(scores):
        raise LengthMismatch(f"{len(actions)} actions vs {len(scores)} scored windows")
    flows_by_t = {w.index: tuple(w.flows) for w in windows} if windows is not None else {}
    items = [
        PriorityItem(t=s.t, action=int(a), aad_score=s.aad_score,
                     priority=float(int(a) * s.aad_score), metadata=s.metadata,
                     flows=flows_by_t.get(s.t, ()))
        for a, s in zip(actions, scores)
    ]
    return sorted(items, key=lambda it: -it.priority)


def select_for_analysis(items: Sequence[PriorityItem], threshold: float = 5.0):
    """Items whose priority is strictly above ``threshold``, plus the
    percentage of items filtered out."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    selected = [it for it in items if it.priority > threshold]
    total = len(items)
    reduction = 100.0 * (total - len(selected)) / total if total else 0.0
    return selected, reduction


def percentile_threshold(items: Sequence[PriorityItem], top_pct: float) -> float:
    """Threshold that keeps roughly the top ``top_pct`` percent of contained items."""
    pri = np.array([it.priority for it in items if it.action == 1])
    if pri.size == 0:
        return 0.0
    return float(np.percentile(pri, 100.0 - top_pct, method="lower")) if top_pct < 100 else 0.0


class PseudonymMap:
    """Bidirectional real-IP <-> token table; tokens allocated in first-seen order."""

    def __init__(self, prefix: str = "HOST_"):
        self.prefix = prefix
        self._forward: Dict[str, str] = {}
        self._reverse: Dict[str, str] = {}

    def __len__(self):
        return len(self._forward)

    def __contains__(self, ip):
        return ip in self._forward

    def token(self, ip: str) -> str:
        tok = self._forward.get(ip)
        if tok is None:
            tok = f"{self.prefix}{len(self._forward):04d}"
            self._forward[ip] = tok
            self._reverse[tok] = ip
        return tok

    def resolve(self, token: str) -> str:
        try:
            return self._reverse[token]
        except KeyError:
            raise UnknownToken(f"token {token!r} is not in the pseudonym map") from None

    def items(self):
        return list(self._forward.items())

    def snapshot(self) -> "PseudonymMap":
        other = PseudonymMap(self.prefix)
        other._forward = dict(self._forward)
        other._reverse = dict(self._reverse)
        return other

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["real_ip", "token"])
        writer.writerows(self._forward.items())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, prefix: str = "HOST_") -> "PseudonymMap":
        pm = cls(prefix)
        for row in csv.DictReader(io.StringIO(text)):
            pm._forward[row["real_ip"]] = row["token"]
            pm._reverse[row["token"]] = row["real_ip"]
        return pm


def pseudonymize(flows: Sequence[FlowRecord], pmap: Optional[PseudonymMap] = None):
    pmap = pmap if pmap is not None else PseudonymMap()
    out = [replace(f, src_ip=pmap.token(f.src_ip), dest_ip=pmap.token(f.dest_ip)) for f in flows]
    return out, pmap


def resolve_spl(query: str, pmap: PseudonymMap) -> str:
    return TOKEN_RE.sub(lambda m: pmap.resolve(m.group(0)), query)


SPL_TEMPLATES = {
    "burst_transaction": (
        "index=* sourcetype=suricata src_ip={src} "
        "| transaction src_ip maxpause=5s "
        "| where eventcount > 10 "
        "| table _time src_ip dest_ip dest_port duration eventcount"
    ),
    "host_filter": (
        "index=* sourcetype=suricata src_ip={src} "
        "| stats count by src_ip dest_ip dest_port "
        "| sort - count"
    ),
}


def generate_spl(meta: WindowMetadata, template: str = "burst_transaction",
                 pmap: Optional[PseudonymMap] = None) -> str:
    """SPL text for ``meta``'s representative source.

    With ``pmap`` the source is tokenized here; without it, ``meta`` must
    already carry a token.
    """
    src = pmap.token(meta.src_ip) if pmap is not None else meta.src_ip
    return SPL_TEMPLATES[template].format(src=src)


@dataclass(frozen=True)
class MitreMatch:
    technique_id: str
    name: str
    confidence: str
    rule: str


METADATA_API_IP = "169.254.169.254"
APP_PORTS = frozenset({53, 80, 443})


@dataclass(frozen=True)
class MitreRules:
    scan_distinct_ports: int = 20
    high_event_count: int = 100
    flood_event_count: int = 100


def map_mitre(meta: WindowMetadata, flows: Sequence[FlowRecord], rules: MitreRules = MitreRules()) -> MitreMatch:
    """First-match rule cascade over a window's flows."""
    ports_by_src: Dict[str, set] = {}
    for f in flows:
        ports_by_src.setdefault(f.src_ip, set()).add(f.dest_port)
    widest = max((len(p) for p in ports_by_src.values()), default=0)
    if widest >= rules.scan_distinct_ports:
        return MitreMatch("T1046", "Network Service Discovery", "high", "port_sweep")

    port_counts = Counter(f.dest_port for f in flows)
    dominant, dominant_n = (port_counts.most_common(1)[0] if port_counts else (meta.dest_port, 0))
    if dominant in APP_PORTS and dominant_n >= rules.high_event_count:
        return MitreMatch("T1071", "Application Layer Protocol", "high", "app_protocol_burst")

    if meta.dest_ip == METADATA_API_IP or any(f.dest_ip == METADATA_API_IP for f in flows):
        return MitreMatch("T1552.005", "Unsecured Credentials: Cloud Instance Metadata API",
                          "high", "metadata_api")

    udp_to = Counter(f.dest_ip for f in flows if f.protocol == "UDP")
    if udp_to and udp_to.most_common(1)[0][1] >= rules.flood_event_count:
        return MitreMatch("T1498.001", "Network Denial of Service: Direct Network Flood",
                          "high", "udp_volume")

    return MitreMatch("T1071", "Application Layer Protocol", "low", "fallback")


REMEDIATION = {
    "T1046": "Block the scanning source at the perimeter and review exposed services on the target.",
    "T1071": "Inspect the session payloads, restrict egress for the host and check for beaconing.",
    "T1552.005": "Enforce IMDSv2, restrict metadata access from workloads and rotate instance credentials.",
    "T1498.001": "Rate-limit or blackhole the flood source upstream and enable UDP flood protection.",
}


@dataclass(frozen=True)
class AnalystAnswer:
    risk_summary: str
    technique_id: str
    technique_name: str
    remediation: str
    verdict: str


TRIAGE_PROMPT = """Role: Senior SOC Triage Analyst
Goal: Assess the threat level associated with a prioritized network flow.
Backstory: Expert at distinguishing benign network noise from suspicious or malicious traffic.

Input:
- Flow ID: {flow_id}
- Source IP: {src_ip}
- Destination IP: {dest_ip}
- Destination Port: {dest_port}
- Priority Score: {priority}
- Anomaly Score: {aad_score}

Task:
Analyze the flow and determine whether the observed communication appears benign,
suspicious, or high risk. Briefly explain the reasoning using the provided network context.

Expected Output:
A concise SOC-style summary of the alert risk level."""

INTEL_PROMPT = """Role: Threat Intelligence Analyst
Goal: Map suspicious activity to MITRE ATT&CK and provide remediation guidance.
Backstory: Expert in associating network behaviors with adversarial techniques and response actions

Input:
- Flow ID: {flow_id}
- Source IP: {src_ip}
- Destination IP: {dest_ip}
- Destination Port: {dest_port}
- Priority Score: {priority}
- Anomaly Score: {aad_score}

Task:
Identify the most relevant MITRE ATT&CK technique associated with the observed flow.
Provide the MITRE technique ID, technique name, and a brief remediation recommendation.

Expected Output:
MITRE ATT&CK technique ID, technique name, and remediation guidance."""


def build_prompts(context: dict) -> Tuple[str, str]:
    return TRIAGE_PROMPT.format(**context), INTEL_PROMPT.format(**context)


class AnalystBackend(Protocol):
    backend_id: str
    external: bool

    def analyze(self, context: dict, mitre: MitreMatch) -> AnalystAnswer: ...


class StubBackend:
    """Deterministic template analyst with magnitude-banded verdicts."""

    backend_id = "stub"
    external = False

    def __init__(self, threshold: float = 5.0, reference_median: float = 0.0):
        self.threshold = threshold
        self.reference_median = reference_median

    def severity(self, priority: float) -> str:
        if self.reference_median > 0 and priority > 100.0 * self.reference_median:
            return "Critical"
        if priority > self.threshold:
            return "Malicious/Suspicious"
        return "Monitor"

    def analyze(self, context: dict, mitre: MitreMatch) -> AnalystAnswer:
        sev = self.severity(context["priority"])
        confidence = "" if mitre.confidence == "high" else " (low confidence)"
        summary = (
            f"{sev}: flow {context['flow_id']} from {context['src_ip']} to "
            f"{context['dest_ip']}:{context['dest_port']} matches {mitre.name}{confidence}; "
            f"priority {context['priority']:.3g}, anomaly score {context['aad_score']:.3g}."
        )
        verdict = {
            "Critical": f"Critical: {mitre.name} identified",
            "Malicious/Suspicious": f"Suspicious: {mitre.name} behaviour",
            "Monitor": "Risk level medium. Continuous monitoring is advised.",
        }[sev]
        return AnalystAnswer(summary, mitre.technique_id, mitre.name,
                             REMEDIATION.get(mitre.technique_id, REMEDIATION["T1071"]), verdict)


class ChatBackend:
    """Generic chat-completion client (OpenAI-style JSON over HTTP).

    Configured from ``SOCTRIAGE_LLM_URL``, ``SOCTRIAGE_LLM_KEY`` and
    ``SOCTRIAGE_LLM_MODEL`` unless passed explicitly.
    """

    backend_id = "chat"
    external = True

    def __init__(self, url: Optional[str] = None, api_key: Optional[str] = None,
                 model: Optional[str] = None, timeout: float = 30.0, max_concurrency: int = 4):
        self.url = url or os.environ.get("SOCTRIAGE_LLM_URL")
        self.api_key = api_key or os.environ.get("SOCTRIAGE_LLM_KEY")
        self.model = model or os.environ.get("SOCTRIAGE_LLM_MODEL", "gpt-4o-mini")
        self.timeout = timeout
        self.max_concurrency = max_concurrency

    @property
    def configured(self) -> bool:
        return bool(self.url)

    def _complete(self, prompt: str) -> str:
        if not self.url:
            raise BackendUnavailable("no chat backend URL configured")
        body = json.dumps({"model": self.model, "messages": [{"role": "user", "content": prompt}]})
        req = urllib.request.Request(self.url, data=body.encode(), method="POST",
                                     headers={"Content-Type": "application/json"})
        if self.api_key:
            req.add_header("Authorization", f"Bearer {self.api_key}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode())
            return payload["choices"][0]["message"]["content"]
        except (urllib.error.URLError, OSError, KeyError, IndexError, ValueError) as exc:
            raise BackendUnavailable(f"chat backend failed: {exc}") from exc

    def analyze(self, context: dict, mitre: MitreMatch) -> AnalystAnswer:
        triage_prompt, intel_prompt = build_prompts(context)
        summary = self._complete(triage_prompt).strip()
        intel = self._complete(intel_prompt).strip()
        found = re.search(r"T\d{4}(?:\.\d{3})?", intel)
        tid = found.group(0) if found else mitre.technique_id
        name = mitre.name if tid == mitre.technique_id else ""
        first_line = summary.splitlines()[0] if summary else ""
        return AnalystAnswer(summary, tid, name, intel, first_line[:120])


@dataclass(frozen=True)
class TriageReport:
    flow_id: str
    window: int
    src_ip: str
    dest_ip: str
    dest_port: int
    priority: float
    aad_score: float
    risk_summary: str
    mitre_id: str
    mitre_name: str
    remediation: str
    spl_query: str
    verdict: str
    backend_id: str

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _report_for(item: PriorityItem, flow: FlowRecord, anon: FlowRecord, mitre: MitreMatch,
                spl: str, backend, fallback) -> TriageReport:
    context = {
        "flow_id": anon.flow_id, "src_ip": anon.src_ip, "dest_ip": anon.dest_ip,
        "dest_port": anon.dest_port, "priority": item.priority, "aad_score": item.aad_score,
    }
    backend_id = backend.backend_id
    try:
        answer = backend.analyze(context, mitre)
    except BackendUnavailable as exc:
        log.warning("analyst backend %s unavailable (%s); using stub", backend.backend_id, exc)
        answer = fallback.analyze(context, mitre)
        backend_id = f"{fallback.backend_id} (fallback from {backend.backend_id})"
    return TriageReport(
        flow_id=anon.flow_id, window=item.t, src_ip=anon.src_ip, dest_ip=anon.dest_ip,
        dest_port=anon.dest_port, priority=item.priority, aad_score=item.aad_score,
        risk_summary=answer.risk_summary, mitre_id=answer.technique_id,
        mitre_name=answer.technique_name, remediation=answer.remediation, spl_query=spl,
        verdict=answer.verdict, backend_id=backend_id,
    )


def build_reports(selected: Sequence[PriorityItem], backend=None, pmap: Optional[PseudonymMap] = None,
                  spl_template: str = "burst_transaction", rules: MitreRules = MitreRules(),
                  fallback: Optional[StubBackend] = None):
    """One report per flow of every selected window, plus the master summary rows.

    Identifiers are pseudonymized before the backend sees them. Returns
    ``(reports, summary_rows, pmap)``.
    """
    pmap = pmap if pmap is not None else PseudonymMap()
    backend = backend or StubBackend()
    fallback = fallback or (backend if isinstance(backend, StubBackend) else StubBackend())
    jobs = []
    # Token allocation happens here, single-threaded, so numbering is deterministic.
    for item in selected:
        mitre = map_mitre(item.metadata, item.flows, rules)
        spl = generate_spl(item.metadata, spl_template, pmap)
        anon_flows, _ = pseudonymize(item.flows, pmap)
        jobs.extend((item, f, a, mitre, spl) for f, a in zip(item.flows, anon_flows))

    def run(job):
        return _report_for(*job, backend=backend, fallback=fallback)

    if getattr(backend, "external", False) and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=getattr(backend, "max_concurrency", 4)) as pool:
            reports = list(pool.map(run, jobs))
    else:
        reports = [run(j) for j in jobs]
    return reports, summary_rows(reports), pmap


def summary_rows(reports: Sequence[TriageReport]) -> List[dict]:
    return [
        {
            "Flow ID": r.flow_id,
            "Source IP": r.src_ip,
            "Destination IP": r.dest_ip,
            "Priority Score": f"{r.priority:.2e}",
            "MITRE ID": r.mitre_id,
            "Agent Answer": r.verdict,
        }
        for r in reports
    ]


def summary_csv(rows: Sequence[dict], pmap: Optional[PseudonymMap] = None) -> str:
    """Master table as CSV; with ``pmap`` the IP columns show real addresses."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        if pmap is not None:
            row = {**row, "Source IP": pmap.resolve(row["Source IP"]),
                   "Destination IP": pmap.resolve(row["Destination IP"])}
        writer.writerow(row)
    return buf.getvalue()

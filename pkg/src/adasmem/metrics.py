"""Per-port and global statistics, report serialization, isolation audit.

Throughput is measured on the data channels: read-return beats delivered
to the port and write-data beats accepted from the port, per fabric cycle.
Read latency runs from command acceptance to the last returned beat; the
first-beat latency is reported alongside. Latency statistics cover
commands issued inside the measurement window.

Histogram bucket ``i`` (0..31) holds latencies ``L`` with
``2**(i/2) <= L < 2**((i+1)/2)``; latencies below 1 go to bucket 0 and
anything at or above 2**15.5 to bucket 31.
"""

from __future__ import annotations

import csv
import io
import json
import math
from array import array
from bisect import bisect_left
from dataclasses import asdict, dataclass, field, fields

from .protocol import READ, WRITE, IntegrityError

HIST_BUCKETS = 32


def hist_bucket(latency: int) -> int:
    if latency < 1:
        return 0
    # 2*log2(L) >= i  <=>  L*L >= 2**i
    return min(HIST_BUCKETS - 1, (latency * latency).bit_length() - 1)


def hist_edges() -> list[float]:
    return [2 ** (i / 2) for i in range(HIST_BUCKETS + 1)]


class PortRecord:
    """Raw per-port event record filled in by the engine."""

    def __init__(self, master: int):
        self.master = master
        self.read_returns = array("q")   # cycle of every read beat delivered
        self.write_beats = array("q")    # cycle of every write data beat accepted
        self.completed = []              # retired Command objects
        self.last_issue = -1
        self.issued = 0
        self.active = False


@dataclass
class RunRecord:
    ports: list[PortRecord]
    total_cycles: int
    truncated: bool
    bank_conflicts: int
    peak_split_occupancy: int
    beats_in: int
    beats_retired: int
    drained: bool
    config: dict
    workload: dict
    seed: int
    zero_load_latency: int


@dataclass
class PortReport:
    master: int
    active: bool
    window_start: int
    window_end: int
    read_throughput: float
    write_throughput: float
    reads_completed: int
    writes_completed: int
    read_beats: int
    read_beats_returned: int
    write_beats: int
    avg_read_latency: float | None
    min_read_latency: int | None
    max_read_latency: int | None
    std_read_latency: float | None
    avg_read_first_beat_latency: float | None
    avg_write_latency: float | None
    min_write_latency: int | None
    max_write_latency: int | None
    avg_inflight_read_beats: float
    read_latency_hist: list[int] = field(default_factory=lambda: [0] * HIST_BUCKETS)
    write_latency_hist: list[int] = field(default_factory=lambda: [0] * HIST_BUCKETS)


@dataclass
class RunReport:
    ports: list[PortReport]
    total_cycles: int
    truncated: bool
    bank_conflicts: int
    peak_split_occupancy: int
    beats_in: int
    beats_retired: int
    seed: int
    config: dict
    workload: dict

    def active_ports(self) -> list[PortReport]:
        return [p for p in self.ports if p.active]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        d = json.loads(text)
        d["ports"] = [PortReport(**p) for p in d["ports"]]
        return cls(**d)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in self.ports:
            w.writerow([_csv_value(getattr(p, c)) for c in CSV_COLUMNS])
        return buf.getvalue()


CSV_COLUMNS = [f.name for f in fields(PortReport) if not f.name.endswith("_hist")]


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


def _stats(values: list[int]):
    if not values:
        return None, None, None, None
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, min(values), max(values), math.sqrt(var)


def _count_in(arr, start: int, end: int) -> int:
    return bisect_left(arr, end) - bisect_left(arr, start)


def port_report(rec: PortRecord, start: int, end: int) -> PortReport:
    span = end - start
    reads = [c for c in rec.completed if c.op == READ and start <= c.issue_cycle < end]
    writes = [c for c in rec.completed if c.op == WRITE and start <= c.issue_cycle < end]
    rlat = [c.done_cycle - c.issue_cycle for c in reads]
    wlat = [c.done_cycle - c.issue_cycle for c in writes]
    first = [c.first_cycle - c.issue_cycle for c in reads]
    rh = [0] * HIST_BUCKETS
    for v in rlat:
        rh[hist_bucket(v)] += 1
    wh = [0] * HIST_BUCKETS
    for v in wlat:
        wh[hist_bucket(v)] += 1
    ravg, rmin, rmax, rstd = _stats(rlat)
    wavg, wmin, wmax, _ = _stats(wlat)

    # time-integral of requested-but-not-returned read beats over the window
    inflight = 0
    if span > 0:
        for c in rec.completed:
            if c.op == READ and c.issue_cycle < end:
                inflight += c.beats * (end - max(c.issue_cycle, start))
        for r in rec.read_returns:
            if r >= end:
                break
            inflight -= end - max(r, start)
    return PortReport(
        master=rec.master,
        active=rec.active,
        window_start=start,
        window_end=end,
        read_throughput=_count_in(rec.read_returns, start, end) / span if span > 0 else 0.0,
        write_throughput=_count_in(rec.write_beats, start, end) / span if span > 0 else 0.0,
        reads_completed=len(reads),
        writes_completed=len(writes),
        read_beats=sum(c.beats for c in reads),
        read_beats_returned=sum(c.n_done for c in reads),
        write_beats=sum(c.beats for c in writes),
        avg_read_latency=ravg,
        min_read_latency=rmin,
        max_read_latency=rmax,
        std_read_latency=rstd,
        avg_read_first_beat_latency=sum(first) / len(first) if first else None,
        avg_write_latency=wavg,
        min_write_latency=wmin,
        max_write_latency=wmax,
        avg_inflight_read_beats=inflight / span if span > 0 else 0.0,
        read_latency_hist=rh,
        write_latency_hist=wh,
    )


def default_window(rec: PortRecord, record: RunRecord) -> tuple[int, int]:
    """Skip warm-up (two zero-load latencies) and the drain after the
    port's last issue; fall back to the whole run if that leaves nothing."""
    start = 2 * record.zero_load_latency
    end = rec.last_issue + 1
    if end - start <= 0:
        return 0, record.total_cycles
    return start, end


def finalize(record: RunRecord, window: tuple[int, int] | None = None) -> RunReport:
    if not record.drained and not record.truncated:
        raise IntegrityError("finalize called on a run that has not drained")
    if record.drained and record.beats_in != record.beats_retired:
        raise IntegrityError(f"beats in {record.beats_in} != beats retired {record.beats_retired}")
    ports = []
    for rec in record.ports:
        start, end = window if window is not None else default_window(rec, record)
        ports.append(port_report(rec, start, end))
    return RunReport(
        ports=ports,
        total_cycles=record.total_cycles,
        truncated=record.truncated,
        bank_conflicts=record.bank_conflicts,
        peak_split_occupancy=record.peak_split_occupancy,
        beats_in=record.beats_in,
        beats_retired=record.beats_retired,
        seed=record.seed,
        config=record.config,
        workload=record.workload,
    )


def little_ratio(p: PortReport, latency: str = "avg_read_latency") -> float | None:
    """in-flight read beats / (throughput x latency); 1.0 is a perfect match."""
    lat = getattr(p, latency)
    if not lat or not p.read_throughput:
        return None
    return p.avg_inflight_read_beats / (p.read_throughput * lat)


def pooled_std(ports: list[PortReport]) -> float | None:
    """Standard deviation of read latency over all commands of ``ports``."""
    n = sum(p.reads_completed for p in ports if p.avg_read_latency is not None)
    if not n:
        return None
    mean = sum(p.avg_read_latency * p.reads_completed for p in ports if p.avg_read_latency is not None) / n
    ss = 0.0
    for p in ports:
        if p.avg_read_latency is None:
            continue
        ss += p.reads_completed * (p.std_read_latency ** 2 + (p.avg_read_latency - mean) ** 2)
    return math.sqrt(ss / n)


# ---- isolation audit ---------------------------------------------------

AUDITED = (
    "read_throughput", "write_throughput", "reads_completed", "writes_completed",
    "avg_read_latency", "min_read_latency", "max_read_latency", "avg_write_latency",
    "max_write_latency", "read_latency_hist", "write_latency_hist",
)


class AuditSetupError(ValueError):
    pass


@dataclass
class AuditResult:
    passed: bool
    violations: list[str]
    ports_checked: list[int]


def isolation_audit(joint: RunReport, solos: list[RunReport]) -> AuditResult:
    """Every port active in a solo run must show bit-identical metrics in
    the joint run."""
    def strip(w):
        return {k: v for k, v in w.items() if k != "masters"}

    violations = []
    checked = []
    joint_active = {p.master for p in joint.active_ports()}
    seen = set()
    for solo in solos:
        if strip(solo.workload) != strip(joint.workload) or solo.seed != joint.seed:
            raise AuditSetupError("solo run workload differs from the joint run")
        if solo.config != joint.config:
            raise AuditSetupError("solo run configuration differs from the joint run")
        for sp in solo.active_ports():
            if sp.master not in joint_active:
                raise AuditSetupError(f"port {sp.master} is idle in the joint run")
            if sp.master in seen:
                raise AuditSetupError(f"port {sp.master} appears in more than one solo run")
            seen.add(sp.master)
            jp = joint.ports[sp.master]
            checked.append(sp.master)
            for name in AUDITED:
                a, b = getattr(jp, name), getattr(sp, name)
                if a != b:
                    violations.append(f"port {sp.master}: {name} joint={a} solo={b}")
    return AuditResult(not violations, violations, checked)

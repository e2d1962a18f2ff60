"""Traffic generators and trace replay.

Every master gets a region of ``region_bytes`` starting at
``master * region_bytes``. Generators yield ``(op, base, beats, min_cycle)``
tuples; a :class:`Source` wraps one generator with injection-rate gating and
is what a port polls each cycle.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields
from typing import Iterator

from .addressing import AddressMap
from .config import BURST_LENGTHS, MIB, KIB, TopologyConfig, parse_size
from .protocol import READ, WRITE
from .rng import Rng, derive_seed

KINDS = ("uniform", "bulk", "feature", "roi", "trace", "adas")
OPS = ("read", "write", "both")


class WorkloadError(ValueError):
    pass


class TraceError(WorkloadError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_mix(text: str) -> tuple[tuple[int, float], ...]:
    """``"16"`` or ``"4:0.5,8:0.5"`` -> ((4, 0.5), (8, 0.5))."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        b, _, w = part.partition(":")
        out.append((int(b), float(w) if w else 1.0))
    return tuple(out)


def format_mix(mix) -> str:
    return ",".join(f"{b}:{w:g}" for b, w in mix)


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "uniform"
    masters: tuple[int, ...] | None = None      # active ports; None = all
    ops: str = "both"
    transactions: int = 10_000                   # uniform: commands per port (split across channels)
    rate: float = 1.0
    burst_mix: tuple[tuple[int, float], ...] = ((16, 1.0),)
    region_bytes: int = 2 * MIB
    payload_bytes: int = 4 * KIB                 # bulk/feature/roi: bytes per channel per port
    line_bytes: int = 256
    portion_bytes: int = 128
    line_stride: int = 1 * KIB
    feature_mix: tuple[tuple[int, float], ...] = ((4, 0.5), (8, 0.5))
    roi_width: int = 1920
    roi_height: int = 1080
    bytes_per_pixel: int = 2
    roi_clip: int = 2 * MIB
    trace: str | None = None
    isolation: bool = False
    seed: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise WorkloadError(f"unknown workload kind {self.kind!r}; choose from {KINDS}")
        if self.ops not in OPS:
            raise WorkloadError(f"ops must be one of {OPS}")
        if not 0.0 < self.rate <= 1.0:
            raise WorkloadError("rate must lie in (0, 1]")
        for name in ("burst_mix", "feature_mix"):
            mix = getattr(self, name)
            if not mix:
                raise WorkloadError(f"{name} is empty")
            for b, w in mix:
                if b not in BURST_LENGTHS:
                    raise WorkloadError(f"{name}: burst length {b} not in {BURST_LENGTHS}")
                if w < 0:
                    raise WorkloadError(f"{name}: negative weight")
            if abs(sum(w for _, w in mix) - 1.0) > 1e-9:
                raise WorkloadError(f"{name}: weights must sum to 1")
        if self.transactions < 0 or self.payload_bytes < 0:
            raise WorkloadError("transactions and payload_bytes must be >= 0")
        if self.kind == "trace" and not self.trace:
            raise WorkloadError("trace workload needs a trace path")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["masters"] = None if self.masters is None else list(self.masters)
        d["burst_mix"] = format_mix(self.burst_mix)
        d["feature_mix"] = format_mix(self.feature_mix)
        if self.kind in ("trace", "adas", "feature", "roi"):
            d["note"] = "synthetic stand-in for unpublished ADAS traces"
        return d

    def active(self, topo: TopologyConfig) -> list[int]:
        if self.masters is None:
            return list(range(topo.masters))
        for m in self.masters:
            if not 0 <= m < topo.masters:
                raise WorkloadError(f"master {m} outside [0, {topo.masters})")
        return sorted(set(self.masters))

    def region(self, master: int, topo: TopologyConfig) -> tuple[int, int]:
        size = self.region_bytes
        if size <= 0 or size > topo.total_bytes or size % (16 * topo.beat_bytes):
            raise WorkloadError(f"region_bytes={size} must be a multiple of a burst-16 and fit in memory")
        if (master + 1) * size > topo.total_bytes:
            if self.isolation:
                raise WorkloadError(f"master {master} region does not fit without overlap")
            lo = (master * size) % topo.total_bytes
        else:
            lo = master * size
        return lo, lo + size


_INT_FIELDS = {"transactions", "seed"}
_SIZE_FIELDS = {"region_bytes", "payload_bytes", "line_bytes", "portion_bytes", "line_stride", "roi_clip"}
_PLAIN_INT = {"roi_width", "roi_height", "bytes_per_pixel"}
WORKLOAD_KEYS = tuple(f.name for f in fields(WorkloadSpec))


def parse_masters(text: str) -> tuple[int, ...] | None:
    text = text.strip()
    if text in ("", "all", "None"):
        return None
    out: list[int] = []
    for part in text.split(","):
        a, sep, b = part.partition("..")
        if sep:
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(a))
    return tuple(out)


def convert_workload_value(key: str, raw):
    if not isinstance(raw, str):
        return raw
    if key in _SIZE_FIELDS:
        return parse_size(raw)
    if key in _INT_FIELDS or key in _PLAIN_INT:
        return int(raw, 0)
    if key == "rate":
        return float(raw)
    if key in ("burst_mix", "feature_mix"):
        return parse_mix(raw)
    if key == "masters":
        return parse_masters(raw)
    if key == "isolation":
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if key == "trace":
        return raw.strip() or None
    return raw.strip()


def workload_from_mapping(values: dict, base: WorkloadSpec | None = None) -> WorkloadSpec:
    kw = asdict(base) if base is not None else {}
    for k, v in values.items():
        if k not in WORKLOAD_KEYS:
            raise WorkloadError(f"unknown workload key {k!r}")
        try:
            kw[k] = convert_workload_value(k, v)
        except ValueError as exc:
            raise WorkloadError(f"workload.{k}: {exc}") from None
    if isinstance(kw.get("masters"), list):
        kw["masters"] = tuple(kw["masters"])
    for name in ("burst_mix", "feature_mix"):
        if isinstance(kw.get(name), list):
            kw[name] = tuple(tuple(x) for x in kw[name])
    return WorkloadSpec(**kw)


# ---- generators -------------------------------------------------------


def _pick(mix, rng: Rng) -> int:
    if len(mix) == 1:
        return mix[0][0]
    u = rng.random()
    acc = 0.0
    for b, w in mix:
        acc += w
        if u < acc:
            return b
    return mix[-1][0]


def _largest_fit(nbytes: int, bb: int) -> int:
    for b in (16, 8, 4, 1):
        if b * bb <= nbytes:
            return b
    raise WorkloadError(f"{nbytes} bytes is smaller than one beat")


def uniform_stream(op, lo, hi, count, mix, rng: Rng, bb: int) -> Iterator:
    slots = (hi - lo) // bb
    for _ in range(count):
        b = _pick(mix, rng)
        base = lo + rng.below(slots - b + 1) * bb
        yield (op, base, b, 0)


def bulk_stream(op, lo, hi, payload, bb: int) -> Iterator:
    addr = lo
    left = payload
    while left > 0:
        b = _largest_fit(min(left, 16 * bb), bb)
        if addr + b * bb > hi:
            addr = lo
        yield (op, addr, b, 0)
        addr += b * bb
        left -= b * bb


def feature_stream(op, lo, hi, payload, spec: WorkloadSpec, rng: Rng, bb: int) -> Iterator:
    """Portion of a line, then jump to the next line; the portion offset
    changes from pass to pass (a different layer reading a different
    sub-region)."""
    lines = (hi - lo) // spec.line_stride
    if lines < 1 or spec.line_bytes > spec.line_stride:
        raise WorkloadError("feature pattern does not fit the region")
    offsets = max(1, spec.line_bytes // spec.portion_bytes)
    left = payload
    while left > 0:
        off = rng.below(offsets) * spec.portion_bytes
        for line in range(lines):
            if left <= 0:
                break
            b = _pick(spec.feature_mix, rng)
            size = min(b * bb, left)
            b = _largest_fit(size, bb)
            size = b * bb
            o = off if off + size <= spec.line_bytes else max(0, spec.line_bytes - size) // size * size
            yield (op, lo + line * spec.line_stride + o, b, 0)
            left -= size


def roi_stream(op, lo, hi, payload, spec: WorkloadSpec, bb: int) -> Iterator:
    """Continuous line-by-line scan of a W x H image clipped at roi_clip."""
    pitch = spec.roi_width * spec.bytes_per_pixel
    size = min(spec.roi_width * spec.roi_height * spec.bytes_per_pixel, spec.roi_clip, hi - lo)
    size -= size % bb
    if size <= 0:
        raise WorkloadError("ROI does not fit the region")
    left = payload
    while left > 0:
        line_start = 0
        while line_start < size and left > 0:
            line_end = min(line_start + pitch, size)
            addr = line_start
            while addr < line_end and left > 0:
                b = _largest_fit(min(line_end - addr, 16 * bb, left), bb)
                yield (op, lo + addr, b, 0)
                addr += b * bb
                left -= b * bb
            line_start = line_end


@dataclass(frozen=True)
class TraceRecord:
    master: int
    op: str
    address: int
    beats: int
    min_issue_cycle: int = 0


def trace_stream(records) -> Iterator:
    for r in records:
        yield (r.op, r.address, r.beats, r.min_issue_cycle)


class Source:
    """One command stream of a port, polled once per cycle while it has
    nothing pending."""

    __slots__ = ("it", "head", "rate", "gate", "done", "issued")

    def __init__(self, it: Iterator, rate: float = 1.0, gate: Rng | None = None):
        self.it = it
        self.head = None
        self.rate = rate
        self.gate = gate
        self.done = False
        self.issued = 0

    def next_command(self, cycle: int):
        """(op, base, beats) offered this cycle, or None."""
        if self.head is None:
            if self.done:
                return None
            try:
                self.head = next(self.it)
            except StopIteration:
                self.done = True
                return None
        op, base, beats, min_cycle = self.head
        if cycle < min_cycle:
            return None
        if self.rate < 1.0 and self.gate.random() >= self.rate:
            return None
        self.head = None
        self.issued += 1
        return op, base, beats

    @property
    def exhausted(self) -> bool:
        if self.head is None and not self.done:
            try:
                self.head = next(self.it)
            except StopIteration:
                self.done = True
        return self.head is None


def _channels(spec: WorkloadSpec, lo: int, hi: int):
    half = (hi - lo) // 2
    if spec.ops == "read":
        return [(READ, lo, hi)]
    if spec.ops == "write":
        return [(WRITE, lo, hi)]
    return [(READ, lo, lo + half), (WRITE, lo + half, hi)]


def build_sources(spec: WorkloadSpec, topo: TopologyConfig, traces: dict | None = None) -> dict[int, list[Source]]:
    """Per-master list of command sources."""
    bb = topo.beat_bytes
    out: dict[int, list[Source]] = {}
    if spec.kind == "trace":
        if traces is None:
            traces = load_trace(spec.trace, topo, isolation=spec.isolation)
        active = set(spec.active(topo))
        for m, recs in traces.items():
            if m in active and recs:
                out[m] = [Source(trace_stream(recs))]
        return out
    for m in spec.active(topo):
        lo, hi = spec.region(m, topo)
        kind = spec.kind
        if kind == "adas":
            kind = "feature" if m < topo.masters // 2 else "roi"
        sources = []
        if kind == "uniform":
            ops = [READ, WRITE] if spec.ops == "both" else [READ if spec.ops == "read" else WRITE]
            counts = [spec.transactions - spec.transactions // 2, spec.transactions // 2] if len(ops) == 2 \
                else [spec.transactions]
            for i, (op, n) in enumerate(zip(ops, counts)):
                rng = Rng(derive_seed(spec.seed, m, i))
                gate = Rng(derive_seed(spec.seed, m, i, "gate"))
                sources.append(Source(uniform_stream(op, lo, hi, n, spec.burst_mix, rng, bb), spec.rate, gate))
        else:
            for i, (op, clo, chi) in enumerate(_channels(spec, lo, hi)):
                rng = Rng(derive_seed(spec.seed, m, i))
                gate = Rng(derive_seed(spec.seed, m, i, "gate"))
                if kind == "bulk":
                    it = bulk_stream(op, clo, chi, spec.payload_bytes, bb)
                elif kind == "feature":
                    it = feature_stream(op, clo, chi, spec.payload_bytes, spec, rng, bb)
                else:
                    it = roi_stream(op, clo, chi, spec.payload_bytes, spec, bb)
                sources.append(Source(it, spec.rate, gate))
        out[m] = sources
    return out


def command_list(spec: WorkloadSpec, topo: TopologyConfig, master: int) -> list[tuple[str, int, int]]:
    """Every command one master would issue, ignoring timing."""
    out = []
    for src in build_sources(spec, topo).get(master, []):
        src.rate = 1.0
        while True:
            c = src.next_command(1 << 62)
            if c is None:
                break
            out.append(c)
    return out


def bank_transitions_per_kib(commands, amap: AddressMap) -> float:
    """Changes of (bank, sub-bank) between consecutive beats, per KiB moved."""
    prev = None
    changes = 0
    nbytes = 0
    bb = amap.beat_bytes
    for _, base, beats in commands:
        for i in range(beats):
            _, _, bank, sub, _ = amap.locate_fast(base + i * bb)
            if prev is not None and (bank, sub) != prev:
                changes += 1
            prev = (bank, sub)
        nbytes += beats * bb
    return changes / (nbytes / KIB) if nbytes else 0.0


# ---- trace files ------------------------------------------------------


def parse_trace(text: str, topo: TopologyConfig, isolation: bool = False) -> dict[int, list[TraceRecord]]:
    """Parse ``master,op,address_hex,beats[,min_cycle]`` records."""
    out: dict[int, list[TraceRecord]] = {}
    bb = topo.beat_bytes
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        row = next(csv.reader(io.StringIO(line)))
        row = [c.strip() for c in row]
        if len(row) not in (4, 5):
            raise TraceError(f"expected 4 or 5 fields, got {len(row)}", lineno)
        try:
            master = int(row[0])
            op = row[1].upper()
            addr = int(row[2], 16)
            beats = int(row[3])
            min_cycle = int(row[4]) if len(row) == 5 else 0
        except ValueError as exc:
            raise TraceError(str(exc), lineno) from None
        if op in ("READ", "RD"):
            op = READ
        elif op in ("WRITE", "WR"):
            op = WRITE
        if op not in (READ, WRITE):
            raise TraceError(f"op must be R or W, got {row[1]!r}", lineno)
        if not 0 <= master < topo.masters:
            raise TraceError(f"master {master} outside [0, {topo.masters})", lineno)
        if beats not in BURST_LENGTHS:
            raise TraceError(f"burst length {beats} not in {BURST_LENGTHS}", lineno)
        if addr % bb:
            raise TraceError(f"address {addr:#x} not {bb}-byte aligned", lineno)
        if addr < 0 or addr + beats * bb > topo.total_bytes:
            raise TraceError(f"address {addr:#x} + {beats} beats out of range", lineno)
        if min_cycle < 0:
            raise TraceError("min_cycle must be >= 0", lineno)
        out.setdefault(master, []).append(TraceRecord(master, op, addr, beats, min_cycle))
    if isolation:
        check_disjoint(out, bb)
    return out


def check_disjoint(traces: dict[int, list[TraceRecord]], bb: int) -> None:
    spans = []
    for m, recs in traces.items():
        for r in recs:
            spans.append((r.address, r.address + r.beats * bb, m))
    spans.sort()
    # sweep: any interval overlapping another master's interval is an error
    reach_end, reach_master = -1, None
    for lo, hi, m in spans:
        if lo < reach_end and m != reach_master:
            raise TraceError(f"masters {reach_master} and {m} overlap at {lo:#x} (isolation mode)")
        if hi > reach_end:
            reach_end, reach_master = hi, m
    return None


def load_trace(path, topo: TopologyConfig, isolation: bool = False) -> dict[int, list[TraceRecord]]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read(), topo, isolation)


def write_trace(path_or_file, records, header: str | None = None) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", encoding="utf-8") if own else path_or_file
    try:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for r in records:
            tail = f",{r.min_issue_cycle}" if r.min_issue_cycle else ""
            fh.write(f"{r.master},{r.op},{r.address:#x},{r.beats}{tail}\n")
    finally:
        if own:
            fh.close()


def synthesize_trace(spec: WorkloadSpec, topo: TopologyConfig) -> list[TraceRecord]:
    """Flatten a generated workload into trace records, interleaving
    masters and keeping each master's commands in generation order."""
    per_master = []
    for m in spec.active(topo):
        cmds = []
        sources = build_sources(spec, topo).get(m, [])
        # interleave the master's channels so file order mirrors concurrent issue
        live = list(sources)
        for s in live:
            s.rate = 1.0
        while live:
            nxt = []
            for s in live:
                c = s.next_command(1 << 62)
                if c is not None:
                    cmds.append(TraceRecord(m, c[0], c[1], c[2]))
                    nxt.append(s)
            live = nxt
        per_master.append(cmds)
    out = []
    i = 0
    while any(i < len(c) for c in per_master):
        for c in per_master:
            if i < len(c):
                out.append(c[i])
        i += 1
    return out

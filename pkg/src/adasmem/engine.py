"""Cycle-driven simulation kernel.

Order of work inside one fabric cycle:

1. response path: deliver read beats / write acks to ports, advance merge nodes
2. memory tick, only on memory-clock edges (``cycle % ratio == 0``)
3. request path: level-2 lanes hand beats to sub-bank queues
4. ports: accept at most one read and one write command, then inject one
   write-data beat and as many read-request beats as the split buffer takes
"""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .addressing import AddressMap, AddressError, ProtocolError
from .config import SimConfig
from .fabric import Fabric
from .memory import Memory
from .metrics import PortRecord, RunRecord, RunReport, finalize
from .protocol import READ, WRITE, Beat, Command, IntegrityError, PortState
from .rng import derive_seed
from .workload import WORKLOAD_KEYS, WorkloadSpec, build_sources, workload_from_mapping

log = logging.getLogger(__name__)

DEFAULT_MAX_CYCLES = 50_000_000


def write_payload(master: int, cmd_id: int, index: int, beat_bytes: int) -> bytes:
    word = ((master & 0xFFFF) << 48 | (cmd_id & 0xFFFFFFFFFF) << 8 | (index & 0xFF)).to_bytes(8, "little")
    if beat_bytes >= 8:
        return word * (beat_bytes // 8)
    return word[:beat_bytes]


class PortRuntime:
    __slots__ = ("master", "port", "sources", "pending", "rd_q", "wr_q", "rec")

    def __init__(self, master: int, limit: int, sources):
        self.master = master
        self.port = PortState(master, limit)
        self.sources = sources
        self.pending: list[Command | None] = [None] * len(sources)
        self.rd_q: deque[Beat] = deque()
        self.wr_q: deque[Beat] = deque()
        self.rec = PortRecord(master)
        self.rec.active = bool(sources)

    def live(self) -> bool:
        if self.rd_q or self.wr_q:
            return True
        for cmd, src in zip(self.pending, self.sources):
            if cmd is not None or not src.exhausted:
                return True
        return False


class Simulator:
    def __init__(self, cfg: SimConfig, workload: WorkloadSpec, traces=None, event_log=None,
                 capture_reads: bool = False, record_commits: bool = False, paranoid: bool = False):
        self.cfg = cfg
        self.workload = workload
        self.amap = AddressMap(cfg.topology, cfg.scheme)
        self.memory = Memory(cfg, log=event_log)
        self.fabric = Fabric(cfg, self.memory, log=event_log)
        self.log = event_log
        self.paranoid = paranoid
        if record_commits:
            self.memory.commit_log = []
        sources = build_sources(workload, cfg.topology, traces)
        limit = cfg.timing.outstanding_per_port
        self.ports = [PortRuntime(m, limit, sources.get(m, [])) for m in range(cfg.topology.masters)]
        if capture_reads:
            for p in self.ports:
                p.port.read_data = {}
        self.live = [p for p in self.ports if p.live()]
        self.cycle = 0
        self.beats_in = 0
        self.beats_retired = 0
        self.outstanding = 0
        self.dropped = 0
        self.mem_ticks = 0

    # -- phases ---------------------------------------------------------

    def _deliver(self, now: int) -> None:
        for item in self.fabric.tick_response(now):
            if type(item) is Beat:
                cmd = item.cmd
                rt = self.ports[cmd.master]
                done = rt.port.mark_read(cmd, item.index, item.payload, now)
                rt.rec.read_returns.append(now)
                self.beats_retired += 1
                if self.log:
                    self.log(f"{now} return m{cmd.master} #{cmd.cmd_id}.{item.index}")
            else:
                cmd = item
                self.ports[cmd.master].port.record_write_ack(cmd.parent, now)
                done = True
                if self.log:
                    self.log(f"{now} ack m{cmd.master} #{cmd.cmd_id}")
            if done:
                self.outstanding -= 1
                self.ports[cmd.master].rec.completed.append(cmd)

    def _memory(self, now: int) -> None:
        self.mem_ticks += 1
        completes = now + self.memory.access
        fabric = self.fabric
        for beat in self.memory.tick(now):
            cmd = beat.cmd
            if cmd.op == WRITE:
                self.beats_retired += 1
                cmd.n_done += 1
                cmd.returned |= 1 << beat.index
                if cmd.n_done == cmd.beats:
                    fabric.schedule_ack(cmd, completes)
            else:
                fabric.accept_completion(beat, completes)

    def _make_beats(self, cmd: Command) -> list[Beat]:
        bb = self.amap.beat_bytes
        locate = self.amap.locate_fast
        key_of = self.memory.key_of
        n_arrays = self.cfg.topology.arrays_per_cluster
        write = cmd.op == WRITE
        out = []
        for i in range(cmd.beats):
            addr = cmd.base + i * bb
            loc = locate(addr)
            payload = write_payload(cmd.master, cmd.cmd_id, i, bb) if write else None
            beat = Beat(cmd, i, addr, loc, payload)
            beat.sb_key = key_of(loc[0], loc[1], loc[2], loc[3])
            beat.l2_key = loc[0] * n_arrays + loc[1]
            out.append(beat)
        return out

    def _issue(self, rt: PortRuntime, now: int) -> None:
        used_r = used_w = False
        port = rt.port
        bb = self.amap.beat_bytes
        for i, src in enumerate(rt.sources):
            cmd = rt.pending[i]
            if cmd is None:
                offer = src.next_command(now)
                if offer is None:
                    continue
                op, base, beats = offer
                try:
                    self.amap.check_burst(base, beats)
                except (ProtocolError, AddressError) as exc:
                    self.dropped += 1
                    log.warning("master %d: dropped command: %s", rt.master, exc)
                    continue
                cmd = rt.pending[i] = Command(rt.master, op, base, beats, bb)
            if (used_w if cmd.op == WRITE else used_r):
                continue
            if port.try_accept(cmd, now):
                rt.pending[i] = None
                self.outstanding += 1
                rt.rec.last_issue = now
                rt.rec.issued += 1
                if cmd.op == WRITE:
                    used_w = True
                    rt.wr_q.extend(self._make_beats(cmd))
                else:
                    used_r = True
                    rt.rd_q.extend(self._make_beats(cmd))
                if self.log:
                    self.log(f"{now} issue {cmd!r}")

    def _inject(self, rt: PortRuntime, now: int) -> None:
        fabric = self.fabric
        if rt.wr_q and fabric.inject_beats(rt.master, (rt.wr_q[0],), now):
            rt.wr_q.popleft()
            rt.rec.write_beats.append(now)
            self.beats_in += 1
        if rt.rd_q:
            n = fabric.inject_beats(rt.master, rt.rd_q, now)
            for _ in range(n):
                rt.rd_q.popleft()
            self.beats_in += n

    def step(self) -> None:
        now = self.cycle
        self._deliver(now)
        if now % self.memory.ratio == 0:
            self._memory(now)
        self.fabric.tick_request(now)
        if self.live:
            finished = False
            for rt in self.live:
                self._issue(rt, now)
                self._inject(rt, now)
                if not rt.rd_q and not rt.wr_q:
                    finished = True
            if finished:
                self.live = [rt for rt in self.live if rt.live()]
        if self.paranoid:
            self.check_invariants()
        self.cycle = now + 1

    @property
    def drained(self) -> bool:
        return not self.live and self.outstanding == 0

    def check_invariants(self) -> None:
        inflight = self.beats_in - self.beats_retired
        held = self.fabric.request_inflight + self.memory.queued + self.fabric.response_inflight
        if inflight != held:
            raise IntegrityError(f"cycle {self.cycle}: {inflight} beats in flight but {held} held")
        limit = self.cfg.timing.outstanding_per_port
        for rt in self.ports:
            for op in (READ, WRITE):
                if rt.port.outstanding[op] > limit:
                    raise IntegrityError(f"cycle {self.cycle}: port {rt.master} exceeds credit limit")
        cap = self.cfg.timing.split_buffer_beats
        for path in self.fabric.paths:
            if path.occupancy > cap:
                raise IntegrityError(f"cycle {self.cycle}: split buffer of master {path.master} overflows")

    def run(self, max_cycles: int | None = None) -> RunRecord:
        limit = DEFAULT_MAX_CYCLES if max_cycles is None else max_cycles
        while not self.drained and self.cycle < limit:
            self.step()
        drained = self.drained
        if drained and not self.fabric.idle():
            raise IntegrityError("ports drained but the fabric still holds beats")
        if drained and self.beats_in != self.beats_retired:
            raise IntegrityError(f"conservation: {self.beats_in} beats in, {self.beats_retired} retired")
        return self.record(truncated=not drained)

    def record(self, truncated: bool = False) -> RunRecord:
        return RunRecord(
            ports=[rt.rec for rt in self.ports],
            total_cycles=self.cycle,
            truncated=truncated,
            bank_conflicts=self.memory.conflicts,
            peak_split_occupancy=self.fabric.peak_occupancy,
            beats_in=self.beats_in,
            beats_retired=self.beats_retired,
            drained=not truncated,
            config=self.cfg.to_dict(),
            workload=self.workload.to_dict(),
            seed=self.workload.seed,
            zero_load_latency=self.cfg.timing.zero_load_read_latency,
        )


def run(cfg: SimConfig, workload: WorkloadSpec, max_cycles: int | None = None,
        window: tuple[int, int] | None = None, traces=None, event_log=None,
        dump_memory: str | None = None) -> RunReport:
    sim = Simulator(cfg, workload, traces=traces, event_log=event_log)
    rec = sim.run(max_cycles)
    if dump_memory:
        sim.memory.dump_image(sim.amap, dump_memory)
    return finalize(rec, window)


# ---- sweeps -------------------------------------------------------------


@dataclass
class SweepPoint:
    axis: str
    value: object
    seed: int
    report: RunReport | None
    error: str | None = None


def apply_axis(cfg: SimConfig, workload: WorkloadSpec, axis: str, value):
    """Return (cfg, workload) with ``axis`` set to ``value``.

    ``masters=N`` activates ports 0..N-1 on the configured hardware.
    ``workload.<key>`` or a bare workload field goes to the workload;
    ``config.<key>`` or any other name goes to the configuration.
    """
    if axis == "masters" and isinstance(value, int):
        return cfg, replace(workload, masters=tuple(range(value)))
    if axis.startswith("config."):
        return cfg.with_overrides(**{axis[len("config."):]: value}), workload
    key = axis[len("workload."):] if axis.startswith("workload.") else axis
    if axis.startswith("workload.") or key in WORKLOAD_KEYS:
        return cfg, workload_from_mapping({key: value}, workload)
    return cfg.with_overrides(**{axis: value}), workload


def sweep_point_seed(seed: int, axis: str, value) -> int:
    return derive_seed(seed, axis, str(value))


def _run_point(args):
    cfg, workload, axis, value, max_cycles = args
    seed = sweep_point_seed(workload.seed, axis, value)
    try:
        c, w = apply_axis(cfg, workload, axis, value)
        w = replace(w, seed=seed)
        return SweepPoint(axis, value, seed, run(c, w, max_cycles=max_cycles))
    except Exception as exc:  # per-point failures are reported, not raised
        return SweepPoint(axis, value, seed, None, f"{type(exc).__name__}: {exc}")


def sweep(cfg: SimConfig, workload: WorkloadSpec, axis: str, values, workers: int = 1,
          max_cycles: int | None = None) -> list[SweepPoint]:
    jobs = [(cfg, workload, axis, v, max_cycles) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_point, jobs))
    return [_run_point(j) for j in jobs]


def parse_axis(text: str):
    """``masters=1..16`` or ``outstanding_per_port=1,16`` -> (name, values)."""
    name, sep, rest = text.partition("=")
    if not sep or not rest:
        raise ValueError(f"bad axis {text!r}; expected name=values")
    values: list = []
    for part in rest.split(","):
        part = part.strip()
        a, dots, b = part.partition("..")
        if dots:
            values.extend(range(int(a, 0), int(b, 0) + 1))
        else:
            try:
                values.append(int(part, 0))
            except ValueError:
                values.append(part)
    return name.strip(), values

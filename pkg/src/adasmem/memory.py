"""SRAM arrays: per-array dispatch into logic banks and sub-banks, each
sub-bank with its own round-robin arbiter over per-master queues.

Sub-banks are visited only on memory-clock edges and only when they hold
work; ``tick`` visits due sub-banks in key order so results never depend
on insertion history.
"""

from __future__ import annotations

from collections import deque

from .config import SimConfig
from .protocol import Beat, IntegrityError


class SubBank:
    __slots__ = ("key", "cluster", "array", "bank", "subbank", "queues", "ptr",
                 "busy_until", "storage", "next_visit", "grants")

    def __init__(self, key: int, cluster: int, array: int, bank: int, subbank: int):
        self.key = key
        self.cluster = cluster
        self.array = array
        self.bank = bank
        self.subbank = subbank
        self.queues: dict[int, deque] = {}   # master -> deque of beats; only non-empty queues kept
        self.ptr = 0
        self.busy_until = 0
        self.storage: dict[int, bytes] | None = None
        self.next_visit: int | None = None
        self.grants = 0

    def queue_len(self, master: int) -> int:
        q = self.queues.get(master)
        return len(q) if q else 0

    def __lt__(self, other: "SubBank") -> bool:
        return self.key < other.key

    def __repr__(self):
        return f"SubBank(c{self.cluster} a{self.array} b{self.bank} s{self.subbank})"


def arbitrate_and_access(sb: SubBank, now: int, masters: int, ratio: int) -> tuple[Beat | None, int]:
    """Grant one eligible request round-robin and perform the access.

    Returns (beat, requesters) where requesters is how many masters had an
    eligible head at this edge. Reads pick up their payload and writes
    commit theirs at grant time, i.e. in service order.
    """
    if sb.busy_until > now:
        return None, 0
    best = None
    best_d = masters
    n = 0
    ptr = sb.ptr
    for m, q in sb.queues.items():
        if q[0].ready <= now:
            n += 1
            d = (m - ptr) % masters
            if d < best_d:
                best_d = d
                best = m
    if best is None:
        return None, 0
    q = sb.queues[best]
    beat = q.popleft()
    if not q:
        del sb.queues[best]
    sb.ptr = (best + 1) % masters
    sb.busy_until = now + ratio
    sb.grants += 1
    if beat.cmd.op == "W":
        if sb.storage is None:
            sb.storage = {}
        sb.storage[beat.row] = beat.payload
    else:
        beat.payload = sb.storage.get(beat.row) if sb.storage else None
    return beat, n


class SramArray:
    """One SRAM array: K banks x S sub-banks behind a dispatch stage."""

    def __init__(self, memory: "Memory", cluster: int, array: int):
        self.memory = memory
        self.cluster = cluster
        self.array = array

    def dispatch(self, beat: Beat) -> SubBank:
        if beat.cluster != self.cluster or beat.array != self.array:
            raise IntegrityError(f"{beat!r} routed to array ({self.cluster},{self.array})")
        return self.memory.enqueue(beat)


class Memory:
    def __init__(self, cfg: SimConfig, log=None):
        t = cfg.topology
        self.masters = t.masters
        self.n_arrays = t.arrays_per_cluster
        self.n_banks = t.banks_per_array
        self.n_sub = t.subbanks_per_bank
        self.ratio = cfg.timing.fabric_clock_per_mem_clock
        self.depth = cfg.timing.subbank_queue_depth
        self.access = cfg.timing.memory_access_fabric_cycles
        self.subbanks: dict[int, SubBank] = {}
        self.arrays = [[SramArray(self, c, a) for a in range(t.arrays_per_cluster)] for c in range(t.clusters)]
        self.wheel: dict[int, list[SubBank]] = {}
        self.conflicts = 0
        self.queued = 0
        self.ticks = 0
        self.commit_log: list[tuple[int, bytes]] | None = None
        self.log = log

    def key_of(self, cluster: int, array: int, bank: int, subbank: int) -> int:
        return ((cluster * self.n_arrays + array) * self.n_banks + bank) * self.n_sub + subbank

    def subbank(self, key: int) -> SubBank:
        sb = self.subbanks.get(key)
        if sb is None:
            s = key % self.n_sub
            rest = key // self.n_sub
            b = rest % self.n_banks
            rest //= self.n_banks
            sb = SubBank(key, rest // self.n_arrays, rest % self.n_arrays, b, s)
            self.subbanks[key] = sb
        return sb

    def has_space(self, key: int, master: int) -> bool:
        sb = self.subbanks.get(key)
        if sb is None:
            return True
        q = sb.queues.get(master)
        return q is None or len(q) < self.depth

    def edge_at_or_after(self, cycle: int) -> int:
        r = self.ratio
        return -(-cycle // r) * r

    def _schedule(self, sb: SubBank, edge: int) -> None:
        if sb.next_visit is None or edge < sb.next_visit:
            sb.next_visit = edge
            lst = self.wheel.get(edge)
            if lst is None:
                self.wheel[edge] = [sb]
            else:
                lst.append(sb)

    def enqueue(self, beat: Beat) -> SubBank:
        """Append ``beat`` to its master's queue; ``beat.ready`` is when it may be granted."""
        sb = self.subbank(beat.sb_key)
        m = beat.cmd.master
        q = sb.queues.get(m)
        if q is None:
            q = sb.queues[m] = deque()
        elif len(q) >= self.depth:
            raise IntegrityError(f"{sb!r}: queue for master {m} overflow")
        q.append(beat)
        self.queued += 1
        self._schedule(sb, self.edge_at_or_after(beat.ready))
        return sb

    def dispatch(self, beat: Beat) -> SubBank:
        return self.arrays[beat.cluster][beat.array].dispatch(beat)

    def next_edge(self) -> int | None:
        return min(self.wheel) if self.wheel else None

    def tick(self, now: int) -> list[Beat]:
        """One memory-clock edge. Returns granted beats; each completes
        ``access`` fabric cycles later."""
        self.ticks += 1
        due = self.wheel.pop(now, None)
        if not due:
            return []
        due.sort()
        done = []
        masters, ratio = self.masters, self.ratio
        for sb in due:
            if sb.next_visit != now:
                continue
            sb.next_visit = None
            beat, requesters = arbitrate_and_access(sb, now, masters, ratio)
            if beat is not None:
                self.queued -= 1
                if requesters > 1:
                    self.conflicts += 1
                if self.commit_log is not None and beat.cmd.op == "W":
                    self.commit_log.append((beat.address, beat.payload))
                if self.log:
                    self.log(f"{now} grant m{beat.cmd.master} #{beat.cmd.cmd_id}.{beat.index} {sb!r}")
                done.append(beat)
            if sb.queues:
                soonest = min(q[0].ready for q in sb.queues.values())
                self._schedule(sb, max(now + ratio, self.edge_at_or_after(soonest)))
        return done

    def image(self, addrmap) -> dict[int, bytes]:
        """Map of byte address -> stored beat for every written row."""
        from .addressing import Location

        out = {}
        for sb in self.subbanks.values():
            if not sb.storage:
                continue
            for row, data in sb.storage.items():
                addr = addrmap.compose(Location(sb.cluster, sb.array, sb.bank, sb.subbank, row, 0))
                out[addr] = data
        return out

    def dump_image(self, addrmap, path) -> None:
        """Binary image, offset = byte address; untouched bytes read as zero."""
        img = self.image(addrmap)
        with open(path, "wb") as fh:
            fh.truncate(addrmap.total_bytes)
            for addr in sorted(img):
                fh.seek(addr)
                fh.write(img[addr])

"""Master-port transaction model: credits, burst beats, reassembly."""

from __future__ import annotations

from dataclasses import dataclass

from .addressing import ProtocolError  # noqa: F401  (re-exported)

READ = "R"
WRITE = "W"


class IntegrityError(RuntimeError):
    """A simulator invariant was broken; indicates a model bug, not bad input."""


class Command:
    __slots__ = (
        "master", "op", "base", "beats", "cmd_id", "issue_cycle",
        "end", "returned", "n_done", "first_cycle", "done_cycle", "injected",
    )

    def __init__(self, master: int, op: str, base: int, beats: int, beat_bytes: int = 32):
        self.master = master
        self.op = op
        self.base = base
        self.beats = beats
        self.cmd_id = -1
        self.issue_cycle = -1
        self.returned = 0        # bitmap of returned (read) or committed (write) beats
        self.n_done = 0
        self.first_cycle = -1    # first read beat returned
        self.done_cycle = -1     # retire cycle
        self.injected = 0        # beats pushed into the fabric
        self.end = base + beats * beat_bytes

    @property
    def is_write(self) -> bool:
        return self.op == WRITE

    @property
    def parent(self) -> tuple[int, int]:
        return (self.master, self.cmd_id)

    def __repr__(self):
        return f"Command(m{self.master} #{self.cmd_id} {self.op} {self.base:#x} x{self.beats} @{self.issue_cycle})"


class Beat:
    """One single-beat fragment of a command travelling through the fabric."""

    __slots__ = (
        "cmd", "index", "address", "cluster", "array", "bank", "subbank", "row",
        "payload", "ready", "sb_key", "l2_key",
    )

    def __init__(self, cmd: Command, index: int, address: int, loc: tuple, payload: bytes | None = None):
        self.cmd = cmd
        self.index = index
        self.address = address
        self.cluster, self.array, self.bank, self.subbank, self.row = loc
        self.payload = payload
        self.ready = 0
        self.sb_key = -1
        self.l2_key = -1

    @property
    def master(self) -> int:
        return self.cmd.master

    @property
    def op(self) -> str:
        return self.cmd.op

    def __repr__(self):
        return f"Beat(m{self.cmd.master} #{self.cmd.cmd_id}.{self.index} {self.cmd.op} {self.address:#x})"


@dataclass(frozen=True)
class ReadReturn:
    parent: tuple[int, int]
    beat_index: int
    payload: bytes | None
    return_cycle: int


class PortState:
    """Credit and reassembly state of one master port.

    Read and write channels are independent (separate address channels),
    each limited to ``limit`` outstanding commands.
    """

    def __init__(self, master: int, limit: int):
        self.master = master
        self.limit = limit
        self.outstanding = {READ: 0, WRITE: 0}
        self.inflight: dict[int, Command] = {}
        self.next_id = 0
        self.completed: list[Command] = []
        self.read_data: dict[tuple[int, int], bytes] | None = None

    @property
    def pending_reassembly(self) -> dict[int, int]:
        return {cid: c.returned for cid, c in self.inflight.items() if c.op == READ}

    def total_outstanding(self) -> int:
        return self.outstanding[READ] + self.outstanding[WRITE]

    def hazard(self, cmd: Command) -> bool:
        """True if ``cmd`` overlaps an in-flight command and either one writes."""
        lo = cmd.base
        hi = cmd.end
        w = cmd.op == WRITE
        if not w and not self.outstanding[WRITE]:
            return False
        for other in self.inflight.values():
            if (w or other.op == WRITE) and other.base < hi and lo < other.end:
                return True
        return False

    def try_accept(self, cmd: Command, cycle: int) -> bool:
        if cmd.beats not in (1, 4, 8, 16):
            raise ProtocolError(f"master {self.master}: unsupported burst length {cmd.beats}")
        if self.outstanding[cmd.op] >= self.limit or self.hazard(cmd):
            return False
        cmd.cmd_id = self.next_id
        self.next_id += 1
        cmd.issue_cycle = cycle
        self.outstanding[cmd.op] += 1
        self.inflight[cmd.cmd_id] = cmd
        return True

    def _lookup(self, parent: tuple[int, int]) -> Command:
        master, cmd_id = parent
        cmd = self.inflight.get(cmd_id) if master == self.master else None
        if cmd is None:
            raise IntegrityError(f"port {self.master}: unknown parent {parent}")
        return cmd

    def _retire(self, cmd: Command, cycle: int) -> None:
        cmd.done_cycle = cycle
        del self.inflight[cmd.cmd_id]
        self.outstanding[cmd.op] -= 1
        self.completed.append(cmd)

    def record_return(self, ret: ReadReturn) -> bool:
        """Mark one returned read beat; True when the command completes."""
        return self.mark_read(self._lookup(ret.parent), ret.beat_index, ret.payload, ret.return_cycle)

    def mark_read(self, cmd: Command, index: int, payload: bytes | None, cycle: int) -> bool:
        bit = 1 << index
        if cmd.op != READ or index >= cmd.beats or cmd.returned & bit or cmd.done_cycle >= 0:
            raise IntegrityError(f"port {self.master}: duplicate or invalid return {cmd.parent}.{index}")
        cmd.returned |= bit
        cmd.n_done += 1
        if cmd.first_cycle < 0:
            cmd.first_cycle = cycle
        if self.read_data is not None:
            self.read_data[(cmd.cmd_id, index)] = payload
        if cmd.n_done == cmd.beats:
            self._retire(cmd, cycle)
            return True
        return False

    def record_write_ack(self, parent: tuple[int, int], cycle: int) -> bool:
        cmd = self._lookup(parent)
        if cmd.op != WRITE:
            raise IntegrityError(f"port {self.master}: write ack for read command {parent}")
        self._retire(cmd, cycle)
        return True

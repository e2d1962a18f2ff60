"""Request split network and response merge trees.

Every master owns its own path up to the sub-bank arbiters and its own
merge tree back. The request side is a shared 64-beat split buffer feeding
one lane per cluster (level-1 split) and one lane per (cluster, array)
(level-2 split). Each lane moves one beat per fabric cycle. The response
side merges arrays into clusters and clusters into the port with
round-robin nodes, one beat per cycle per node.

All queues hold beats stamped with the cycle at which they become visible
to the next stage, so per-segment pipeline depth is exact and a lane or
node is only visited when its head can move.
"""

from __future__ import annotations

from collections import deque

from .config import SimConfig
from .memory import Memory
from .protocol import Beat, Command


class L2Lane:
    __slots__ = ("master", "cluster", "array", "q", "next_visit", "path")

    def __init__(self, path: "RequestPath", cluster: int, array: int):
        self.path = path
        self.master = path.master
        self.cluster = cluster
        self.array = array
        self.q: deque[Beat] = deque()
        self.next_visit: int | None = None


class RequestPath:
    """Split buffer and split lanes of one master."""

    def __init__(self, master: int, clusters: int, arrays: int, capacity: int):
        self.master = master
        self.capacity = capacity
        self.occupancy = 0
        self.peak = 0
        self.l1_last = [-1] * clusters
        self.lanes = [L2Lane(self, c, a) for c in range(clusters) for a in range(arrays)]
        self.accepted = 0
        self.dispatched = 0

    def free(self) -> int:
        return self.capacity - self.occupancy


class MergeNode:
    """Round-robin merge of ``fan_in`` lossless input queues, one grant per cycle."""

    __slots__ = ("inputs", "ptr", "next_visit", "master", "cluster", "grants")

    def __init__(self, fan_in: int, master: int, cluster: int = -1):
        self.inputs = [deque() for _ in range(fan_in)]
        self.ptr = 0
        self.next_visit: int | None = None
        self.master = master
        self.cluster = cluster   # -1 for the top (cluster-level) node
        self.grants = 0

    def grant(self, now: int) -> Beat | None:
        inputs = self.inputs
        n = len(inputs)
        p = self.ptr
        for i in range(n):
            j = p + i
            if j >= n:
                j -= n
            q = inputs[j]
            if q and q[0].ready <= now:
                self.ptr = j + 1 if j + 1 < n else 0
                self.grants += 1
                return q.popleft()
        return None

    def soonest(self) -> int | None:
        best = None
        for q in self.inputs:
            if q:
                r = q[0].ready
                if best is None or r < best:
                    best = r
        return best

    def pending(self) -> int:
        return sum(len(q) for q in self.inputs)


class ResponseTree:
    def __init__(self, master: int, clusters: int, arrays: int):
        self.master = master
        self.array_nodes = [MergeNode(arrays, master, c) for c in range(clusters)]
        self.top = MergeNode(clusters, master)


class Fabric:
    def __init__(self, cfg: SimConfig, memory: Memory, log=None):
        t, tm = cfg.topology, cfg.timing
        self.cfg = cfg
        self.memory = memory
        self.log = log
        self.n_arrays = t.arrays_per_cluster
        self.d_ingress, self.d_l1, self.d_l2 = tm.request_segments
        self.e_bank, self.e_array, self.e_top = tm.response_segments
        self.access = tm.memory_access_fabric_cycles
        self.response_stages = tm.response_path_stages
        self.paths = [RequestPath(m, t.clusters, t.arrays_per_cluster, tm.split_buffer_beats)
                      for m in range(t.masters)]
        self.trees = [ResponseTree(m, t.clusters, t.arrays_per_cluster) for m in range(t.masters)]
        self.req_wheel: dict[int, list[L2Lane]] = {}
        self.resp_wheel: dict[int, list[MergeNode]] = {}
        self.deliver_wheel: dict[int, list] = {}
        self.request_inflight = 0    # beats in split buffers
        self.response_inflight = 0   # read beats between bank and port
        self.acks_pending = 0
        self.peak_occupancy = 0

    # ---- request side -------------------------------------------------

    def _schedule_lane(self, lane: L2Lane, cycle: int) -> None:
        if lane.next_visit is None or cycle < lane.next_visit:
            lane.next_visit = cycle
            lst = self.req_wheel.get(cycle)
            if lst is None:
                self.req_wheel[cycle] = [lane]
            else:
                lst.append(lane)

    def inject_beats(self, master: int, beats, cycle: int) -> int:
        """Push beats (in order) into the master's split buffer; returns how
        many fit. The rest must be offered again on a later cycle."""
        path = self.paths[master]
        room = path.capacity - path.occupancy
        n = 0
        d_in, d_l1 = self.d_ingress, self.d_l1
        l1_last = path.l1_last
        lanes = path.lanes
        for beat in beats:
            if n >= room:
                break
            c = beat.cluster
            # level-1 lane: FIFO, one beat per cycle, no backpressure from level 2
            dep = cycle + d_in
            if dep <= l1_last[c]:
                dep = l1_last[c] + 1
            l1_last[c] = dep
            beat.ready = dep + d_l1
            lane = lanes[beat.l2_key]
            if not lane.q:
                self._schedule_lane(lane, beat.ready)
            lane.q.append(beat)
            n += 1
        if n:
            path.occupancy += n
            path.accepted += n
            self.request_inflight += n
            if path.occupancy > path.peak:
                path.peak = path.occupancy
                if path.peak > self.peak_occupancy:
                    self.peak_occupancy = path.peak
            if self.log:
                self.log(f"{cycle} inject m{master} {n} beats occ={path.occupancy}")
        return n

    def tick_request(self, now: int) -> list[Beat]:
        """Advance level-2 lanes; returns beats handed to sub-bank queues."""
        due = self.req_wheel.pop(now, None)
        if not due:
            return []
        moved = []
        memory = self.memory
        d_l2 = self.d_l2
        for lane in due:
            if lane.next_visit != now:
                continue
            lane.next_visit = None
            q = lane.q
            head = q[0]
            if head.ready > now:
                self._schedule_lane(lane, head.ready)
                continue
            if not memory.has_space(head.sb_key, lane.master):
                # sub-bank queue full: retry after the next memory edge frees a slot
                self._schedule_lane(lane, memory.edge_at_or_after(now + 1))
                continue
            q.popleft()
            path = lane.path
            path.occupancy -= 1
            path.dispatched += 1
            self.request_inflight -= 1
            head.ready = now + d_l2
            memory.dispatch(head)
            if self.log:
                self.log(f"{now} dispatch m{lane.master} #{head.cmd.cmd_id}.{head.index} "
                         f"-> c{head.cluster} a{head.array} b{head.bank} s{head.subbank}")
            moved.append(head)
            if q:
                nxt = q[0].ready
                self._schedule_lane(lane, nxt if nxt > now else now + 1)
        return moved

    # ---- response side ------------------------------------------------

    def _schedule_node(self, node: MergeNode, cycle: int) -> None:
        if node.next_visit is None or cycle < node.next_visit:
            node.next_visit = cycle
            lst = self.resp_wheel.get(cycle)
            if lst is None:
                self.resp_wheel[cycle] = [node]
            else:
                lst.append(node)

    def accept_completion(self, beat: Beat, completed: int) -> None:
        """A read beat finished its bank access at ``completed``."""
        node = self.trees[beat.cmd.master].array_nodes[beat.cluster]
        beat.ready = completed + self.e_bank
        q = node.inputs[beat.array]
        q.append(beat)
        self.response_inflight += 1
        self._schedule_node(node, beat.ready)

    def schedule_ack(self, cmd: Command, completed: int) -> None:
        """Write acknowledgment travels the response path after the last commit."""
        at = completed + self.response_stages
        self.acks_pending += 1
        lst = self.deliver_wheel.get(at)
        if lst is None:
            self.deliver_wheel[at] = [cmd]
        else:
            lst.append(cmd)

    def tick_response(self, now: int) -> list:
        """Returns this cycle's deliveries to ports: Beat objects for read
        data (at most one per master) and Command objects for write acks."""
        delivered = self.deliver_wheel.pop(now, None) or []
        for item in delivered:
            if type(item) is Beat:
                self.response_inflight -= 1
            else:
                self.acks_pending -= 1
        due = self.resp_wheel.pop(now, None)
        if due:
            e_array, e_top = self.e_array, self.e_top
            for node in due:
                if node.next_visit != now:
                    continue
                node.next_visit = None
                beat = node.grant(now)
                if beat is not None:
                    if node.cluster >= 0:
                        beat.ready = now + e_array
                        top = self.trees[node.master].top
                        top.inputs[node.cluster].append(beat)
                        self._schedule_node(top, beat.ready)
                    else:
                        at = now + e_top
                        lst = self.deliver_wheel.get(at)
                        if lst is None:
                            self.deliver_wheel[at] = [beat]
                        else:
                            lst.append(beat)
                    if self.log:
                        lvl = f"c{node.cluster}" if node.cluster >= 0 else "top"
                        self.log(f"{now} merge-{lvl} m{node.master} #{beat.cmd.cmd_id}.{beat.index}")
                nxt = node.soonest()
                if nxt is not None:
                    self._schedule_node(node, nxt if nxt > now else now + 1)
        return delivered

    def idle(self) -> bool:
        return not (self.request_inflight or self.response_inflight or self.acks_pending)

"""Split-and-dispatch address decomposition.

Consecutive beats of a burst land in consecutive clusters first, then in
consecutive arrays inside each cluster, so an aligned burst-4 touches all
four clusters and an aligned burst-16 touches every (cluster, array) pair
exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .config import BURST_LENGTHS, AddressGeometry, InterleaveScheme, TopologyConfig, derive_geometry


class AddressError(ValueError):
    pass


class AlignmentError(AddressError):
    pass


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class Location:
    cluster: int
    array: int
    bank: int
    subbank: int
    row: int
    beat_offset: int = 0


@dataclass(frozen=True)
class LocatedBeat:
    beat_index: int
    address: int
    location: Location


def fold_xor(value: int, width: int) -> int:
    """XOR-fold ``value`` into ``width`` bits."""
    if width == 0:
        return 0
    mask = (1 << width) - 1
    out = 0
    while value:
        out ^= value & mask
        value >>= width
    return out


class AddressMap:
    """Precomputed shifts and masks for one (geometry, scheme) pair.

    The module-level functions are thin wrappers; the simulator calls the
    methods directly on the hot path.
    """

    def __init__(self, topo: TopologyConfig, scheme: InterleaveScheme | None = None):
        scheme = scheme or InterleaveScheme()
        scheme.validate_against(topo)
        self.topo = topo
        self.scheme = scheme
        self.geometry = g = derive_geometry(topo)
        self.total_bytes = topo.total_bytes
        self.beat_bytes = topo.beat_bytes
        self._off_mask = g.beat_offset.mask
        self._cl_sh, self._cl_mask = g.cluster.lo, g.cluster.mask
        self._ar_sh, self._ar_mask = g.array.lo, g.array.mask
        self._bk_sh, self._bk_mask = g.bank.lo, g.bank.mask
        self._row_sh, self._row_mask = g.row.lo, g.row.mask
        self._sb_sh, self._sb_mask = g.subbank.lo, g.subbank.mask
        self._ar_width = g.array.width
        self.hashed = scheme.scheme_kind == "xor-fold" and g.array.width > 0
        if scheme.hash_source_bits is None:
            self._h_sh, self._h_mask = g.row.lo, g.row.mask
        else:
            lo, hi = scheme.hash_source_bits
            self._h_sh, self._h_mask = lo, (1 << (hi - lo + 1)) - 1

    def _hash(self, address: int) -> int:
        return fold_xor((address >> self._h_sh) & self._h_mask, self._ar_width)

    def decompose(self, address: int) -> Location:
        if not 0 <= address < self.total_bytes:
            raise AddressError(f"address {address:#x} outside [0, {self.total_bytes:#x})")
        array = (address >> self._ar_sh) & self._ar_mask
        if self.hashed:
            array ^= self._hash(address)
        return Location(
            cluster=(address >> self._cl_sh) & self._cl_mask,
            array=array,
            bank=(address >> self._bk_sh) & self._bk_mask,
            subbank=(address >> self._sb_sh) & self._sb_mask,
            row=(address >> self._row_sh) & self._row_mask,
            beat_offset=address & self._off_mask,
        )

    def compose(self, loc: Location) -> int:
        t = self.topo
        checks = (
            ("cluster", loc.cluster, t.clusters),
            ("array", loc.array, t.arrays_per_cluster),
            ("bank", loc.bank, t.banks_per_array),
            ("subbank", loc.subbank, t.subbanks_per_bank),
            ("row", loc.row, t.rows_per_subbank),
            ("beat_offset", loc.beat_offset, t.beat_bytes),
        )
        for name, v, n in checks:
            if not 0 <= v < n:
                raise AddressError(f"{name}={v} outside [0, {n})")
        addr = (
            loc.beat_offset
            | loc.cluster << self._cl_sh
            | loc.bank << self._bk_sh
            | loc.row << self._row_sh
            | loc.subbank << self._sb_sh
        )
        array = loc.array
        if self.hashed:
            # hash bits never overlap the array field, so they are known already
            array ^= self._hash(addr)
        return addr | array << self._ar_sh

    def locate_fast(self, address: int) -> tuple[int, int, int, int, int]:
        """(cluster, array, bank, subbank, row) without validation."""
        array = (address >> self._ar_sh) & self._ar_mask
        if self.hashed:
            array ^= self._hash(address)
        return (
            (address >> self._cl_sh) & self._cl_mask,
            array,
            (address >> self._bk_sh) & self._bk_mask,
            (address >> self._sb_sh) & self._sb_mask,
            (address >> self._row_sh) & self._row_mask,
        )

    def check_burst(self, base: int, beats: int) -> None:
        if beats not in BURST_LENGTHS:
            raise ProtocolError(f"unsupported burst length {beats}; allowed {BURST_LENGTHS}")
        if base % self.beat_bytes:
            raise AlignmentError(f"base {base:#x} is not {self.beat_bytes}-byte aligned")
        if base < 0 or base + beats * self.beat_bytes > self.total_bytes:
            raise AddressError(f"burst {base:#x}+{beats} beats crosses the end of memory")

    def expand_burst(self, base: int, beats: int) -> list[LocatedBeat]:
        self.check_burst(base, beats)
        bb = self.beat_bytes
        return [LocatedBeat(i, base + i * bb, self.decompose(base + i * bb)) for i in range(beats)]


@lru_cache(maxsize=32)
def _map_for(topo: TopologyConfig, scheme: InterleaveScheme) -> AddressMap:
    return AddressMap(topo, scheme)


def address_map(geometry_or_topo, scheme: InterleaveScheme | None = None) -> AddressMap:
    if isinstance(geometry_or_topo, AddressMap):
        return geometry_or_topo
    if isinstance(geometry_or_topo, AddressGeometry):
        raise TypeError("pass the TopologyConfig (the geometry is derived from it)")
    return _map_for(geometry_or_topo, scheme or InterleaveScheme())


def decompose(address: int, topo: TopologyConfig, scheme: InterleaveScheme | None = None) -> Location:
    return address_map(topo, scheme).decompose(address)


def compose(location: Location, topo: TopologyConfig, scheme: InterleaveScheme | None = None) -> int:
    return address_map(topo, scheme).compose(location)


def expand_burst(base: int, beats: int, topo: TopologyConfig, scheme: InterleaveScheme | None = None) -> list[LocatedBeat]:
    return address_map(topo, scheme).expand_burst(base, beats)


def format_location(address: int, loc: Location) -> str:
    return (
        f"{address:#x}: cluster={loc.cluster} array={loc.array} bank={loc.bank} "
        f"subbank={loc.subbank} row={loc.row} offset={loc.beat_offset}"
    )

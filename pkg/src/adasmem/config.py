"""Architecture and timing parameters for the shared-memory model.

Defaults reproduce the 32 MiB prototype: 16 masters with 256-bit ports,
4 clusters of 4 SRAM arrays, 16 logic banks per array, 8 outstanding
commands per port, a 64-beat split buffer, and a 1 GHz fabric over
500 MHz memories.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, fields, replace

KIB = 1024
MIB = 1024 * 1024

MAX_BURST = 16
BURST_LENGTHS = (1, 4, 8, 16)


class ConfigError(ValueError):
    """Base class for configuration problems."""


class ConfigParseError(ConfigError):
    def __init__(self, key: str, message: str, line: int | None = None):
        self.key = key
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{key}: {message}")


class ConfigValidationError(ConfigError):
    def __init__(self, invariant: str, message: str):
        self.invariant = invariant
        super().__init__(f"{invariant}: {message}")


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def log2(n: int) -> int:
    return n.bit_length() - 1


@dataclass(frozen=True)
class TopologyConfig:
    masters: int = 16
    clusters: int = 4
    arrays_per_cluster: int = 4
    banks_per_array: int = 16
    subbanks_per_bank: int = 4
    beat_bytes: int = 32
    total_bytes: int = 32 * MIB

    def __post_init__(self):
        for name in ("masters", "clusters", "arrays_per_cluster", "banks_per_array", "subbanks_per_bank"):
            v = getattr(self, name)
            if not isinstance(v, int) or not is_pow2(v):
                raise ConfigValidationError("power_of_two", f"{name}={v!r} must be a power of two >= 1")
        if not is_pow2(self.beat_bytes):
            raise ConfigValidationError("power_of_two", f"beat_bytes={self.beat_bytes!r} must be a power of two")
        unit = self.locations * self.beat_bytes
        if self.total_bytes <= 0 or self.total_bytes % unit:
            raise ConfigValidationError(
                "divisible_capacity",
                f"total_bytes={self.total_bytes} not divisible by {unit} "
                "(clusters*arrays*banks*subbanks*beat_bytes)",
            )
        if not is_pow2(self.total_bytes):
            raise ConfigValidationError("power_of_two", f"total_bytes={self.total_bytes} must be a power of two")
        if self.rows_per_subbank < 1:
            raise ConfigValidationError("rows_per_subbank", "derived row count per sub-bank must be >= 1")

    @property
    def locations(self) -> int:
        """Number of distinct (cluster, array, bank, sub-bank) slots."""
        return self.clusters * self.arrays_per_cluster * self.banks_per_array * self.subbanks_per_bank

    @property
    def arrays(self) -> int:
        return self.clusters * self.arrays_per_cluster

    @property
    def rows_per_subbank(self) -> int:
        return self.total_bytes // (self.locations * self.beat_bytes)


@dataclass(frozen=True)
class TimingConfig:
    fabric_clock_per_mem_clock: int = 2
    request_path_stages: int = 12
    memory_access_mem_cycles: int = 2
    response_path_stages: int = 16
    outstanding_per_port: int = 8
    split_buffer_beats: int = 64
    subbank_queue_depth: int = 4

    def __post_init__(self):
        if self.fabric_clock_per_mem_clock < 1:
            raise ConfigValidationError("clock_ratio", "fabric_clock_per_mem_clock must be >= 1")
        # every segment of the request/response pipelines needs at least one cycle
        if self.request_path_stages < 3:
            raise ConfigValidationError("request_path_stages", "request path needs >= 3 stages")
        if self.response_path_stages < 3:
            raise ConfigValidationError("response_path_stages", "response path needs >= 3 stages")
        if self.memory_access_mem_cycles < 1:
            raise ConfigValidationError("memory_access", "memory_access_mem_cycles must be >= 1")
        if self.outstanding_per_port < 1:
            raise ConfigValidationError("outstanding", "outstanding_per_port must be >= 1")
        if self.split_buffer_beats < MAX_BURST:
            raise ConfigValidationError(
                "split_buffer", f"split_buffer_beats must hold the largest burst ({MAX_BURST})"
            )
        if self.subbank_queue_depth < 1:
            raise ConfigValidationError("subbank_queue_depth", "subbank_queue_depth must be >= 1")

    @property
    def memory_access_fabric_cycles(self) -> int:
        return self.memory_access_mem_cycles * self.fabric_clock_per_mem_clock

    @property
    def zero_load_read_latency(self) -> int:
        return self.request_path_stages + self.memory_access_fabric_cycles + self.response_path_stages

    # Per-segment split of the pipelines. Each segment is >= 1 cycle.
    @property
    def request_segments(self) -> tuple[int, int, int]:
        """(ingress -> L1 split, L1 -> L2 split, L2 -> sub-bank queue)."""
        hop = self.request_path_stages // 3
        return self.request_path_stages - 2 * hop, hop, hop

    @property
    def response_segments(self) -> tuple[int, int, int]:
        """(bank -> array merge, array merge -> cluster merge, cluster merge -> port)."""
        hop = self.response_path_stages // 3
        return self.response_path_stages - 2 * hop, hop, hop


SCHEMES = ("identity", "xor-fold")


@dataclass(frozen=True)
class InterleaveScheme:
    scheme_kind: str = "identity"
    # inclusive bit range [lo, hi]; None means "the row field"
    hash_source_bits: tuple[int, int] | None = None

    def __post_init__(self):
        if self.scheme_kind not in SCHEMES:
            raise ConfigValidationError("scheme_kind", f"unknown scheme {self.scheme_kind!r}; choose from {SCHEMES}")
        if self.hash_source_bits is not None:
            lo, hi = self.hash_source_bits
            if lo > hi or lo < 0:
                raise ConfigValidationError("hash_source_bits", f"bad bit range {lo}:{hi}")

    def validate_against(self, topo: TopologyConfig) -> None:
        if self.hash_source_bits is None:
            return
        lo, hi = self.hash_source_bits
        burst_bits = log2(MAX_BURST * topo.beat_bytes)
        select_top = log2(topo.beat_bytes * topo.clusters * topo.arrays_per_cluster)
        floor = max(burst_bits, select_top)
        if lo < floor:
            raise ConfigValidationError(
                "hash_above_burst",
                f"hash_source_bits start at {lo}; must be >= {floor} so the hash is constant across a burst",
            )
        if hi >= log2(topo.total_bytes):
            raise ConfigValidationError("hash_source_bits", f"bit {hi} is outside the address space")


@dataclass(frozen=True)
class SimConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    scheme: InterleaveScheme = field(default_factory=InterleaveScheme)

    def __post_init__(self):
        self.scheme.validate_against(self.topology)

    def to_dict(self) -> dict:
        d = {}
        d.update(asdict(self.topology))
        d.update(asdict(self.timing))
        d["scheme_kind"] = self.scheme.scheme_kind
        bits = self.scheme.hash_source_bits
        d["hash_source_bits"] = None if bits is None else f"{bits[0]}:{bits[1]}"
        return d

    def with_overrides(self, **kw) -> "SimConfig":
        """Return a copy with flat field overrides (same keys as the config file)."""
        topo_kw, timing_kw, scheme_kw = {}, {}, {}
        for k, v in kw.items():
            if k in TOPOLOGY_KEYS:
                topo_kw[k] = v
            elif k in TIMING_KEYS:
                timing_kw[k] = v
            elif k in SCHEME_KEYS:
                scheme_kw[k] = v
            else:
                raise ConfigParseError(k, "unknown configuration key")
        return SimConfig(
            replace(self.topology, **topo_kw),
            replace(self.timing, **timing_kw),
            replace(self.scheme, **scheme_kw),
        )


TOPOLOGY_KEYS = tuple(f.name for f in fields(TopologyConfig))
TIMING_KEYS = tuple(f.name for f in fields(TimingConfig))
SCHEME_KEYS = tuple(f.name for f in fields(InterleaveScheme))
SIZE_KEYS = {"beat_bytes", "total_bytes"}

_SIZE_RE = re.compile(r"^(\d+)\s*(B|KiB|MiB|GiB)?$")
_SUFFIX = {None: 1, "B": 1, "KiB": KIB, "MiB": MIB, "GiB": 1024 * MIB}


def parse_size(text: str) -> int:
    """Parse ``4096``, ``4 KiB`` or ``32MiB`` into bytes."""
    m = _SIZE_RE.match(text.strip())
    if not m:
        raise ValueError(f"bad size {text!r}")
    return int(m.group(1)) * _SUFFIX[m.group(2)]


def parse_int(text: str) -> int:
    return int(text.strip(), 0)


def parse_bit_range(text: str) -> tuple[int, int] | None:
    text = text.strip()
    if text.lower() in ("", "none", "row"):
        return None
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"bad bit range {text!r}, expected lo:hi")
    a, b = int(lo), int(hi)
    return (min(a, b), max(a, b))


def convert_value(key: str, raw: str):
    """Convert a raw string for a known config key; raises ValueError."""
    if key in SIZE_KEYS:
        return parse_size(raw)
    if key == "scheme_kind":
        return raw.strip()
    if key == "hash_source_bits":
        return parse_bit_range(raw)
    return parse_int(raw)


@dataclass(frozen=True)
class ConfigDocument:
    config: SimConfig
    workload: dict[str, str]


def parse_config_document(text: str) -> ConfigDocument:
    """Parse the key = value format. ``workload.*`` keys are kept as raw strings."""
    values: dict[str, object] = {}
    workload: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigParseError(key or line, "expected 'key = value'", lineno)
        raw = raw.strip()
        if key.startswith("workload."):
            workload[key[len("workload."):]] = raw
            continue
        if key not in TOPOLOGY_KEYS + TIMING_KEYS + SCHEME_KEYS:
            raise ConfigParseError(key, "unknown configuration key", lineno)
        if key in values:
            raise ConfigParseError(key, "duplicate key", lineno)
        try:
            values[key] = convert_value(key, raw)
        except ValueError as exc:
            raise ConfigParseError(key, str(exc), lineno) from None
    topo = TopologyConfig(**{k: v for k, v in values.items() if k in TOPOLOGY_KEYS})
    timing = TimingConfig(**{k: v for k, v in values.items() if k in TIMING_KEYS})
    scheme = InterleaveScheme(**{k: v for k, v in values.items() if k in SCHEME_KEYS})
    return ConfigDocument(SimConfig(topo, timing, scheme), workload)


def parse_config(text: str) -> tuple[TopologyConfig, TimingConfig, InterleaveScheme]:
    cfg = parse_config_document(text).config
    return cfg.topology, cfg.timing, cfg.scheme


def load_config(path) -> ConfigDocument:
    with open(path, encoding="utf-8") as fh:
        return parse_config_document(fh.read())


@dataclass(frozen=True)
class Field:
    lo: int
    width: int

    @property
    def hi(self) -> int:
        return self.lo + self.width - 1

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1


@dataclass(frozen=True)
class AddressGeometry:
    """Bit fields of a byte address, low to high:
    beat offset, cluster, array, bank, row, sub-bank."""

    beat_offset: Field
    cluster: Field
    array: Field
    bank: Field
    row: Field
    subbank: Field

    ORDER = ("beat_offset", "cluster", "array", "bank", "row", "subbank")

    @property
    def address_bits(self) -> int:
        return sum(getattr(self, n).width for n in self.ORDER)

    def fields(self) -> list[tuple[str, Field]]:
        return [(n, getattr(self, n)) for n in self.ORDER]


def derive_geometry(topo: TopologyConfig) -> AddressGeometry:
    widths = [
        log2(topo.beat_bytes),
        log2(topo.clusters),
        log2(topo.arrays_per_cluster),
        log2(topo.banks_per_array),
        log2(topo.rows_per_subbank),
        log2(topo.subbanks_per_bank),
    ]
    out = []
    lo = 0
    for w in widths:
        out.append(Field(lo, w))
        lo += w
    return AddressGeometry(*out)

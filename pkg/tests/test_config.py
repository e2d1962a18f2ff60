import pytest
from hypothesis import given, strategies as st

from adasmem.config import (
    ConfigParseError, ConfigValidationError, InterleaveScheme, SimConfig, TimingConfig, TopologyConfig,
    derive_geometry, load_config, parse_config, parse_config_document, parse_size,
)

import oracles
from conftest import REPO


def test_empty_document_gives_prototype():
    topo, timing, scheme = parse_config("")
    assert (topo.masters, topo.clusters, topo.arrays_per_cluster) == (16, 4, 4)
    assert (topo.banks_per_array, topo.subbanks_per_bank) == (16, 4)
    assert topo.beat_bytes == 32 and topo.total_bytes == 32 * 1024 * 1024
    assert timing.fabric_clock_per_mem_clock == 2
    assert timing.outstanding_per_port == 8
    assert timing.split_buffer_beats == 64
    assert scheme.scheme_kind == "identity"


def test_masters_one_only_changes_masters():
    topo, timing, _ = parse_config("masters = 1\n")
    assert topo == TopologyConfig(masters=1)
    assert timing == TimingConfig()


def test_rows_per_subbank_hand_arithmetic():
    topo = TopologyConfig()
    assert topo.rows_per_subbank == 2 ** 25 // (4 * 4 * 16 * 4 * 32) == 1024


def test_zero_load_latency_default_is_32():
    t = TimingConfig()
    assert t.zero_load_read_latency == 12 + 2 * 2 + 16 == 32
    assert sum(t.request_segments) == 12
    assert sum(t.response_segments) == 16


def test_checked_in_prototype_config_matches_defaults():
    doc = load_config(REPO / "configs" / "prototype.cfg")
    assert doc.config == SimConfig()
    assert doc.workload == {}


def test_sizes_and_comments():
    topo, _, _ = parse_config("total_bytes = 16MiB  # half\nbeat_bytes=64 B\n")
    assert topo.total_bytes == 16 * 1024 * 1024
    assert topo.beat_bytes == 64
    assert parse_size("4 KiB") == 4096
    with pytest.raises(ValueError):
        parse_size("4 kb")


def test_unknown_key_is_named():
    with pytest.raises(ConfigParseError) as e:
        parse_config("masters = 16\nmastres = 4\n")
    assert e.value.key == "mastres" and e.value.line == 2


def test_duplicate_and_malformed_lines():
    with pytest.raises(ConfigParseError):
        parse_config("masters = 16\nmasters = 8\n")
    with pytest.raises(ConfigParseError):
        parse_config("masters 16\n")
    with pytest.raises(ConfigParseError) as e:
        parse_config("clusters = four\n")
    assert e.value.key == "clusters"


@pytest.mark.parametrize("text,invariant", [
    ("clusters = 3", "power_of_two"),
    ("beat_bytes = 24", "power_of_two"),
    ("split_buffer_beats = 8", "split_buffer"),
    ("outstanding_per_port = 0", "outstanding"),
    ("request_path_stages = 2", "request_path_stages"),
])
def test_validation_names_invariant(text, invariant):
    with pytest.raises(ConfigValidationError) as e:
        parse_config(text)
    assert e.value.invariant == invariant
    assert text.split()[0] in str(e.value)


def test_workload_keys_kept_raw():
    doc = parse_config_document("workload.kind = bulk\nworkload.payload_bytes = 8KiB\n")
    assert doc.workload == {"kind": "bulk", "payload_bytes": "8KiB"}


def test_hash_bits_must_sit_above_burst():
    with pytest.raises(ConfigValidationError):
        SimConfig(scheme=InterleaveScheme("xor-fold", (5, 12)))
    SimConfig(scheme=InterleaveScheme("xor-fold", (13, 22)))


def test_geometry_default_fields():
    g = derive_geometry(TopologyConfig())
    got = {name: (f.lo, f.hi) for name, f in g.fields()}
    assert got == {"beat_offset": (0, 4), "cluster": (5, 6), "array": (7, 8), "bank": (9, 12),
                   "row": (13, 22), "subbank": (23, 24)}
    assert got == oracles.field_layout(TopologyConfig())
    assert g.address_bits == 25


def test_geometry_degenerate_single_field():
    topo = TopologyConfig(masters=1, clusters=1, arrays_per_cluster=1, banks_per_array=1,
                          subbanks_per_bank=1, total_bytes=32 * 1024)
    g = derive_geometry(topo)
    assert (g.beat_offset.lo, g.beat_offset.hi) == (0, 4)
    assert (g.row.lo, g.row.hi) == (5, 14)
    for name in ("cluster", "array", "bank", "subbank"):
        assert getattr(g, name).width == 0


def test_geometry_64_byte_beats():
    g = derive_geometry(TopologyConfig(beat_bytes=64))
    assert (g.beat_offset.lo, g.beat_offset.hi) == (0, 5)
    assert (g.cluster.lo, g.cluster.hi) == (6, 7)


pow2 = st.sampled_from([1, 2, 4, 8, 16])


@given(m=pow2, n=pow2, k=pow2, s=pow2, bb=st.sampled_from([8, 16, 32, 64]), extra=st.integers(0, 4))
def test_geometry_partitions_address_bits(m, n, k, s, bb, extra):
    total = m * n * k * s * bb * (1 << extra)
    topo = TopologyConfig(masters=4, clusters=m, arrays_per_cluster=n, banks_per_array=k,
                          subbanks_per_bank=s, beat_bytes=bb, total_bytes=total)
    g = derive_geometry(topo)
    covered = []
    for _, f in g.fields():
        covered.extend(range(f.lo, f.lo + f.width))
    assert sorted(covered) == list(range(total.bit_length() - 1))
    assert {name: (f.lo, f.hi) for name, f in g.fields()} == oracles.field_layout(topo)


def test_with_overrides_and_unknown():
    c = SimConfig().with_overrides(outstanding_per_port=16, scheme_kind="xor-fold")
    assert c.timing.outstanding_per_port == 16 and c.scheme.scheme_kind == "xor-fold"
    with pytest.raises(ConfigParseError):
        SimConfig().with_overrides(nope=1)


def test_configs_are_immutable_and_hashable():
    c = SimConfig()
    with pytest.raises(Exception):
        c.topology.masters = 3
    assert hash(c) == hash(SimConfig())

import json
import math

import pytest
from hypothesis import given, strategies as st

from adasmem import SimConfig, WorkloadSpec, run
from adasmem.engine import Simulator
from adasmem.metrics import (
    CSV_COLUMNS, HIST_BUCKETS, AuditSetupError, RunReport, finalize, hist_bucket, hist_edges, isolation_audit,
    little_ratio, pooled_std, port_report,
)
from adasmem.protocol import IntegrityError

import oracles


@given(st.integers(0, 200_000))
def test_hist_bucket_matches_float_reference(latency):
    assert hist_bucket(latency) == oracles.histogram_bucket(latency)


def test_hist_edges():
    e = hist_edges()
    assert len(e) == HIST_BUCKETS + 1
    assert e[0] == 1 and e[-1] == 65536
    assert hist_bucket(32) == 10 and hist_bucket(47) == 11 and hist_bucket(45) == 10


def small_run(**kw):
    spec = dict(kind="uniform", masters=(0, 1), transactions=40)
    spec.update(kw)
    sim = Simulator(SimConfig(), WorkloadSpec(**spec))
    return sim, sim.run()


def test_report_json_round_trip_is_byte_identical():
    _, rec = small_run()
    rep = finalize(rec)
    text = rep.to_json()
    assert RunReport.from_json(text).to_json() == text
    assert RunReport.from_json(text) == rep


def test_csv_header_order_is_fixed():
    rep = finalize(small_run()[1])
    header = rep.to_csv().splitlines()[0].split(",")
    assert header == CSV_COLUMNS
    assert header[:6] == ["master", "active", "window_start", "window_end", "read_throughput", "write_throughput"]
    assert "read_latency_hist" not in header
    assert len(rep.to_csv().splitlines()) == 17


def test_idle_port_is_empty():
    rep = finalize(small_run()[1])
    p = rep.ports[5]
    assert not p.active
    assert p.read_throughput == 0 and p.write_throughput == 0
    assert p.avg_read_latency is None and p.reads_completed == 0
    assert sum(p.read_latency_hist) == 0


def test_port_invariants():
    rep = finalize(small_run()[1], window=(0, 10**6))
    for p in rep.active_ports():
        assert 0 <= p.read_throughput <= 1 and 0 <= p.write_throughput <= 1
        assert p.min_read_latency <= p.avg_read_latency <= p.max_read_latency
        assert p.min_write_latency <= p.avg_write_latency <= p.max_write_latency
        assert p.read_beats == p.read_beats_returned
        assert sum(p.read_latency_hist) == p.reads_completed


def test_throughput_counts_window_beats():
    sim, rec = small_run(masters=(0,), ops="read", transactions=4)
    p = port_report(rec.ports[0], 0, rec.total_cycles)
    assert p.read_throughput == 64 / rec.total_cycles


def test_finalize_rejects_undrained():
    sim = Simulator(SimConfig(), WorkloadSpec(masters=(0,), transactions=10))
    for _ in range(20):
        sim.step()
    rec = sim.record()
    rec.truncated = False
    rec.drained = False
    with pytest.raises(IntegrityError):
        finalize(rec)


def test_inflight_average_matches_per_cycle_count():
    _, rec = small_run(masters=(0,), ops="read", transactions=12, burst_mix=((4, .5), (16, .5)))
    pr = rec.ports[0]
    issues = [(c.issue_cycle, c.beats) for c in pr.completed if c.op == "R"]
    for start, end in ((0, rec.total_cycles), (40, 120), (64, 65)):
        got = port_report(pr, start, end).avg_inflight_read_beats
        assert got == pytest.approx(oracles.little_inflight(issues, list(pr.read_returns), start, end))


def test_little_ratio_and_pooled_std():
    rep = finalize(small_run(ops="read", transactions=60)[1])
    for p in rep.active_ports():
        assert 0.5 < little_ratio(p) <= 1.01
    lat = []
    sim, rec = small_run(ops="read", transactions=60)
    for r in rec.ports[:2]:
        lat += [c.done_cycle - c.issue_cycle for c in r.completed if 64 <= c.issue_cycle <= r.last_issue]
    mean = sum(lat) / len(lat)
    ref = math.sqrt(sum((x - mean) ** 2 for x in lat) / len(lat))
    assert pooled_std(rep.active_ports()) == pytest.approx(ref)


# ---- isolation audit ------------------------------------------------------

ISO = dict(kind="uniform", transactions=60, region_bytes=8 * 1024 * 1024)


def audit(masters, **kw):
    spec = WorkloadSpec(masters=masters, **{**ISO, **kw})
    joint = run(SimConfig(), spec)
    solos = [run(SimConfig(), WorkloadSpec(masters=(m,), **{**ISO, **kw})) for m in masters]
    return isolation_audit(joint, solos)


def test_audit_passes_on_disjoint_subbanks():
    r = audit((0, 1, 2, 3))
    assert r.passed and r.ports_checked == [0, 1, 2, 3]


def test_audit_flags_shared_subbank():
    r = audit((0, 1), region_bytes=1024 * 1024)   # both inside sub-bank 0
    assert not r.passed
    assert any(v.startswith("port ") and "latency" in v for v in r.violations)


def test_audit_single_master_vs_itself():
    rep = run(SimConfig(), WorkloadSpec(masters=(2,), **ISO))
    assert isolation_audit(rep, [rep]).passed


def test_audit_setup_errors():
    joint = run(SimConfig(), WorkloadSpec(masters=(0, 1), **ISO))
    other = run(SimConfig(), WorkloadSpec(masters=(0,), **{**ISO, "transactions": 10}))
    with pytest.raises(AuditSetupError):
        isolation_audit(joint, [other])
    solo = run(SimConfig().with_overrides(outstanding_per_port=4), WorkloadSpec(masters=(0,), **ISO))
    with pytest.raises(AuditSetupError):
        isolation_audit(joint, [solo])

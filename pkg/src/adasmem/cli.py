"""Command-line front end.

Exit status: 0 on success, 1 when an isolation audit finds violations or a
run hits an integrity fault, 2 for usage, configuration and input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict, replace

from .addressing import AddressError, AddressMap, ProtocolError, format_location
from .config import ConfigError, SimConfig, convert_value, load_config, parse_int, TOPOLOGY_KEYS, \
    TIMING_KEYS, SCHEME_KEYS
from .engine import parse_axis, run, sweep
from .metrics import AuditSetupError, RunReport, isolation_audit
from .protocol import IntegrityError
from .workload import KINDS, OPS, WORKLOAD_KEYS, WorkloadError, synthesize_trace, workload_from_mapping, \
    write_trace

CONFIG_KEYS = TOPOLOGY_KEYS + TIMING_KEYS + SCHEME_KEYS

SWEEP_COLUMNS = [
    "axis", "value", "seed", "error", "truncated", "total_cycles", "active_ports",
    "mean_read_throughput", "min_read_throughput", "mean_write_throughput", "min_write_throughput",
    "avg_read_latency", "avg_read_first_beat_latency", "avg_write_latency", "bank_conflicts",
    "peak_split_occupancy",
]


class UsageError(Exception):
    pass


# ---- output -------------------------------------------------------------


def write_atomic(path: str | None, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename; ``None`` or
    ``-`` means standard output."""
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".adasmem-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_report(report: RunReport, fmt: str) -> str:
    return report.to_csv() if fmt == "csv" else report.to_json()


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def sweep_row(point) -> dict:
    row = {"axis": point.axis, "value": point.value, "seed": point.seed, "error": point.error or ""}
    r = point.report
    if r is None:
        return row
    ps = r.active_ports()
    rt = [p.read_throughput for p in ps if p.reads_completed]
    wt = [p.write_throughput for p in ps if p.writes_completed]
    row.update(
        truncated=r.truncated,
        total_cycles=r.total_cycles,
        active_ports=len(ps),
        mean_read_throughput=_mean(rt),
        min_read_throughput=min(rt) if rt else None,
        mean_write_throughput=_mean(wt),
        min_write_throughput=min(wt) if wt else None,
        avg_read_latency=_mean(p.avg_read_latency for p in ps),
        avg_read_first_beat_latency=_mean(p.avg_read_first_beat_latency for p in ps),
        avg_write_latency=_mean(p.avg_write_latency for p in ps),
        bank_conflicts=r.bank_conflicts,
        peak_split_occupancy=r.peak_split_occupancy,
    )
    return row


def render_sweep(points, fmt: str) -> str:
    if fmt == "json":
        doc = [{"axis": p.axis, "value": p.value, "seed": p.seed, "error": p.error,
                "report": asdict(p.report) if p.report is not None else None} for p in points]
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for p in points:
        row = sweep_row(p)
        w.writerow([_cell(row.get(c)) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return v


# ---- argument parsing ---------------------------------------------------


def _add_model_args(p: argparse.ArgumentParser, workload_flags: bool = True) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--config", metavar="PATH", help="configuration file (key = value lines)")
    g.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override a configuration key or a workload.<key>; repeatable")
    g.add_argument("--outstanding", type=int, metavar="N", help="outstanding_per_port")
    g.add_argument("--scheme", choices=("identity", "xor-fold"), help="interleave scheme_kind")
    if not workload_flags:
        return
    w = p.add_argument_group("workload")
    w.add_argument("--workload", choices=KINDS, help="workload kind (default uniform)")
    w.add_argument("--masters", metavar="LIST", help="active ports, e.g. 0..7,12 or all")
    w.add_argument("--ops", choices=OPS, help="read, write or both")
    w.add_argument("--transactions", type=int, metavar="N", help="uniform: commands per port")
    w.add_argument("--payload", metavar="SIZE", help="bulk/feature/roi: bytes per channel per port")
    w.add_argument("--burst-mix", metavar="MIX", help="burst length weights, e.g. 16:1 or 4:.5,8:.5")
    w.add_argument("--rate", type=float, metavar="R", help="injection rate in (0, 1]")
    w.add_argument("--region", metavar="SIZE", help="address region per port")
    w.add_argument("--trace", metavar="PATH", help="trace CSV (implies --workload trace)")
    w.add_argument("--isolation", action="store_true", help="reject overlapping per-port footprints")
    w.add_argument("--seed", type=lambda s: int(s, 0), metavar="N", help="base seed (default 1)")


def _add_out_args(p: argparse.ArgumentParser, formats: bool = True) -> None:
    p.add_argument("--out", metavar="PATH", help="output file (default: standard output)")
    if formats:
        p.add_argument("--format", choices=("json", "csv"), default="json", help="report format")


def _window(text: str) -> tuple[int, int]:
    a, sep, b = text.partition(":")
    if not sep:
        raise argparse.ArgumentTypeError("expected START:END")
    start, end = int(a, 0), int(b, 0)
    if end <= start or start < 0:
        raise argparse.ArgumentTypeError("window must satisfy 0 <= START < END")
    return start, end


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adasmem", description="Cycle-level simulator of a many-ported shared SRAM.")
    ap.add_argument("--version", action="version", version="adasmem 0.1.0")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("run", help="simulate one workload and write a report")
    _add_model_args(p)
    p.add_argument("--max-cycles", type=int, metavar="N", help="stop and flag the report truncated after N cycles")
    p.add_argument("--window", type=_window, metavar="START:END", help="measurement window in fabric cycles")
    p.add_argument("--event-log", metavar="PATH", help="write a per-event debug log")
    p.add_argument("--dump-memory", metavar="PATH", help="write the final memory image (sparse binary)")
    _add_out_args(p)

    p = sub.add_parser("sweep", help="run one simulation per axis value")
    _add_model_args(p)
    p.add_argument("--axis", required=True, metavar="KEY=VALUES",
                   help="e.g. masters=1..16 or outstanding_per_port=1,16 or workload.payload_bytes=4KiB,8KiB")
    p.add_argument("--workers", type=int, default=1, metavar="N", help="parallel worker processes")
    p.add_argument("--max-cycles", type=int, metavar="N", help="per-point cycle limit")
    p.add_argument("--format", choices=("json", "csv"), default="csv", help="sweep output format")
    p.add_argument("--out", metavar="PATH", help="output file (default: standard output)")

    p = sub.add_parser("map", help="print the location of one or more addresses")
    _add_model_args(p, workload_flags=False)
    p.add_argument("addresses", nargs="+", metavar="ADDRESS", help="byte address (0x.. accepted)")

    p = sub.add_parser("audit-isolation", help="compare a joint run with one solo run per active port")
    _add_model_args(p)
    p.add_argument("--max-cycles", type=int, metavar="N", help="per-run cycle limit")
    _add_out_args(p, formats=False)

    p = sub.add_parser("gen-trace", help="write the commands of a generated workload as a trace CSV")
    _add_model_args(p)
    _add_out_args(p, formats=False)
    return ap


# ---- model assembly -------------------------------------------------------


def _split_set(items: list[str]) -> tuple[dict, dict]:
    cfg_kw: dict = {}
    wl_kw: dict = {}
    for item in items:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        if key.startswith("workload."):
            wkey = key[len("workload."):]
            if wkey in wl_kw:
                raise UsageError(f"--set {key} given twice")
            wl_kw[wkey] = raw.strip()
        elif key in CONFIG_KEYS:
            if key in cfg_kw:
                raise UsageError(f"--set {key} given twice")
            try:
                cfg_kw[key] = convert_value(key, raw)
            except ValueError as exc:
                raise UsageError(f"--set {key}: {exc}") from None
        else:
            raise UsageError(f"--set: unknown key {key!r}")
    return cfg_kw, wl_kw


def _put(target: dict, key: str, value, flag: str) -> None:
    if value is None:
        return
    if key in target:
        raise UsageError(f"{flag} conflicts with --set for the same key")
    target[key] = value


def build_model(args) -> tuple[SimConfig, object]:
    """Config file, then ``--set`` overrides, then dedicated flags. A key
    given by both ``--set`` and a dedicated flag is rejected."""
    if args.config:
        doc = load_config(args.config)
        cfg, wl_file = doc.config, dict(doc.workload)
    else:
        cfg, wl_file = SimConfig(), {}
    cfg_kw, wl_kw = _split_set(args.set)
    _put(cfg_kw, "outstanding_per_port", args.outstanding, "--outstanding")
    _put(cfg_kw, "scheme_kind", args.scheme, "--scheme")
    if cfg_kw:
        cfg = cfg.with_overrides(**cfg_kw)
    if not hasattr(args, "workload"):
        return cfg, None
    if args.trace is not None:
        if args.workload not in (None, "trace"):
            raise UsageError(f"--trace conflicts with --workload {args.workload}")
        _put(wl_kw, "kind", "trace", "--trace")
    _put(wl_kw, "kind", args.workload, "--workload")
    _put(wl_kw, "trace", args.trace, "--trace")
    _put(wl_kw, "masters", args.masters, "--masters")
    _put(wl_kw, "ops", args.ops, "--ops")
    _put(wl_kw, "transactions", args.transactions, "--transactions")
    _put(wl_kw, "payload_bytes", args.payload, "--payload")
    _put(wl_kw, "burst_mix", args.burst_mix, "--burst-mix")
    _put(wl_kw, "rate", args.rate, "--rate")
    _put(wl_kw, "region_bytes", args.region, "--region")
    _put(wl_kw, "seed", args.seed, "--seed")
    if args.isolation:
        _put(wl_kw, "isolation", True, "--isolation")
    merged = {**wl_file, **wl_kw}
    workload = workload_from_mapping(merged)
    return cfg, workload


# ---- subcommands -----------------------------------------------------------


def _event_logger(path: str | None):
    if not path:
        return None, None
    fh = open(path, "w", encoding="utf-8")

    def emit(line: str) -> None:
        fh.write(line)
        fh.write("\n")
    return emit, fh


def cmd_run(args) -> int:
    cfg, workload = build_model(args)
    emit, fh = _event_logger(args.event_log)
    try:
        report = run(cfg, workload, max_cycles=args.max_cycles, window=args.window,
                     event_log=emit, dump_memory=args.dump_memory)
    finally:
        if fh:
            fh.close()
    write_atomic(args.out, render_report(report, args.format))
    if report.truncated:
        print(f"adasmem: warning: run truncated at cycle {report.total_cycles}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    cfg, workload = build_model(args)
    try:
        axis, values = parse_axis(args.axis)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not values:
        raise UsageError("--axis has no values")
    bare = axis.split(".", 1)[1] if axis.startswith(("config.", "workload.")) else axis
    if bare not in CONFIG_KEYS and bare not in WORKLOAD_KEYS:
        raise UsageError(f"--axis: unknown key {axis!r}")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    points = sweep(cfg, workload, axis, values, workers=args.workers, max_cycles=args.max_cycles)
    write_atomic(args.out, render_sweep(points, args.format))
    failed = [p for p in points if p.error]
    for p in failed:
        print(f"adasmem: point {p.axis}={p.value} failed: {p.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_map(args) -> int:
    cfg, _ = build_model(args)
    amap = AddressMap(cfg.topology, cfg.scheme)
    lines = []
    for text in args.addresses:
        try:
            addr = parse_int(text)
        except ValueError:
            raise UsageError(f"bad address {text!r}") from None
        lines.append(format_location(addr, amap.decompose(addr)))
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def audit_runs(cfg: SimConfig, workload, max_cycles: int | None = None):
    active = workload.active(cfg.topology)
    joint = run(cfg, workload, max_cycles=max_cycles)
    solos = [run(cfg, replace(workload, masters=(m,)), max_cycles=max_cycles) for m in active]
    return joint, solos


def cmd_audit(args) -> int:
    cfg, workload = build_model(args)
    joint, solos = audit_runs(cfg, workload, args.max_cycles)
    result = isolation_audit(joint, solos)
    doc = {"passed": result.passed, "ports_checked": result.ports_checked, "violations": result.violations}
    write_atomic(args.out, json.dumps(doc, indent=2) + "\n")
    if not result.passed:
        print(f"adasmem: isolation audit failed: {result.violations[0]}"
              f" ({len(result.violations)} violation(s))", file=sys.stderr)
        return 1
    return 0


def cmd_gen_trace(args) -> int:
    cfg, workload = build_model(args)
    if workload.kind == "trace":
        raise UsageError("gen-trace needs a generated workload, not a trace")
    records = synthesize_trace(workload, cfg.topology)
    header = f"generated by adasmem gen-trace: kind={workload.kind} seed={workload.seed}\n" \
             "master,op,address_hex,beats[,min_cycle]"
    buf = io.StringIO()
    write_trace(buf, records, header=header)
    write_atomic(args.out, buf.getvalue())
    return 0


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "map": cmd_map,
    "audit-isolation": cmd_audit,
    "gen-trace": cmd_gen_trace,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, WorkloadError, AddressError, ProtocolError, AuditSetupError) as exc:
        print(f"adasmem: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"adasmem: error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return 2
    except IntegrityError as exc:
        print(f"adasmem: integrity fault: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

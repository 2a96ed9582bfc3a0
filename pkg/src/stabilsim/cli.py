"""Command-line front end.

Subcommands: op, tran, sweep, study, vehicle, report. Exit codes: 0 success,
1 usage or input error, 2 simulation failure (no convergence / singular
system), 3 reference-band violation under --check. All outputs are
deterministic: identical argv and input files give byte-identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import analysis, corpus, engine
from .errors import (
    NetlistSyntaxError,
    NoConvergenceError,
    SingularTopologyError,
    StabilsimError,
)
from .netlist import (
    DcSweepDirective,
    Netlist,
    RESISTOR,
    TranDirective,
    VSOURCE,
    parse,
    parse_value,
)

_SCHEMA = "stabilsim/1"


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _resolve_path(token: str) -> Path:
    """Literal path, else the corpus/ shorthand into the bundled data dir."""
    p = Path(token)
    if p.exists():
        return p
    if token.startswith("corpus/"):
        cand = corpus.corpus_dir() / token[len("corpus/") :]
        if cand.exists():
            return cand
    raise FileNotFoundError(f"netlist file not found: {token}")


def _load_netlist(token: str) -> Netlist:
    return parse(_resolve_path(token).read_text())


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, allow_nan=False) + "\n"


class _Usage(Exception):
    pass


def _duration(token: str) -> float:
    """Numeric argparse type that accepts unit suffixes ("1u", "5m")."""
    try:
        return parse_value(token)
    except NetlistSyntaxError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _nan_none(x: float):
    return None if math.isnan(x) else x


def _solver_options(args) -> engine.SolverOptions:
    kw = {}
    for name in ("reltol", "vntol", "abstol"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    return engine.SolverOptions(**kw)


def _pick_source(n: Netlist, args) -> str:
    if getattr(args, "source", None):
        return args.source
    for d in n.directives:
        if isinstance(d, DcSweepDirective):
            return d.source
    sources = [c.name for c in n.components if c.kind == VSOURCE]
    if len(sources) == 1:
        return sources[0]
    raise _Usage(
        "--source is required (netlist has "
        f"{len(sources)} voltage sources and no .dcsweep directive)"
    )


def _sweep_grid(n: Netlist, args) -> tuple[float, float, float]:
    if args.start is not None and args.stop is not None and args.step is not None:
        return args.start, args.stop, args.step
    for d in n.directives:
        if isinstance(d, DcSweepDirective):
            return (
                args.start if args.start is not None else d.start,
                args.stop if args.stop is not None else d.stop,
                args.step if args.step is not None else d.step,
            )
    raise _Usage("sweep bounds missing: pass --from/--to/--step or add a .dcsweep directive")


def _need_node(args) -> str:
    if not getattr(args, "node", None):
        raise _Usage("--node is required for this subcommand")
    return args.node


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="stabilsim", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="subcommand", required=True)

    def add_common(p, *, netlist=True):
        if netlist:
            p.add_argument("netlist", help="netlist file (corpus/<name> reads bundled data)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", help="write output to this file instead of stdout")
        p.add_argument("--reltol", type=float)
        p.add_argument("--vntol", type=float)
        p.add_argument("--abstol", type=float)

    p = sub.add_parser("op", help="DC operating point")
    add_common(p)

    p = sub.add_parser("tran", help="transient simulation")
    add_common(p)
    p.add_argument("--tstep", type=_duration)
    p.add_argument("--tstop", type=_duration)

    p = sub.add_parser("sweep", help="DC input sweep with regulation summary")
    add_common(p)
    p.add_argument("--source")
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--node")
    p.add_argument("--nominal", type=float)
    p.add_argument(
        "--check",
        action="store_true",
        help="exit 3 unless every matching bundled reference row is met",
    )

    p = sub.add_parser("study", help="rank candidate values of one component parameter")
    add_common(p)
    p.add_argument("--param", required=True, metavar="COMP.KEY=v1,v2,...")
    p.add_argument("--source")
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--node")
    p.add_argument("--nominal", type=float, help="target output voltage to score against")

    p = sub.add_parser("vehicle", help="regulator response over an engine speed profile")
    add_common(p)
    p.add_argument("--rpm-map", dest="rpm_map", help="rpm,volts CSV (default: bundled sample)")
    p.add_argument("--rpm", help="comma-separated rpm grid (default: map breakpoints)")
    p.add_argument("--source")
    p.add_argument("--node")

    p = sub.add_parser("report", help="consolidated JSON: sweep + regulation + overvoltage")
    add_common(p)
    p.set_defaults(format="json")  # JSON-only subcommand; csv must be explicit to be rejected
    p.add_argument("--source")
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--node")
    p.add_argument("--nominal", type=float)
    return top


def _cmd_op(args) -> int:
    n = _load_netlist(args.netlist)
    op = engine.dc_operating_point(n, _solver_options(args))
    if args.format == "json":
        payload = {
            "schema": _SCHEMA,
            "subcommand": "op",
            "node_voltages": {k: op.node_voltages[k] for k in n.nodes},
            "source_currents": op.source_currents,
            "iterations": op.iterations,
            "strategy": op.strategy_used,
        }
        _emit(_json_text(payload), args.out)
    else:
        rows = [("voltage", k, _fmt(op.node_voltages[k])) for k in n.nodes]
        rows += [("current", k, _fmt(v)) for k, v in op.source_currents.items()]
        _emit(_csv_text(("quantity", "name", "value"), rows), args.out)
    return 0


def _cmd_tran(args) -> int:
    n = _load_netlist(args.netlist)
    tstep, tstop = args.tstep, args.tstop
    if tstep is None or tstop is None:
        for d in n.directives:
            if isinstance(d, TranDirective):
                tstep = tstep if tstep is not None else d.tstep
                tstop = tstop if tstop is not None else d.tstop
    if tstep is None or tstop is None:
        raise _Usage("pass --tstep and --tstop or add a .tran directive")
    w = engine.transient(n, tstep, tstop, _solver_options(args))
    for warning in w.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    nodes = [k for k in n.nodes if k != "0"]
    sources = [c.name for c in n.components if c.kind == VSOURCE]
    if args.format == "json":
        payload = {
            "schema": _SCHEMA,
            "subcommand": "tran",
            "times": [float(t) for t in w.times],
            "voltages": {k: [float(v) for v in w.voltages[k]] for k in nodes},
            "currents": {k: [float(v) for v in w.currents[k]] for k in sources},
            "warnings": list(w.warnings),
        }
        _emit(_json_text(payload), args.out)
    else:
        header = ["t"] + [f"v({k})" for k in nodes] + [f"i({k})" for k in sources]
        rows = []
        for i, t in enumerate(w.times):
            row = [_fmt(float(t))]
            row += [_fmt(float(w.voltages[k][i])) for k in nodes]
            row += [_fmt(float(w.currents[k][i])) for k in sources]
            rows.append(row)
        _emit(_csv_text(header, rows), args.out)
    return 0


def _regulation_payload(rep: analysis.RegulationReport) -> dict:
    return {
        "line_regulation_pct_per_v": rep.line_regulation_pct_per_v,
        "delta_vi": rep.delta_vi,
        "delta_vo": rep.delta_vo,
        "vo_ref": rep.vo_ref,
        "max_pu": rep.max_pu,
        "verdict": rep.verdict,
    }


def _run_sweep(args):
    n = _load_netlist(args.netlist)
    source = _pick_source(n, args)
    start, stop, step = _sweep_grid(n, args)
    node = _need_node(args)
    data = engine.dc_sweep(n, source, start, stop, step, _solver_options(args))
    res = analysis.sweep_result(data, node)
    if not any(p.converged for p in res.points):
        raise NoConvergenceError("no sweep point converged")
    try:
        reg = analysis.line_regulation(res, nominal_v=args.nominal)
    except (StabilsimError, ValueError):
        reg = None
    return n, data, res, reg


def _cmd_sweep(args) -> int:
    _, _, res, reg = _run_sweep(args)
    if reg is not None:
        print(
            f"line regulation {reg.line_regulation_pct_per_v:.6g} %/V, "
            f"max {reg.max_pu:.6g} pu, verdict {reg.verdict}",
            file=sys.stderr,
        )
    if args.format == "json":
        payload = {
            "schema": _SCHEMA,
            "subcommand": "sweep",
            "source": res.source,
            "node": res.node,
            "points": [
                {
                    "vi": p.input_v,
                    "vo": p.output_v if p.converged else None,
                    "converged": p.converged,
                }
                for p in res.points
            ],
            "regulation": None if reg is None else _regulation_payload(reg),
        }
        _emit(_json_text(payload), args.out)
    else:
        rows = [
            (_fmt(p.input_v), _fmt(p.output_v) if p.converged else "nan", int(p.converged))
            for p in res.points
        ]
        _emit(_csv_text(("vi", "vo", "converged"), rows), args.out)

    if args.check:
        table = corpus.reference_table2()
        violations = []
        checked = 0
        for row in table.rows:
            for p in res.points:
                if abs(p.input_v - row.input_v) < 1e-9:
                    checked += 1
                    if not p.converged:
                        violations.append(f"vi={row.input_v:g}: no convergence")
                    elif abs(p.output_v - row.expected_vo) > row.tolerance:
                        violations.append(
                            f"vi={row.input_v:g}: vo={p.output_v:.4f} outside "
                            f"{row.expected_vo:g}±{row.tolerance:g}"
                        )
        print(f"check: {checked} reference rows matched", file=sys.stderr)
        for v in violations:
            print(f"check violation: {v}", file=sys.stderr)
        if violations:
            return 3
    return 0


def _parse_param_spec(spec: str):
    head, sep, tail = spec.partition("=")
    comp, dot, key = head.partition(".")
    if not sep or not dot or not comp or not key or not tail:
        raise _Usage(f"--param must look like COMP.KEY=v1,v2,... (got {spec!r})")
    raw = tail.split(",")
    if key.casefold() == "type":
        return comp, key.casefold(), [v.strip().casefold() for v in raw]
    try:
        return comp, key.casefold(), [parse_value(v.strip()) for v in raw]
    except NetlistSyntaxError as exc:
        raise _Usage(f"--param value list: {exc}") from exc


def _cmd_study(args) -> int:
    n = _load_netlist(args.netlist)
    comp, key, values = _parse_param_spec(args.param)
    source = _pick_source(n, args)
    start, stop, step = _sweep_grid(n, args)
    node = _need_node(args)
    if args.nominal is None:
        raise _Usage("study needs --nominal (the target output voltage)")
    rows = analysis.parameter_study(
        n,
        comp,
        key,
        values,
        source=source,
        start=start,
        stop=stop,
        step=step,
        output_node=node,
        target_v=args.nominal,
        opts=_solver_options(args),
    )
    if args.format == "json":
        payload = {
            "schema": _SCHEMA,
            "subcommand": "study",
            "component": comp,
            "param": key,
            "rows": [
                {
                    "value": r.value,
                    "max_abs_deviation": None if math.isinf(r.max_abs_deviation) else r.max_abs_deviation,
                    "line_regulation_pct_per_v": None
                    if math.isinf(r.line_regulation_pct_per_v)
                    else r.line_regulation_pct_per_v,
                    "ok": r.ok,
                }
                for r in rows
            ],
        }
        _emit(_json_text(payload), args.out)
    else:
        out_rows = [
            (
                r.value if isinstance(r.value, str) else _fmt(r.value),
                _fmt(r.max_abs_deviation),
                _fmt(r.line_regulation_pct_per_v),
                int(r.ok),
            )
            for r in rows
        ]
        header = ("value", "max_abs_deviation", "line_regulation_pct_per_v", "ok")
        _emit(_csv_text(header, out_rows), args.out)
    return 0


def _cmd_vehicle(args) -> int:
    n = _load_netlist(args.netlist)
    source = _pick_source(n, args)
    node = _need_node(args)
    if args.rpm_map:
        rpm_map = analysis.RpmVoltageMap.from_csv(_resolve_path(args.rpm_map))
    else:
        rpm_map = corpus.sample_rpm_map()
    if args.rpm:
        grid = [float(tok) for tok in args.rpm.split(",")]
    else:
        grid = [float(r) for r in rpm_map.rpm]
    rep = analysis.vehicle_experiment(n, rpm_map, grid, source, node, _solver_options(args))
    if rep.insufficient:
        print("warning: fewer than 2 usable points; spreads are not meaningful", file=sys.stderr)
    if args.format == "json":
        payload = {
            "schema": _SCHEMA,
            "subcommand": "vehicle",
            "rows": [
                {
                    "rpm": r.rpm,
                    "input_v": r.input_v,
                    "output_v": r.output_v if r.converged else None,
                    "line_regulation_pct_per_v": r.line_regulation_pct_per_v
                    if r.converged
                    else None,
                    "clamped": r.clamped,
                    "converged": r.converged,
                }
                for r in rep.rows
            ],
            "unregulated_spread": _nan_none(rep.unregulated_spread),
            "regulated_spread": _nan_none(rep.regulated_spread),
            "vo_ref": _nan_none(rep.vo_ref),
            "insufficient": rep.insufficient,
        }
        _emit(_json_text(payload), args.out)
    else:
        header = ("rpm", "input_v", "output_v", "line_regulation_pct_per_v", "clamped", "converged")
        rows = [
            (
                _fmt(r.rpm),
                _fmt(r.input_v),
                _fmt(r.output_v) if r.converged else "nan",
                _fmt(r.line_regulation_pct_per_v) if r.converged else "nan",
                int(r.clamped),
                int(r.converged),
            )
            for r in rep.rows
        ]
        _emit(_csv_text(header, rows), args.out)
    return 0


def _worst_resistor_power(n: Netlist, full: engine.SweepData) -> list[dict]:
    """Worst dissipation per resistor across converged sweep points."""
    warnings = []
    for c in n.components:
        if c.kind != RESISTOR:
            continue
        va = full.voltage(c.nodes[0])
        vb = full.voltage(c.nodes[1])
        with_vals = [
            (float(a) - float(b)) ** 2 / c.model.resistance
            for a, b, ok in zip(va, vb, full.converged)
            if ok
        ]
        worst = max(with_vals, default=0.0)
        if worst > c.model.rated_power:
            warnings.append(
                {"component": c.name, "power_w": worst, "rated_w": c.model.rated_power}
            )
    return warnings


def _cmd_report(args) -> int:
    if args.format == "csv":
        raise _Usage("report emits JSON only; drop --format csv")
    n, data, res, reg = _run_sweep(args)
    nominal = args.nominal if args.nominal is not None else (reg.vo_ref if reg else None)
    ieee = None
    if reg is not None and nominal:
        ieee = {
            "nominal_v": nominal,
            "overvoltage_pu": 1.1,
            "max_pu": max(p.output_v for p in res.points if p.converged) / nominal,
            "verdict": reg.verdict,
            "note": "dc sweep points are sustained by definition",
        }
    payload = {
        "schema": _SCHEMA,
        "subcommand": "report",
        "source": res.source,
        "node": res.node,
        "points": [
            {
                "vi": p.input_v,
                "vo": p.output_v if p.converged else None,
                "converged": p.converged,
            }
            for p in res.points
        ],
        "regulation": None if reg is None else _regulation_payload(reg),
        "ieee1159": ieee,
        "power_warnings": _worst_resistor_power(n, data),
    }
    _emit(_json_text(payload), args.out)
    return 0


_DISPATCH = {
    "op": _cmd_op,
    "tran": _cmd_tran,
    "sweep": _cmd_sweep,
    "study": _cmd_study,
    "vehicle": _cmd_vehicle,
    "report": _cmd_report,
}


def run(argv: list[str]) -> int:
    """Parse argv and execute; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return _DISPATCH[args.subcommand](args)
    except _Usage as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (NoConvergenceError, SingularTopologyError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 2
    except NetlistSyntaxError as exc:
        print(f"error: {args.netlist}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        detail = exc.args[0] if exc.args else exc
        print(f"error: {detail}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()

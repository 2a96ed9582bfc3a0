"""Circuit solving: MNA assembly, Newton DC solve, transient, DC sweep.

Unknown ordering: non-ground netlist nodes in declaration order, then one
internal node per capacitor with esr > 0 (series esr joins the terminal to
the ideal capacitance), then one branch current per voltage source. gmin
conductances tie every node row to ground so purely capacitive nodes stay
well-posed at DC.

Sign conventions: a source current is the current flowing from the +
terminal through the source to the - terminal, so a battery driving a load
reports a negative current (SPICE convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .devices import (
    CapacitorModel,
    SourceModel,
    _bjt_linearized_raw,
    _diode_branch,
    capacitor_companion,
)
from .errors import (
    NoConvergenceError,
    SingularMatrixError,
    SingularTopologyError,
    UnknownNodeError,
)
from .netlist import BJT, CAPACITOR, DIODE, RESISTOR, VSOURCE, ZENER, Netlist

REVERSE_POLARITY_LIMIT = 0.5  # volts of reverse bias a polar cap may see quietly


@dataclass(frozen=True)
class SolverOptions:
    reltol: float = 1e-3
    vntol: float = 1e-6
    abstol: float = 1e-12
    max_newton_iters: int = 100
    gmin: float = 1e-12
    integration: str = "TRAP"  # "TRAP" falls back to BE per step; "BE" stays BE

    def __post_init__(self):
        if self.integration not in ("TRAP", "BE"):
            raise ValueError(f"unknown integration method {self.integration!r}")
        if min(self.reltol, self.vntol, self.abstol) <= 0 or self.gmin < 0:
            raise ValueError("tolerances must be positive and gmin nonnegative")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be at least 1")


@dataclass(frozen=True)
class MnaSystem:
    dimension: int
    matrix: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    unknowns: tuple[str, ...]


@dataclass(frozen=True)
class OperatingPoint:
    node_voltages: dict[str, float]
    source_currents: dict[str, float]
    iterations: int
    strategy_used: str
    unknowns: tuple[str, ...] = ()
    state: np.ndarray = field(default=None, repr=False)

    def voltage(self, node: str) -> float:
        try:
            return self.node_voltages[node]
        except KeyError:
            raise UnknownNodeError(node) from None


@dataclass(frozen=True)
class Waveform:
    times: np.ndarray = field(repr=False)
    voltages: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    currents: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("times must be a nonempty 1-D array")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        for name, series in list(self.voltages.items()) + list(self.currents.items()):
            s = np.asarray(series, dtype=float)
            if s.shape != t.shape:
                raise ValueError(f"series {name!r} length differs from times")
            if not np.all(np.isfinite(s)):
                raise ValueError(f"series {name!r} contains NaN or Inf")

    def voltage(self, node: str) -> np.ndarray:
        try:
            return self.voltages[node]
        except KeyError:
            raise UnknownNodeError(node) from None

    def current(self, source: str) -> np.ndarray:
        try:
            return self.currents[source]
        except KeyError:
            raise UnknownNodeError(source) from None


@dataclass(frozen=True)
class SweepData:
    """Raw dc_sweep output: every node voltage at every grid point.

    Voltages at non-converged points are NaN and flagged in `converged`.
    """

    swept_name: str
    grid: np.ndarray = field(repr=False)
    voltages: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    currents: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    converged: np.ndarray = field(repr=False, default_factory=lambda: np.array([], bool))
    strategies: tuple[str, ...] = ()

    def voltage(self, node: str) -> np.ndarray:
        try:
            return self.voltages[node]
        except KeyError:
            raise UnknownNodeError(node) from None


@dataclass
class _Src:
    name: str
    p: int
    n: int
    branch: int
    model: SourceModel


@dataclass
class _Cap:
    name: str
    top: int  # internal esr node when esr > 0, else the + terminal
    bot: int
    capacitance: float
    esr: float
    term_p: str  # declared + terminal (netlist node name)
    term_n: str


class _Compiled:
    """Netlist lowered to flat index arrays ready for stamping."""

    def __init__(self, n: Netlist):
        self.netlist = n
        node_of: dict[str, int] = {}
        ext_nodes: list[str] = []
        for name, idx in sorted(n.nodes.items(), key=lambda kv: kv[1]):
            if name == "0":
                node_of[name] = -1
            else:
                node_of[name] = len(ext_nodes)
                ext_nodes.append(name)
        self.ext_nodes = ext_nodes

        res: list[tuple[int, int, float]] = []
        self.sources: list[_Src] = []
        self.caps: list[_Cap] = []
        diode_rows: list[list[float]] = []
        bjt_rows: list[list[float]] = []
        names = set(n.nodes)
        next_idx = len(ext_nodes)

        for c in n.components:
            idx = [node_of[x] for x in c.nodes]
            m = c.model
            if c.kind == RESISTOR:
                res.append((idx[0], idx[1], 1.0 / m.resistance))
            elif c.kind == CAPACITOR:
                top = idx[0]
                if m.esr > 0:
                    internal = f"{c.name}#esr"
                    while internal in names:
                        internal += "'"
                    names.add(internal)
                    node_of[internal] = next_idx
                    ext_nodes.append(internal)
                    top = next_idx
                    next_idx += 1
                    res.append((idx[0], top, 1.0 / m.esr))
                res.append((idx[0], idx[1], 1.0 / m.rleak))
                self.caps.append(
                    _Cap(c.name, top, idx[1], m.capacitance, m.esr, c.nodes[0], c.nodes[1])
                )
            elif c.kind in (DIODE, ZENER):
                bv = m.breakdown_v if c.kind == ZENER else -1.0
                diode_rows.append([idx[0], idx[1], m.is_sat, m.n_ideality * m.vt, bv])
            elif c.kind == BJT:
                bjt_rows.append([idx[0], idx[1], idx[2], m.is_sat, m.beta_f, m.beta_r, m.vt])
            elif c.kind == VSOURCE:
                self.sources.append(_Src(c.name, idx[0], idx[1], -1, m))

        self.n_nodes = next_idx
        for s in self.sources:
            s.branch = next_idx
            next_idx += 1
        self.dim = next_idx
        self.node_of = node_of
        self.unknowns = tuple(ext_nodes + [f"I({s.name})" for s in self.sources])

        self.res_a = np.array([r[0] for r in res], dtype=np.int64)
        self.res_b = np.array([r[1] for r in res], dtype=np.int64)
        self.res_g = np.array([r[2] for r in res], dtype=float)
        # padded index form: ground (-1) points at a scratch slot for numpy use
        pad = self.dim
        self.res_ap = np.where(self.res_a < 0, pad, self.res_a)
        self.res_bp = np.where(self.res_b < 0, pad, self.res_b)
        self.diodes = np.array(diode_rows, dtype=float).reshape(len(diode_rows), 5)
        self.bjts = np.array(bjt_rows, dtype=float).reshape(len(bjt_rows), 7)
        self.has_nonlinear = bool(diode_rows or bjt_rows)

    def source_values(self, t: float = 0.0) -> np.ndarray:
        return np.array([s.model.value_at(t) for s in self.sources])


def _assemble(comp: _Compiled, gmin: float, src_values, companions=None):
    """Static (bias-independent) part of the system: G matrix and rhs."""
    g = np.zeros((comp.dim, comp.dim))
    rhs = np.zeros(comp.dim)
    for a, b, cond in zip(comp.res_a, comp.res_b, comp.res_g):
        if a >= 0:
            g[a, a] += cond
            if b >= 0:
                g[a, b] -= cond
        if b >= 0:
            g[b, b] += cond
            if a >= 0:
                g[b, a] -= cond
    for i in range(comp.n_nodes):
        g[i, i] += gmin
    for s, value in zip(comp.sources, src_values):
        if s.p >= 0:
            g[s.p, s.branch] += 1.0
            g[s.branch, s.p] += 1.0
        if s.n >= 0:
            g[s.n, s.branch] -= 1.0
            g[s.branch, s.n] -= 1.0
        rhs[s.branch] = value
    if companions:
        for cap, (geq, ieq) in zip(comp.caps, companions):
            a, b = cap.top, cap.bot
            if a >= 0:
                g[a, a] += geq
                rhs[a] += ieq
                if b >= 0:
                    g[a, b] -= geq
            if b >= 0:
                g[b, b] += geq
                rhs[b] -= ieq
                if a >= 0:
                    g[b, a] -= geq
    return g, rhs


def _incident_max(comp: _Compiled, x: np.ndarray, companions=None) -> np.ndarray:
    """Largest absolute branch current incident on each node row."""
    out = np.zeros(comp.dim + 1)
    xp = np.concatenate([x, [0.0]])
    if comp.res_g.size:
        cur = np.abs(comp.res_g * (xp[comp.res_ap] - xp[comp.res_bp]))
        np.maximum.at(out, comp.res_ap, cur)
        np.maximum.at(out, comp.res_bp, cur)
    for s in comp.sources:
        cur = abs(x[s.branch])
        for nd in (s.p, s.n):
            if nd >= 0:
                out[nd] = max(out[nd], cur)
    for row in comp.diodes:
        ia, ic = int(row[0]), int(row[1])
        v = (x[ia] if ia >= 0 else 0.0) - (x[ic] if ic >= 0 else 0.0)
        cur = abs(_diode_branch(v, row[2], row[3], row[4])[0])
        for nd in (ia, ic):
            if nd >= 0:
                out[nd] = max(out[nd], cur)
    for row in comp.bjts:
        nc, nb, ne = int(row[0]), int(row[1]), int(row[2])
        vc = x[nc] if nc >= 0 else 0.0
        vb = x[nb] if nb >= 0 else 0.0
        ve = x[ne] if ne >= 0 else 0.0
        ic, ib, ie = _bjt_linearized_raw(vb - ve, vb - vc, row[3], row[4], row[5], row[6])[:3]
        for nd, cur in ((nc, ic), (nb, ib), (ne, ie)):
            if nd >= 0:
                out[nd] = max(out[nd], abs(cur))
    if companions:
        for cap, (geq, ieq) in zip(comp.caps, companions):
            va = x[cap.top] if cap.top >= 0 else 0.0
            vb = x[cap.bot] if cap.bot >= 0 else 0.0
            cur = abs(geq * (va - vb) - ieq)
            for nd in (cap.top, cap.bot):
                if nd >= 0:
                    out[nd] = max(out[nd], cur)
    return out[: comp.n_nodes]


class _NotConverged(Exception):
    def __init__(self, iterations: int, worst: float):
        self.iterations = iterations
        self.worst = worst


def _newton(comp, g_static, rhs_static, x0, opts, companions=None):
    """Newton-Raphson from x0; returns (x, iterations) or raises _NotConverged.

    Acceptance needs the per-row step criterion (volts on node rows, amps on
    branch rows) AND a fresh-stamp KCL residual criterion. Linear circuits
    accept on the residual alone: their stamps cannot move between
    iterations, so the first solve is already exact and counts as one
    iteration.
    """
    nn = comp.n_nodes
    x = np.asarray(x0, dtype=float).copy()
    worst = math.inf

    def residual_ok(xc):
        g = g_static.copy()
        rhs = rhs_static.copy()
        if comp.has_nonlinear:
            _kernels.stamp_nonlinear(g, rhs, xc, comp.diodes, comp.bjts)
        r = g @ xc - rhs
        # Componentwise backward-error floor: the KCL sum cannot be
        # evaluated more accurately than eps * (|G||x| + |b|), so demanding
        # less residual than that (small esr -> huge conductance through a
        # balanced node) would spin Newton forever on rounding noise.
        floor = comp.dim * np.finfo(float).eps * (np.abs(g) @ np.abs(xc) + np.abs(rhs))
        imax = _incident_max(comp, xc, companions)
        node_tol = opts.abstol + opts.reltol * imax + floor[:nn]
        if np.any(np.abs(r[:nn]) > node_tol):
            return False
        branch_tol = opts.vntol + opts.reltol * np.abs(rhs_static[nn:]) + floor[nn:]
        return not np.any(np.abs(r[nn:]) > branch_tol)

    for it in range(1, opts.max_newton_iters + 1):
        g = g_static.copy()
        rhs = rhs_static.copy()
        if comp.has_nonlinear:
            _kernels.stamp_nonlinear(g, rhs, x, comp.diodes, comp.bjts)
        try:
            x_new = _kernels.lu_solve(g, rhs)
        except SingularMatrixError:
            if it == 1:
                # Degenerate at the starting linearization: structural, no
                # amount of iterating will fix it.
                raise
            # A wild intermediate bias produced a degenerate linearization;
            # treat it like a convergence failure so fallbacks get a shot.
            raise _NotConverged(it, math.inf) from None
        delta = np.abs(x_new - x)
        tol = np.empty(comp.dim)
        tol[:nn] = opts.vntol + opts.reltol * np.abs(x_new[:nn])
        tol[nn:] = opts.abstol + opts.reltol * np.abs(x_new[nn:])
        worst = float(np.max(delta - tol, initial=-math.inf))
        if (worst <= 0.0 or not comp.has_nonlinear) and residual_ok(x_new):
            return x_new, it
        x = x_new
    raise _NotConverged(opts.max_newton_iters, worst)


_GMIN_LADDER_START = 1e-2
_SOURCE_RAMPS = 10


def _solve_dc(comp, src_values, opts, x0=None):
    """DC solve with the fallback ladder; returns (x, iterations, strategy)."""
    x0 = np.zeros(comp.dim) if x0 is None else x0
    tried = []
    try:
        g, rhs = _assemble(comp, opts.gmin, src_values)
        x, iters = _newton(comp, g, rhs, x0, opts)
        return x, iters, "plain"
    except _NotConverged:
        tried.append("plain")
    except SingularMatrixError as exc:
        raise SingularTopologyError(
            f"singular system while solving DC operating point: {exc}; "
            "check for conflicting ideal sources or a source loop"
        ) from exc

    try:
        x = np.zeros(comp.dim)
        gmin = _GMIN_LADDER_START
        while gmin > opts.gmin:
            g, rhs = _assemble(comp, gmin, src_values)
            x, _ = _newton(comp, g, rhs, x, opts)
            gmin *= 0.1
        g, rhs = _assemble(comp, opts.gmin, src_values)
        x, iters = _newton(comp, g, rhs, x, opts)
        return x, iters, "gmin_step"
    except _NotConverged:
        tried.append("gmin_step")
    except SingularMatrixError as exc:
        raise SingularTopologyError(str(exc)) from exc

    try:
        x = np.zeros(comp.dim)
        src = np.asarray(src_values, dtype=float)
        for k in range(1, _SOURCE_RAMPS + 1):
            g, rhs = _assemble(comp, opts.gmin, src * (k / _SOURCE_RAMPS))
            x, iters = _newton(comp, g, rhs, x, opts)
        return x, iters, "source_step"
    except _NotConverged as exc:
        tried.append("source_step")
        raise NoConvergenceError(
            f"Newton failed to converge after {opts.max_newton_iters} iterations "
            f"(strategies tried: {', '.join(tried)}; worst normalized step "
            f"excess {exc.worst:.3e})",
            strategies=tried,
        ) from exc
    except SingularMatrixError as exc:
        raise SingularTopologyError(str(exc)) from exc


def _operating_point(comp, x, iters, strategy) -> OperatingPoint:
    volts = {"0": 0.0}
    for name, idx in comp.node_of.items():
        if name not in comp.netlist.nodes:
            continue  # internal esr nodes stay off the public map
        if idx >= 0:
            volts[name] = float(x[idx])
    currents = {s.name: float(x[s.branch]) for s in comp.sources}
    return OperatingPoint(volts, currents, iters, strategy, comp.unknowns, x)


def dc_operating_point(
    n: Netlist, opts: SolverOptions | None = None, at_time: float = 0.0
) -> OperatingPoint:
    """DC operating point with sources at their t=at_time values."""
    opts = opts or SolverOptions()
    comp = _Compiled(n)
    x, iters, strategy = _solve_dc(comp, comp.source_values(at_time), opts)
    return _operating_point(comp, x, iters, strategy)


def assemble_mna(
    n: Netlist,
    bias: dict[str, float] | None = None,
    companions: dict[str, tuple[float, float]] | None = None,
    opts: SolverOptions | None = None,
    at_time: float = 0.0,
) -> MnaSystem:
    """One assembled linearized system: matrix and rhs at the given bias.

    bias maps node names (internal `<cap>#esr` names allowed) to volts;
    missing nodes linearize at 0 V. companions maps capacitor names to
    (geq, ieq) Norton pairs; without it capacitors are open (DC view).
    """
    opts = opts or SolverOptions()
    comp = _Compiled(n)
    comp_list = None
    if companions is not None:
        by_name = dict(companions)
        comp_list = [by_name.pop(c.name, (0.0, 0.0)) for c in comp.caps]
        if by_name:
            raise UnknownNodeError(f"companions name unknown capacitors: {sorted(by_name)}")
    x = np.zeros(comp.dim)
    if bias:
        # validated even when no device consumes it; a typo should not pass
        # silently just because the circuit happens to be linear
        for name, v in bias.items():
            idx = comp.node_of.get(name)
            if idx is None:
                raise UnknownNodeError(name)
            if idx >= 0:
                x[idx] = v
    g, rhs = _assemble(comp, opts.gmin, comp.source_values(at_time), comp_list)
    if comp.has_nonlinear:
        _kernels.stamp_nonlinear(g, rhs, x, comp.diodes, comp.bjts)
    return MnaSystem(comp.dim, g, rhs, comp.unknowns)


def solve_linear(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Dense LU solve (partial pivoting); inputs are left untouched."""
    a = np.array(matrix, dtype=float, order="C", copy=True)
    b = np.array(rhs, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.shape != (a.shape[0],):
        raise ValueError("need a square matrix and a matching rhs")
    return np.asarray(_kernels.lu_solve(a, b))


def transient(
    n: Netlist, tstep: float, tstop: float, opts: SolverOptions | None = None
) -> Waveform:
    """Fixed-step transient from the DC operating point of the t=0 circuit."""
    if tstep <= 0 or tstop < tstep:
        raise ValueError("need 0 < tstep <= tstop")
    opts = opts or SolverOptions()
    comp = _Compiled(n)
    n_samples = int(math.floor(tstop / tstep + 1e-9)) + 1

    x, iters, strategy = _solve_dc(comp, comp.source_values(0.0), opts)

    volts = np.zeros((n_samples, comp.n_nodes))
    amps = np.zeros((n_samples, len(comp.sources)))

    def record(k, xk):
        volts[k] = xk[: comp.n_nodes]
        for j, s in enumerate(comp.sources):
            amps[k, j] = xk[s.branch]

    record(0, x)

    def cap_v(xk, cap):
        va = xk[cap.top] if cap.top >= 0 else 0.0
        vb = xk[cap.bot] if cap.bot >= 0 else 0.0
        return va - vb

    states = [(cap_v(x, cap), 0.0) for cap in comp.caps]
    # Bare-capacitance models: esr and rleak already live in the resistor
    # arrays, so the companion must not double-count them.
    ideal = [CapacitorModel(cap.capacitance, esr=0.0, rleak=1e30) for cap in comp.caps]

    for k in range(1, n_samples):
        t = k * tstep
        src = comp.source_values(t)
        accepted = None
        methods = ("TRAP", "BE") if opts.integration == "TRAP" else ("BE",)
        for method in methods:
            companions = [
                capacitor_companion(m, vp, ip, tstep, method)
                for m, (vp, ip) in zip(ideal, states)
            ]
            g, rhs = _assemble(comp, opts.gmin, src, companions)
            try:
                x_new, _ = _newton(comp, g, rhs, x, opts, companions)
                accepted = (x_new, companions)
                break
            except _NotConverged:
                continue
            except SingularMatrixError as exc:
                raise SingularTopologyError(str(exc)) from exc
        if accepted is None:
            raise NoConvergenceError(
                f"transient step to t={t:.6g} s failed to converge with "
                f"{' and '.join(methods)}",
                strategies=methods,
                time=t,
            )
        x, companions = accepted
        states = [
            (cap_v(x, cap), geq * cap_v(x, cap) - ieq)
            for cap, (geq, ieq) in zip(comp.caps, companions)
        ]
        record(k, x)

    times = np.arange(n_samples) * tstep
    voltages = {"0": np.zeros(n_samples)}
    for i, name in enumerate(comp.ext_nodes):
        if name in comp.netlist.nodes:
            voltages[name] = volts[:, i]
    currents = {s.name: amps[:, j] for j, s in enumerate(comp.sources)}

    warnings = []
    for c in comp.netlist.components:
        if c.kind != CAPACITOR or not c.model.polar:
            continue
        vp = voltages[c.nodes[0]] if c.nodes[0] != "0" else np.zeros(n_samples)
        vn = voltages[c.nodes[1]] if c.nodes[1] != "0" else np.zeros(n_samples)
        rev = vp - vn
        k = int(np.argmin(rev))
        if rev[k] < -REVERSE_POLARITY_LIMIT:
            warnings.append(
                f"ReversePolarity: {c.name} sees {rev[k]:.3f} V reverse bias "
                f"at t={times[k]:.6g} s (limit {REVERSE_POLARITY_LIMIT} V)"
            )

    return Waveform(times, voltages, currents, tuple(warnings))


def dc_sweep(
    n: Netlist,
    source: str,
    start: float,
    stop: float,
    step: float,
    opts: SolverOptions | None = None,
) -> SweepData:
    """Sweep one source's DC value over an inclusive grid, warm-starting.

    Non-convergent points are recorded (NaN voltages, converged=False) and
    the sweep moves on from the last converged state.
    """
    if step == 0 or (stop - start) * step < 0:
        raise ValueError("sweep step must be nonzero and point from start to stop")
    opts = opts or SolverOptions()
    comp = _Compiled(n)
    swept = None
    for j, s in enumerate(comp.sources):
        if s.name.casefold() == source.casefold():
            swept = j
    if swept is None:
        raise UnknownNodeError(f"no voltage source named {source!r}")

    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    grid = start + step * np.arange(count)
    volts = np.full((count, comp.n_nodes), np.nan)
    amps = np.full((count, len(comp.sources)), np.nan)
    converged = np.zeros(count, dtype=bool)
    strategies = []

    base_src = comp.source_values(0.0)
    x_warm = None
    for k, value in enumerate(grid):
        src = base_src.copy()
        src[swept] = value
        try:
            x, _, strategy = _solve_dc(comp, src, opts, x_warm)
        except NoConvergenceError:
            strategies.append("failed")
            continue
        x_warm = x
        converged[k] = True
        strategies.append(strategy)
        volts[k] = x[: comp.n_nodes]
        for j, s in enumerate(comp.sources):
            amps[k, j] = x[s.branch]

    voltages = {"0": np.zeros(count)}
    for i, name in enumerate(comp.ext_nodes):
        if name in comp.netlist.nodes:
            voltages[name] = volts[:, i]
    currents = {s.name: amps[:, j] for j, s in enumerate(comp.sources)}
    return SweepData(
        comp.sources[swept].name, grid, voltages, currents, converged, tuple(strategies)
    )

"""Regulation metrics, overvoltage assessment and parameter studies.

Line regulation here is the span form: LR = dVo / (dVi * Vo_ref) * 100 in
percent per volt, with Vo_ref taken at the converged point whose input is
nearest the median input (ties break toward the lower input). The
overvoltage verdict follows the sustained-event convention: an excursion
only counts once it has lasted min_duration, and a DC sweep point is by
definition sustained.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .devices import CapacitorModel
from .engine import OperatingPoint, SolverOptions, SweepData, Waveform, dc_operating_point, dc_sweep
from .errors import (
    EmptySeriesError,
    InsufficientPointsError,
    NoConvergenceError,
    WindowTooLongError,
)
from .netlist import (
    BJT,
    CAPACITOR,
    DIODE,
    RESISTOR,
    ZENER,
    Netlist,
    with_component,
    with_source_dc,
)


class SweepPoint(NamedTuple):
    input_v: float
    output_v: float
    converged: bool


@dataclass(frozen=True)
class SweepResult:
    """One output node's response over a DC input sweep."""

    source: str
    node: str
    points: tuple[SweepPoint, ...]


def sweep_result(data: SweepData, node: str) -> SweepResult:
    series = data.voltage(node)
    pts = tuple(
        SweepPoint(float(vi), float(vo), bool(ok))
        for vi, vo, ok in zip(data.grid, series, data.converged)
    )
    return SweepResult(data.swept_name, node, pts)


@dataclass(frozen=True)
class RegulationReport:
    line_regulation_pct_per_v: float
    delta_vi: float
    delta_vo: float
    vo_ref: float
    max_pu: float
    verdict: str  # "compliant" | "overvoltage"


def line_regulation(
    s: SweepResult, nominal_v: float | None = None, overvoltage_pu: float = 1.1
) -> RegulationReport:
    """Span line regulation over the converged sweep points.

    max_pu is the worst output in per-unit of nominal_v (Vo_ref when not
    given). Sweep points are steady states, so any point above the
    overvoltage threshold is a sustained event and flips the verdict.
    """
    pts = [p for p in s.points if p.converged]
    if len(pts) < 2:
        raise InsufficientPointsError(
            f"line regulation needs at least 2 converged points, got {len(pts)}"
        )
    vi = np.array([p.input_v for p in pts])
    vo = np.array([p.output_v for p in pts])
    delta_vi = float(vi.max() - vi.min())
    delta_vo = float(vo.max() - vo.min())
    if delta_vi == 0.0:
        raise InsufficientPointsError("all converged points share one input level")

    med = float(np.median(vi))
    ref_idx = min(range(len(pts)), key=lambda k: (abs(vi[k] - med), vi[k]))
    vo_ref = float(vo[ref_idx])
    if vo_ref == 0.0:
        raise ValueError("reference output is 0 V; line regulation is undefined")

    lr = delta_vo / (delta_vi * abs(vo_ref)) * 100.0
    nominal = abs(vo_ref) if nominal_v is None else float(nominal_v)
    if nominal <= 0:
        raise ValueError(f"nominal voltage must be positive, got {nominal}")
    max_pu = float(vo.max()) / nominal
    verdict = "overvoltage" if max_pu > overvoltage_pu else "compliant"
    return RegulationReport(lr, delta_vi, delta_vo, vo_ref, max_pu, verdict)


@dataclass(frozen=True)
class Ieee1159Config:
    nominal_v: float
    overvoltage_pu: float = 1.1
    min_duration: float = 60.0

    def __post_init__(self):
        if self.nominal_v <= 0 or self.overvoltage_pu <= 0 or self.min_duration < 0:
            raise ValueError("nominal_v and overvoltage_pu must be positive")


@dataclass(frozen=True)
class OvervoltageAssessment:
    verdict: str  # "compliant" | "overvoltage"
    max_pu: float
    note: str = ""


def ieee1159_overvoltage(times, volts, cfg: Ieee1159Config) -> OvervoltageAssessment:
    """Sustained-overvoltage check on a sampled voltage series.

    A contiguous run of samples above overvoltage_pu * nominal_v counts as
    an event when the run spans at least min_duration seconds; shorter
    excursions stay compliant but are called out in the note.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(volts, dtype=float)
    if t.size == 0 or v.size == 0:
        raise EmptySeriesError("overvoltage assessment needs at least one sample")
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and volts must be matching 1-D arrays")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise ValueError("series contains NaN or Inf")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")

    max_pu = float(v.max()) / cfg.nominal_v
    threshold = cfg.overvoltage_pu * cfg.nominal_v
    above = v > threshold
    longest = 0.0
    run_start = None
    for k in range(t.size):
        if above[k] and run_start is None:
            run_start = k
        if run_start is not None and (not above[k] or k == t.size - 1):
            end = k if above[k] else k - 1
            longest = max(longest, float(t[end] - t[run_start]))
            run_start = None
    if longest >= cfg.min_duration and max_pu > cfg.overvoltage_pu:
        return OvervoltageAssessment(
            "overvoltage",
            max_pu,
            f"sustained {longest:.6g} s above {cfg.overvoltage_pu} pu",
        )
    if max_pu > cfg.overvoltage_pu:
        return OvervoltageAssessment(
            "compliant",
            max_pu,
            f"excursion above {cfg.overvoltage_pu} pu lasted {longest:.6g} s, "
            f"shorter than min_duration {cfg.min_duration:.6g} s",
        )
    return OvervoltageAssessment("compliant", max_pu)


def steady_state_voltage(w: Waveform, node: str, window: float) -> tuple[float, float]:
    """(mean, peak-to-peak ripple) over the trailing window of a waveform."""
    series = w.voltage(node)
    if window <= 0 or not math.isfinite(window):
        raise ValueError(f"window must be positive and finite, got {window}")
    span = float(w.times[-1] - w.times[0])
    if window > span and w.times.size > 1:
        raise WindowTooLongError(f"window {window:.6g} s exceeds waveform span {span:.6g} s")
    cutoff = w.times[-1] - window - 1e-15
    tail = series[w.times >= cutoff]
    return float(tail.mean()), float(tail.max() - tail.min())


# Component value ranges the study refuses to leave (engineering envelope
# of the parts this tool is meant to rank).
_STUDY_RANGES = {
    "bv": (4.7, 600.0),
    "resistance": (1.0, 1000.0),
}
_STUDY_CAP_RANGES = ((20e-9, 150e-9), (33e-6, 150e-6))


def _check_range(kind: str, param: str, value) -> None:
    if kind in (DIODE, ZENER) and param == "bv":
        lo, hi = _STUDY_RANGES["bv"]
        if not (lo <= value <= hi):
            raise ValueError(f"bv={value} outside studied range [{lo}, {hi}]")
    elif kind == RESISTOR and param == "value":
        lo, hi = _STUDY_RANGES["resistance"]
        if not (lo <= value <= hi):
            raise ValueError(f"resistance {value} outside studied range [{lo}, {hi}]")
    elif kind == CAPACITOR and param == "value":
        if not any(lo <= value <= hi for lo, hi in _STUDY_CAP_RANGES):
            ranges = " or ".join(f"[{lo:g}, {hi:g}]" for lo, hi in _STUDY_CAP_RANGES)
            raise ValueError(f"capacitance {value} outside studied ranges {ranges}")
    elif kind == CAPACITOR and param == "type":
        if value not in ("electrolytic", "polymer"):
            raise ValueError(f"unknown capacitor type {value!r}")


def _with_param(base: Netlist, component: str, param: str, value) -> Netlist:
    comp = base.component(component)
    m = comp.model
    kind = comp.kind
    _check_range(kind, param, value)
    if kind == RESISTOR:
        fields = {"value": "resistance", "prate": "rated_power"}
    elif kind == CAPACITOR:
        if param == "type":
            # A dielectric swap is a different part: instance esr/rleak
            # overrides do not carry over, the new family defaults apply.
            new = CapacitorModel(m.capacitance, dielectric=value)
            return with_component(base, replace(comp, model=new))
        fields = {"value": "capacitance", "esr": "esr", "rleak": "rleak"}
    elif kind in (DIODE, ZENER):
        fields = {"is": "is_sat", "n": "n_ideality", "bv": "breakdown_v"}
    elif kind == BJT:
        fields = {"bf": "beta_f", "is": "is_sat"}
    else:
        raise ValueError(f"cannot study parameters of a {kind}")
    if param not in fields:
        raise ValueError(f"unknown parameter {param!r} for {kind} {component!r}")
    new = replace(m, **{fields[param]: value})
    return with_component(base, replace(comp, model=new))


@dataclass(frozen=True)
class StudyRow:
    value: object  # the studied setting (float, or str for dielectric type)
    max_abs_deviation: float
    line_regulation_pct_per_v: float
    ok: bool  # every sweep point converged and regulation was computable




def parameter_study(
    base: Netlist,
    component: str,
    param: str,
    values,
    *,
    source: str,
    start: float,
    stop: float,
    step: float,
    output_node: str,
    target_v: float,
    opts: SolverOptions | None = None,
) -> list[StudyRow]:
    """Rank candidate values of one component parameter over an input sweep.

    Each candidate is scored by its worst |Vout - target_v| over converged
    sweep points. Deviations closer together than the Newton step tolerance
    (vntol + reltol*|target|) are below the solver's guaranteed resolution
    and count as tied; ties break toward the smaller line regulation, then
    the order the values were given. Candidates whose sweep fails anywhere
    sink to the bottom with an infinite deviation.
    """
    if not values:
        raise ValueError("parameter study needs at least one candidate value")
    o = opts or SolverOptions()
    quantum = o.vntol + o.reltol * abs(target_v)
    rows = []
    for order, value in enumerate(values):
        variant = _with_param(base, component, param, value)
        data = dc_sweep(variant, source, start, stop, step, opts)
        res = sweep_result(data, output_node)
        converged = [p for p in res.points if p.converged]
        all_ok = len(converged) == len(res.points)
        if converged:
            dev = max(abs(p.output_v - target_v) for p in converged)
        else:
            dev = math.inf
        try:
            lr = line_regulation(res).line_regulation_pct_per_v
        except (InsufficientPointsError, ValueError):
            lr = math.inf
            all_ok = False
        if not all_ok:
            dev = math.inf
        rows.append((dev, lr, order, StudyRow(value, dev, lr, all_ok)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    ranked: list[StudyRow] = []
    i = 0
    while i < len(rows):
        # the leader anchors its own group unconditionally: for failed
        # candidates the score is inf and inf - inf is nan, which must not
        # stall the scan
        j = i + 1
        while j < len(rows) and rows[j][0] - rows[i][0] <= quantum:
            j += 1
        group = sorted(rows[i:j], key=lambda r: (r[1], r[2]))
        ranked.extend(r[3] for r in group)
        i = j
    return ranked


@dataclass(frozen=True)
class RpmVoltageMap:
    """Alternator speed to system input voltage, linearly interpolated."""

    rpm: np.ndarray
    volts: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rpm, dtype=float)
        v = np.asarray(self.volts, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 2:
            raise ValueError("need matching 1-D rpm/volts arrays with >= 2 breakpoints")
        if np.any(np.diff(r) <= 0):
            raise ValueError("rpm breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v)) and np.all(v > 0)):
            raise ValueError("voltages must be finite and positive")
        object.__setattr__(self, "rpm", r)
        object.__setattr__(self, "volts", v)

    @classmethod
    def from_csv(cls, path) -> "RpmVoltageMap":
        rpm, volts = [], []
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
        if not rows or [c.strip().casefold() for c in rows[0][:2]] != ["rpm", "volts"]:
            raise ValueError(f"{path}: expected header 'rpm,volts'")
        for row in rows[1:]:
            rpm.append(float(row[0]))
            volts.append(float(row[1]))
        return cls(np.array(rpm), np.array(volts))


class InputVoltage(NamedTuple):
    volts: float
    clamped: bool


def rpm_to_input_voltage(m: RpmVoltageMap, rpm: float) -> InputVoltage:
    clamped = rpm < m.rpm[0] or rpm > m.rpm[-1]
    return InputVoltage(float(np.interp(rpm, m.rpm, m.volts)), bool(clamped))


@dataclass(frozen=True)
class VehicleRow:
    rpm: float
    input_v: float
    output_v: float
    line_regulation_pct_per_v: float
    clamped: bool
    converged: bool


@dataclass(frozen=True)
class VehicleReport:
    """Regulator response across an engine speed profile.

    Per-point line regulation is taken against the first grid point (idle),
    whose regulated output is the reference. The idle point itself reports
    0. Spreads cover converged points only.
    """

    rows: tuple[VehicleRow, ...]
    unregulated_spread: float
    regulated_spread: float
    vo_ref: float
    insufficient: bool  # fewer than 2 usable points: spreads not meaningful


def vehicle_experiment(
    n: Netlist,
    rpm_map: RpmVoltageMap,
    rpm_grid,
    source: str,
    output_node: str,
    opts: SolverOptions | None = None,
) -> VehicleReport:
    grid = [float(r) for r in rpm_grid]
    if not grid:
        raise ValueError("rpm grid must not be empty")
    rows: list[VehicleRow] = []
    idle_vi = idle_vo = None
    for rpm in grid:
        vi, clamped = rpm_to_input_voltage(rpm_map, rpm)
        variant = with_source_dc(n, source, vi)
        try:
            op = dc_operating_point(variant, opts)
            vo = op.voltage(output_node)
            converged = True
        except NoConvergenceError:
            vo = math.nan
            converged = False
        if idle_vi is None and converged:
            idle_vi, idle_vo = vi, vo
        if not converged or idle_vo in (None, 0.0):
            lr = math.nan if not converged else 0.0
        elif vi == idle_vi:
            lr = 0.0
        else:
            lr = (vo - idle_vo) / ((vi - idle_vi) * abs(idle_vo)) * 100.0
        rows.append(VehicleRow(rpm, vi, vo, lr, clamped, converged))

    good = [r for r in rows if r.converged]
    insufficient = len(good) < 2
    if good:
        vis = [r.input_v for r in good]
        vos = [r.output_v for r in good]
        unreg = max(vis) - min(vis)
        reg = max(vos) - min(vos)
    else:
        unreg = reg = math.nan
    return VehicleReport(
        tuple(rows), unreg, reg, math.nan if idle_vo is None else idle_vo, insufficient
    )


class PowerExcess(NamedTuple):
    component: str
    power_w: float
    rated_w: float


def power_dissipation_check(op: OperatingPoint, n: Netlist) -> list[PowerExcess]:
    """Resistors dissipating above their power rating at this bias."""
    out = []
    for c in n.components:
        if c.kind != RESISTOR:
            continue
        va = op.voltage(c.nodes[0])
        vb = op.voltage(c.nodes[1])
        p = (va - vb) ** 2 / c.model.resistance
        if p > c.model.rated_power:
            out.append(PowerExcess(c.name, p, c.model.rated_power))
    return out

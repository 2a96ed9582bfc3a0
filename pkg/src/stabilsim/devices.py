"""Device models and their small-signal linearizations.

Every nonlinear branch is built from one exponential primitive with the
argument clamped at EXP_CLAMP and continued linearly beyond it, so currents
and conductances stay finite for any bias the Newton loop wanders through
while remaining C1-continuous and strictly monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Junction law constants. vt is kT/q near 300 K; the clamp keeps exp() well
# inside double range (exp(80) ~ 5.5e34) without breaking monotonicity.
VT = 0.02585
EXP_CLAMP = 80.0

# Per-dielectric engineering defaults (ohms). Not measurement data; both
# dielectrics are polar parts.
CAP_DEFAULTS = {
    "electrolytic": {"esr": 0.5, "rleak": 1e6},
    "polymer": {"esr": 0.02, "rleak": 1e8},
}


def expc(x: float) -> float:
    """exp(x) clamped: linear continuation exp(c)*(1 + x - c) above x = c."""
    if x > EXP_CLAMP:
        return math.exp(EXP_CLAMP) * (1.0 + x - EXP_CLAMP)
    return math.exp(x)


def dexpc(x: float) -> float:
    """Derivative of expc."""
    if x > EXP_CLAMP:
        return math.exp(EXP_CLAMP)
    return math.exp(x)


@dataclass(frozen=True)
class ResistorModel:
    resistance: float
    rated_power: float = 0.25

    def __post_init__(self):
        if not (math.isfinite(self.resistance) and self.resistance > 0):
            raise ValueError(f"resistance must be finite and > 0, got {self.resistance}")
        if not (math.isfinite(self.rated_power) and self.rated_power > 0):
            raise ValueError(f"rated power must be finite and > 0, got {self.rated_power}")


@dataclass(frozen=True)
class CapacitorModel:
    capacitance: float
    dielectric: str = "electrolytic"
    esr: float | None = None
    rleak: float | None = None

    def __post_init__(self):
        if self.dielectric not in CAP_DEFAULTS:
            raise ValueError(f"unknown dielectric {self.dielectric!r}")
        if not (math.isfinite(self.capacitance) and self.capacitance > 0):
            raise ValueError(f"capacitance must be finite and > 0, got {self.capacitance}")
        defaults = CAP_DEFAULTS[self.dielectric]
        if self.esr is None:
            object.__setattr__(self, "esr", defaults["esr"])
        if self.rleak is None:
            object.__setattr__(self, "rleak", defaults["rleak"])
        if not (math.isfinite(self.esr) and self.esr >= 0):
            raise ValueError(f"esr must be finite and >= 0, got {self.esr}")
        if not (math.isfinite(self.rleak) and self.rleak > 0):
            raise ValueError(f"rleak must be finite and > 0, got {self.rleak}")

    @property
    def polar(self) -> bool:
        # Both supported dielectrics are polarized parts.
        return True


@dataclass(frozen=True)
class DiodeModel:
    is_sat: float = 1e-12
    n_ideality: float = 1.0
    vt: float = VT
    breakdown_v: float | None = None  # set only for Zener behaviour

    def __post_init__(self):
        if not (math.isfinite(self.is_sat) and self.is_sat > 0):
            raise ValueError(f"is_sat must be finite and > 0, got {self.is_sat}")
        if not (1.0 <= self.n_ideality <= 2.0):
            raise ValueError(f"ideality must lie in [1, 2], got {self.n_ideality}")
        if not (math.isfinite(self.vt) and self.vt > 0):
            raise ValueError(f"vt must be finite and > 0, got {self.vt}")
        if self.breakdown_v is not None and not (
            math.isfinite(self.breakdown_v) and self.breakdown_v > 0
        ):
            raise ValueError(f"breakdown_v must be finite and > 0, got {self.breakdown_v}")


@dataclass(frozen=True)
class BjtModel:
    is_sat: float = 1e-13
    beta_f: float = 50.0
    beta_r: float = 2.0
    vt: float = VT

    def __post_init__(self):
        if not (math.isfinite(self.is_sat) and self.is_sat > 0):
            raise ValueError(f"is_sat must be finite and > 0, got {self.is_sat}")
        if not (math.isfinite(self.beta_f) and self.beta_f > 0):
            raise ValueError(f"beta_f must be finite and > 0, got {self.beta_f}")
        if not (math.isfinite(self.beta_r) and self.beta_r > 0):
            raise ValueError(f"beta_r must be finite and > 0, got {self.beta_r}")
        if not (math.isfinite(self.vt) and self.vt > 0):
            raise ValueError(f"vt must be finite and > 0, got {self.vt}")


@dataclass(frozen=True)
class SourceModel:
    """DC level or piecewise-linear V(t); PWL holds its end values outside the range."""

    dc: float = 0.0
    pwl: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if not math.isfinite(self.dc):
            raise ValueError("dc value must be finite")
        if self.pwl is not None:
            if len(self.pwl) < 1:
                raise ValueError("pwl needs at least one (t, v) pair")
            times = [t for t, _ in self.pwl]
            if any(not math.isfinite(t) or not math.isfinite(v) for t, v in self.pwl):
                raise ValueError("pwl pairs must be finite")
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("pwl times must be strictly increasing")

    def value_at(self, t: float) -> float:
        if self.pwl is None:
            return self.dc
        ts = [p[0] for p in self.pwl]
        vs = [p[1] for p in self.pwl]
        return float(np.interp(t, ts, vs))


def _junction(v: float, is_sat: float, nvt: float) -> tuple[float, float]:
    """Shockley branch: returns (current, conductance) at bias v."""
    e = expc(v / nvt)
    return is_sat * (e - 1.0), is_sat * dexpc(v / nvt) / nvt


def _diode_branch(v: float, is_sat: float, nvt: float, bv: float) -> tuple[float, float]:
    """Junction plus optional reverse-breakdown branch (bv <= 0 disables it)."""
    i, g = _junction(v, is_sat, nvt)
    if bv > 0.0:
        i -= is_sat * expc(-(v + bv) / nvt)
        g += is_sat * dexpc(-(v + bv) / nvt) / nvt
    return i, g


def diode_current(v: float, m: DiodeModel) -> float:
    i, _ = _junction(v, m.is_sat, m.n_ideality * m.vt)
    return i


def diode_conductance(v: float, m: DiodeModel) -> float:
    _, g = _junction(v, m.is_sat, m.n_ideality * m.vt)
    return g


def zener_current(v: float, m: DiodeModel) -> float:
    """Forward Shockley branch plus the reverse-breakdown exponential."""
    if m.breakdown_v is None:
        raise ValueError("zener_current requires a model with breakdown_v set")
    i, _ = _diode_branch(v, m.is_sat, m.n_ideality * m.vt, m.breakdown_v)
    return i


def zener_conductance(v: float, m: DiodeModel) -> float:
    if m.breakdown_v is None:
        raise ValueError("zener_conductance requires a model with breakdown_v set")
    _, g = _diode_branch(v, m.is_sat, m.n_ideality * m.vt, m.breakdown_v)
    return g


def bjt_currents(vbe: float, vbc: float, m: BjtModel) -> tuple[float, float, float]:
    """Ebers-Moll terminal currents (ic, ib, ie); ie = ic + ib exactly."""
    ef = expc(vbe / m.vt)
    er = expc(vbc / m.vt)
    ic = m.is_sat * (ef - er) - (m.is_sat / m.beta_r) * (er - 1.0)
    ib = (m.is_sat / m.beta_f) * (ef - 1.0) + (m.is_sat / m.beta_r) * (er - 1.0)
    return ic, ib, ic + ib


def _bjt_linearized_raw(vbe: float, vbc: float, is_sat: float, bf: float, br: float, vt: float):
    """Ebers-Moll currents plus partials wrt (vbe, vbc), raw parameters."""
    ef = expc(vbe / vt)
    er = expc(vbc / vt)
    ic = is_sat * (ef - er) - (is_sat / br) * (er - 1.0)
    ib = (is_sat / bf) * (ef - 1.0) + (is_sat / br) * (er - 1.0)
    gf = is_sat * dexpc(vbe / vt) / vt
    gr = is_sat * dexpc(vbc / vt) / vt
    dic_dvbe = gf
    dic_dvbc = -gr * (1.0 + 1.0 / br)
    dib_dvbe = gf / bf
    dib_dvbc = gr / br
    return ic, ib, ic + ib, dic_dvbe, dic_dvbc, dib_dvbe, dib_dvbc


def _bjt_linearized(vbe: float, vbc: float, m: BjtModel):
    return _bjt_linearized_raw(vbe, vbc, m.is_sat, m.beta_f, m.beta_r, m.vt)


def capacitor_companion(
    m: CapacitorModel, v_prev: float, i_prev: float, dt: float, method: str = "TRAP"
) -> tuple[float, float]:
    """Norton companion (geq, ieq) of the ideal capacitance for one time step.

    BE:   geq = C/dt,  ieq = geq*v_prev
    TRAP: geq = 2C/dt, ieq = geq*v_prev + i_prev
    esr and rleak are not folded in here; the engine stamps them as plain
    resistive elements around this companion.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    if method == "BE":
        geq = m.capacitance / dt
        return geq, geq * v_prev
    if method == "TRAP":
        geq = 2.0 * m.capacitance / dt
        return geq, geq * v_prev + i_prev
    raise ValueError(f"unknown integration method {method!r}")


@dataclass(frozen=True)
class Stamp:
    """Linearized contribution of one device at a bias point.

    conductance[j, l] = d(I_j)/d(V_l) and injection[j] = I_j(v0) - sum_l
    conductance[j, l] * v0[l], where I_j is the current flowing INTO the
    device at terminal j. Assembly adds conductance into the nodal matrix
    and subtracts injection from the rhs.
    """

    nodes: tuple[str, ...]
    conductance: np.ndarray = field(repr=False)
    injection: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = len(self.nodes)
        g = np.asarray(self.conductance, dtype=float)
        inj = np.asarray(self.injection, dtype=float)
        if g.shape != (k, k) or inj.shape != (k,):
            raise ValueError("stamp shapes must be (k, k) and (k,)")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(inj))):
            raise ValueError("stamp entries must be finite")
        object.__setattr__(self, "conductance", g)
        object.__setattr__(self, "injection", inj)


def _two_terminal_stamp(nodes, g, i, v) -> Stamp:
    gm = np.array([[g, -g], [-g, g]])
    ieq = i - g * v
    return Stamp(tuple(nodes), gm, np.array([ieq, -ieq]))


def linearize(kind: str, model, nodes: tuple[str, ...], voltages: dict[str, float]) -> Stamp:
    """First-order stamp of one device at the given terminal voltages.

    kind is one of "resistor", "capacitor", "diode", "zener", "bjt". For a
    capacitor this is the DC view: the ideal capacitance is open and only
    rleak conducts. Terminal order follows the netlist declaration
    (capacitor/resistor: n+, n-; diode: anode, cathode; bjt: c, b, e).
    """
    v = [voltages[n] for n in nodes]
    if kind == "resistor":
        g = 1.0 / model.resistance
        vd = v[0] - v[1]
        return _two_terminal_stamp(nodes, g, g * vd, vd)
    if kind == "capacitor":
        g = 1.0 / model.rleak
        vd = v[0] - v[1]
        return _two_terminal_stamp(nodes, g, g * vd, vd)
    if kind == "diode":
        vd = v[0] - v[1]
        return _two_terminal_stamp(nodes, diode_conductance(vd, model), diode_current(vd, model), vd)
    if kind == "zener":
        vd = v[0] - v[1]
        return _two_terminal_stamp(nodes, zener_conductance(vd, model), zener_current(vd, model), vd)
    if kind == "bjt":
        vc, vb, ve = v
        ic, ib, ie, dic_dvbe, dic_dvbc, dib_dvbe, dib_dvbc = _bjt_linearized(vb - ve, vb - vc, model)
        # Rows: currents into (c, b, e); columns: d/dvc, d/dvb, d/dve.
        gm = np.array(
            [
                [-dic_dvbc, dic_dvbe + dic_dvbc, -dic_dvbe],
                [-dib_dvbc, dib_dvbe + dib_dvbc, -dib_dvbe],
                [dic_dvbc + dib_dvbc, -(dic_dvbe + dic_dvbc + dib_dvbe + dib_dvbc), dic_dvbe + dib_dvbe],
            ]
        )
        cur = np.array([ic, ib, -ie])
        return Stamp(tuple(nodes), gm, cur - gm @ np.array(v))
    raise ValueError(f"no linearization for kind {kind!r}")

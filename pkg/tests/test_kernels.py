"""Kernel backend tests: dense LU and nonlinear stamping.

Both backends must agree with each other and with numpy's reference solver.
The random systems are seeded so failures are reproducible.
"""

import numpy as np
import pytest

from stabilsim import _kernels, devices
from stabilsim.errors import SingularMatrixError
from stabilsim.netlist import BJT, DIODE, ZENER


@pytest.fixture(params=_kernels.BACKENDS)
def backend(request):
    if request.param == "compiled" and not _kernels.compiled_available():
        pytest.skip("compiled extension not built")
    previous = _kernels.BACKEND
    _kernels.use_backend(request.param)
    yield request.param
    _kernels.use_backend(previous)


# --- lu_solve ---------------------------------------------------------------

def test_identity(backend):
    a = np.eye(3)
    b = np.array([1.0, 2.0, 3.0])
    assert _kernels.lu_solve(a, b).tolist() == [1.0, 2.0, 3.0]


def test_diagonal(backend):
    x = _kernels.lu_solve(np.diag([2.0, 4.0]), np.array([2.0, 4.0]))
    assert x.tolist() == [1.0, 1.0]


def test_singular_identical_rows(backend):
    with pytest.raises(SingularMatrixError):
        _kernels.lu_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 2.0]))


def test_singular_zero_pivot_column(backend):
    with pytest.raises(SingularMatrixError):
        _kernels.lu_solve(np.array([[0.0, 0.0], [0.0, 1.0]]), np.array([1.0, 1.0]))


def test_partial_pivoting_keeps_precision(backend):
    # without row exchange the 1e-20 pivot wipes out the second equation
    a = np.array([[1e-20, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 2.0])
    x = _kernels.lu_solve(a.copy(), b.copy())
    expected = np.linalg.solve(a, b)
    assert np.allclose(x, expected, rtol=1e-12)


def test_wide_scale_spread_is_not_flagged_singular(backend):
    # legitimate circuit Jacobians mix clamp-regime and leakage conductances;
    # the pivot test must be scale-invariant
    a = np.diag([1e27, 1e-8])
    x = _kernels.lu_solve(a.copy(), np.array([1e27, 1e-8]))
    assert np.allclose(x, [1.0, 1.0], rtol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 5, 12, 30])
def test_random_systems_small_residual(backend, n):
    rng = np.random.default_rng(20240 + n)
    a = rng.normal(size=(n, n)) + n * np.eye(n)
    b = rng.normal(size=n)
    x = _kernels.lu_solve(a.copy(), b.copy())
    residual = np.abs(a @ x - b).max()
    assert residual <= 1e-9 * max(1.0, np.abs(b).max())


@pytest.mark.parametrize("n", [3, 8, 17])
def test_matches_numpy_solve(backend, n):
    rng = np.random.default_rng(7 + n)
    a = rng.normal(size=(n, n)) + n * np.eye(n)
    b = rng.normal(size=n)
    x = _kernels.lu_solve(a.copy(), b.copy())
    assert np.allclose(x, np.linalg.solve(a, b), rtol=1e-10)


def test_backends_agree():
    if not _kernels.compiled_available():
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(99)
    a = rng.normal(size=(9, 9)) + 9 * np.eye(9)
    b = rng.normal(size=9)
    previous = _kernels.BACKEND
    try:
        _kernels.use_backend("python")
        xp = _kernels.lu_solve(a.copy(), b.copy())
        _kernels.use_backend("compiled")
        xc = _kernels.lu_solve(a.copy(), b.copy())
    finally:
        _kernels.use_backend(previous)
    assert np.allclose(xp, xc, rtol=1e-14, atol=0.0)


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        _kernels.use_backend("fortran")


# --- stamp_nonlinear ---------------------------------------------------------

def _diode_row(a, c, model):
    bv = model.breakdown_v if model.breakdown_v is not None else 0.0
    return [float(a), float(c), model.is_sat, model.n_ideality * model.vt, bv]


def _bjt_row(c, b, e, model):
    return [float(c), float(b), float(e), model.is_sat, model.beta_f, model.beta_r, model.vt]


def test_stamp_single_diode_matches_linearize(backend):
    m = devices.DiodeModel()
    g = np.zeros((1, 1))
    rhs = np.zeros(1)
    _kernels.stamp_nonlinear(
        g, rhs, np.array([0.6]), np.array([_diode_row(0, -1, m)]), np.zeros((0, 7))
    )
    s = devices.linearize(DIODE, m, ("a", "0"), {"a": 0.6, "0": 0.0})
    assert g[0, 0] == pytest.approx(s.conductance[0, 0], rel=1e-14)
    assert rhs[0] == pytest.approx(-s.injection[0], rel=1e-14)


def test_stamp_dual_route_diode_zener_bjt(backend):
    """Scatter the same devices through linearize() by hand and through the
    kernel; the assembled (G, rhs) pairs must match."""
    x = np.array([0.72, 0.1, -12.05, 5.0])
    names = ("n0", "n1", "n2", "n3")
    volts = dict(zip(names, x))
    volts["0"] = 0.0

    diode = devices.DiodeModel(is_sat=1e-9)
    zener = devices.DiodeModel(breakdown_v=11.6)
    bjt = devices.BjtModel(beta_f=80.0)

    diode_rows = np.array(
        [_diode_row(0, 1, diode), _diode_row(-1, 2, zener)]
    )
    bjt_rows = np.array([_bjt_row(3, 0, 1, bjt)])

    g_kernel = np.zeros((4, 4))
    rhs_kernel = np.zeros(4)
    _kernels.stamp_nonlinear(g_kernel, rhs_kernel, x, diode_rows, bjt_rows)

    g_ref = np.zeros((4, 4))
    rhs_ref = np.zeros(4)

    def scatter(stamp, idx):
        for i, gi in enumerate(idx):
            if gi < 0:
                continue
            rhs_ref[gi] -= stamp.injection[i]
            for j, gj in enumerate(idx):
                if gj >= 0:
                    g_ref[gi, gj] += stamp.conductance[i, j]

    scatter(devices.linearize(DIODE, diode, ("n0", "n1"), volts), (0, 1))
    scatter(devices.linearize(ZENER, zener, ("0", "n2"), volts), (-1, 2))
    scatter(devices.linearize(BJT, bjt, ("n3", "n0", "n1"), volts), (3, 0, 1))

    assert np.allclose(g_kernel, g_ref, rtol=1e-13, atol=1e-300)
    assert np.allclose(rhs_kernel, rhs_ref, rtol=1e-13, atol=1e-300)


def test_stamp_zener_breakdown_branch(backend):
    # bv > 0 enables the reverse branch; the conducting zener must add
    # serious conductance at a node 0.6 V past the knee
    z = devices.DiodeModel(breakdown_v=11.6)
    g = np.zeros((1, 1))
    rhs = np.zeros(1)
    _kernels.stamp_nonlinear(
        g, rhs, np.array([-12.2]), np.array([_diode_row(0, -1, z)]), np.zeros((0, 7))
    )
    s = devices.linearize(ZENER, z, ("a", "0"), {"a": -12.2, "0": 0.0})
    assert g[0, 0] == pytest.approx(s.conductance[0, 0], rel=1e-13)
    assert g[0, 0] > 0.1  # conducting hard


def test_stamp_ground_terminals_are_skipped(backend):
    # every -1 index must leave the system untouched except through the
    # still-live terminal
    m = devices.DiodeModel()
    g = np.zeros((2, 2))
    rhs = np.zeros(2)
    _kernels.stamp_nonlinear(
        g,
        rhs,
        np.array([0.6, 0.0]),
        np.array([_diode_row(0, -1, m)]),
        np.zeros((0, 7)),
    )
    assert g[1, 1] == 0.0 and g[0, 1] == 0.0 and g[1, 0] == 0.0
    assert rhs[1] == 0.0

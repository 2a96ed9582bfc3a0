"""Pure-Python kernel backend.

Semantics must match stabilsim._kernels._core exactly; the device math is
taken straight from stabilsim.devices so there is a single Python source of
truth and the compiled kernels are pinned to it by equivalence tests.
"""

from __future__ import annotations

import numpy as np

from ..devices import _bjt_linearized_raw, _diode_branch
from ..errors import SingularMatrixError

# A pivot below this fraction of its own row's max-norm is singular. The
# bound is per row, not global: circuit Jacobians legitimately mix
# conductances tens of decades apart, and a global scale would flag healthy
# small-signal rows as rank-deficient.
SINGULARITY_RTOL = 1e-13


def lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ x = b by LU with partial pivoting; a and b are destroyed.

    Raises SingularMatrixError when the best available pivot falls below
    SINGULARITY_RTOL times the max-norm of the pivot's working row.
    """
    n = a.shape[0]
    if n == 0:
        return b
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        pivot = abs(a[p, k])
        rownorm = float(np.max(np.abs(a[p, k:])))
        if pivot < SINGULARITY_RTOL * rownorm or pivot == 0.0:
            raise SingularMatrixError(f"pivot {pivot:.3e} below threshold at column {k}")
        if p != k:
            a[[k, p], :] = a[[p, k], :]
            b[k], b[p] = b[p], b[k]
        if k + 1 < n:
            a[k + 1 :, k] /= a[k, k]
            a[k + 1 :, k + 1 :] -= np.outer(a[k + 1 :, k], a[k, k + 1 :])
            b[k + 1 :] -= a[k + 1 :, k] * b[k]
    for k in range(n - 1, -1, -1):
        b[k] = (b[k] - a[k, k + 1 :] @ b[k + 1 :]) / a[k, k]
    return b


def stamp_nonlinear(
    g: np.ndarray,
    rhs: np.ndarray,
    x: np.ndarray,
    diodes: np.ndarray,
    bjts: np.ndarray,
) -> None:
    """Accumulate linearized nonlinear-device stamps at bias x, in place.

    diodes rows: [anode, cathode, is_sat, n*vt, bv] with node index -1 for
    ground and bv <= 0 meaning no breakdown branch. bjts rows:
    [collector, base, emitter, is_sat, beta_f, beta_r, vt].
    """
    for row in diodes:
        ia, ic = int(row[0]), int(row[1])
        va = x[ia] if ia >= 0 else 0.0
        vc = x[ic] if ic >= 0 else 0.0
        v = va - vc
        i, gd = _diode_branch(v, row[2], row[3], row[4])
        ieq = i - gd * v
        if ia >= 0:
            g[ia, ia] += gd
            rhs[ia] -= ieq
            if ic >= 0:
                g[ia, ic] -= gd
        if ic >= 0:
            g[ic, ic] += gd
            rhs[ic] += ieq
            if ia >= 0:
                g[ic, ia] -= gd

    for row in bjts:
        nc, nb, ne = int(row[0]), int(row[1]), int(row[2])
        vc = x[nc] if nc >= 0 else 0.0
        vb = x[nb] if nb >= 0 else 0.0
        ve = x[ne] if ne >= 0 else 0.0
        ic, ib, ie, dic_dvbe, dic_dvbc, dib_dvbe, dib_dvbc = _bjt_linearized_raw(
            vb - ve, vb - vc, row[3], row[4], row[5], row[6]
        )
        # Rows are currents into (c, b, e); columns d/dvc, d/dvb, d/dve.
        gm = (
            (-dic_dvbc, dic_dvbe + dic_dvbc, -dic_dvbe),
            (-dib_dvbc, dib_dvbe + dib_dvbc, -dib_dvbe),
            (
                dic_dvbc + dib_dvbc,
                -(dic_dvbe + dic_dvbc + dib_dvbe + dib_dvbc),
                dic_dvbe + dib_dvbe,
            ),
        )
        cur = (ic, ib, -ie)
        nodes = (nc, nb, ne)
        volts = (vc, vb, ve)
        for j in range(3):
            nj = nodes[j]
            if nj < 0:
                continue
            inj = cur[j]
            for l in range(3):
                inj -= gm[j][l] * volts[l]
                nl = nodes[l]
                if nl >= 0:
                    g[nj, nl] += gm[j][l]
            rhs[nj] -= inj

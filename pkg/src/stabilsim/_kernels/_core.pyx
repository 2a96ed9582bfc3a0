# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend: dense LU solve and nonlinear device stamping.

Mirrors stabilsim._kernels._ref operation for operation; the reference
backend is the semantic authority and the equivalence tests pin this module
to it.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

from stabilsim.errors import SingularMatrixError

cnp.import_array()

cdef double SINGULARITY_RTOL = 1e-13
cdef double EXP_CLAMP = 80.0
cdef double EXP_AT_CLAMP = exp(80.0)


cdef inline double _expc(double x) noexcept nogil:
    if x > EXP_CLAMP:
        return EXP_AT_CLAMP * (1.0 + x - EXP_CLAMP)
    return exp(x)


cdef inline double _dexpc(double x) noexcept nogil:
    if x > EXP_CLAMP:
        return EXP_AT_CLAMP
    return exp(x)


def lu_solve(double[:, ::1] a, double[::1] b):
    """Solve a @ x = b in place (both buffers are destroyed); returns x.

    The singularity bound is per pivot row (pivot vs its own row's
    max-norm), not global: circuit Jacobians legitimately mix conductances
    tens of decades apart.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j, k, p
    cdef double best, tmp, rownorm, l, acc

    if n == 0:
        return np.asarray(b)

    for k in range(n):
        p = k
        best = fabs(a[k, k])
        for i in range(k + 1, n):
            tmp = fabs(a[i, k])
            if tmp > best:
                best = tmp
                p = i
        rownorm = 0.0
        for j in range(k, n):
            tmp = fabs(a[p, j])
            if tmp > rownorm:
                rownorm = tmp
        if best < SINGULARITY_RTOL * rownorm or best == 0.0:
            raise SingularMatrixError(
                f"pivot {best:.3e} below threshold at column {k}"
            )
        if p != k:
            for j in range(n):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
            tmp = b[k]
            b[k] = b[p]
            b[p] = tmp
        for i in range(k + 1, n):
            l = a[i, k] / a[k, k]
            a[i, k] = l
            for j in range(k + 1, n):
                a[i, j] -= l * a[k, j]
            b[i] -= l * b[k]

    for k in range(n - 1, -1, -1):
        acc = b[k]
        for j in range(k + 1, n):
            acc -= a[k, j] * b[j]
        b[k] = acc / a[k, k]
    return np.asarray(b)


def stamp_nonlinear(
    double[:, ::1] g,
    double[::1] rhs,
    double[::1] x,
    double[:, ::1] diodes,
    double[:, ::1] bjts,
):
    """Accumulate nonlinear stamps at bias x, in place; see _ref for layout."""
    cdef Py_ssize_t nd = diodes.shape[0]
    cdef Py_ssize_t nb_ = bjts.shape[0]
    cdef Py_ssize_t r, j, l
    cdef int ia, ic, nodc, nodb, node_, nj, nl
    cdef double va, vc, vb, ve, v, nvt, is_sat, bv, i, gd, ieq
    cdef double bf, br, vt, ef, er, icur, ibase, iemit, gf, gr
    cdef double dic_dvbe, dic_dvbc, dib_dvbe, dib_dvbc, inj
    cdef double gm[3][3]
    cdef double cur[3]
    cdef double volts[3]
    cdef int nodes[3]

    for r in range(nd):
        ia = <int> diodes[r, 0]
        ic = <int> diodes[r, 1]
        is_sat = diodes[r, 2]
        nvt = diodes[r, 3]
        bv = diodes[r, 4]
        va = x[ia] if ia >= 0 else 0.0
        vc = x[ic] if ic >= 0 else 0.0
        v = va - vc
        i = is_sat * (_expc(v / nvt) - 1.0)
        gd = is_sat * _dexpc(v / nvt) / nvt
        if bv > 0.0:
            i -= is_sat * _expc(-(v + bv) / nvt)
            gd += is_sat * _dexpc(-(v + bv) / nvt) / nvt
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

    for r in range(nb_):
        nodc = <int> bjts[r, 0]
        nodb = <int> bjts[r, 1]
        node_ = <int> bjts[r, 2]
        is_sat = bjts[r, 3]
        bf = bjts[r, 4]
        br = bjts[r, 5]
        vt = bjts[r, 6]
        vc = x[nodc] if nodc >= 0 else 0.0
        vb = x[nodb] if nodb >= 0 else 0.0
        ve = x[node_] if node_ >= 0 else 0.0
        ef = _expc((vb - ve) / vt)
        er = _expc((vb - vc) / vt)
        icur = is_sat * (ef - er) - (is_sat / br) * (er - 1.0)
        ibase = (is_sat / bf) * (ef - 1.0) + (is_sat / br) * (er - 1.0)
        iemit = icur + ibase
        gf = is_sat * _dexpc((vb - ve) / vt) / vt
        gr = is_sat * _dexpc((vb - vc) / vt) / vt
        dic_dvbe = gf
        dic_dvbc = -gr * (1.0 + 1.0 / br)
        dib_dvbe = gf / bf
        dib_dvbc = gr / br

        gm[0][0] = -dic_dvbc
        gm[0][1] = dic_dvbe + dic_dvbc
        gm[0][2] = -dic_dvbe
        gm[1][0] = -dib_dvbc
        gm[1][1] = dib_dvbe + dib_dvbc
        gm[1][2] = -dib_dvbe
        gm[2][0] = dic_dvbc + dib_dvbc
        gm[2][1] = -(dic_dvbe + dic_dvbc + dib_dvbe + dib_dvbc)
        gm[2][2] = dic_dvbe + dib_dvbe
        cur[0] = icur
        cur[1] = ibase
        cur[2] = -iemit
        nodes[0] = nodc
        nodes[1] = nodb
        nodes[2] = node_
        volts[0] = vc
        volts[1] = vb
        volts[2] = ve

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

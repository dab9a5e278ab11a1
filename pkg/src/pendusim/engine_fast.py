"""Optional JIT-compiled assembly kernel.

Mirrors the reduced output set of engine.assemble (mass matrix, gravity,
potential, CoM and CoM Jacobian) with explicit loops so numba can compile it.
The numpy engine stays the reference implementation; a parity test keeps the
two within roundoff of each other.  Disable with PENDUSIM_NO_NUMBA=1.
"""

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly by the import
    if os.environ.get("PENDUSIM_NO_NUMBA"):
        raise ImportError("numba disabled by PENDUSIM_NO_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]


@njit(cache=True)
def _core(Q, L, rail, mount, offsets, axes, kmats, kmats2, coms,
          link_inertias, plat_inertia, masses, g0):
    B, N = Q.shape
    n = N - 5
    M = np.zeros((B, N, N))
    g = np.zeros((B, N))
    V = np.zeros(B)
    com = np.zeros((B, 2))
    Jcom = np.zeros((B, 2, N))

    for b in range(B):
        sa, ca = np.sin(Q[b, 0]), np.cos(Q[b, 0])
        sb, cb = np.sin(Q[b, 1]), np.cos(Q[b, 1])
        sg, cg = np.sin(Q[b, 2]), np.cos(Q[b, 2])

        R = np.empty((3, 3))
        R[0, 0] = cg * cb
        R[0, 1] = cg * sb * sa - sg * ca
        R[0, 2] = cg * sb * ca + sg * sa
        R[1, 0] = sg * cb
        R[1, 1] = sg * sb * sa + cg * ca
        R[1, 2] = sg * sb * ca - cg * sa
        R[2, 0] = -sb
        R[2, 1] = cb * sa
        R[2, 2] = cb * ca

        E = np.zeros((3, 3))
        E[0, 0] = R[0, 0]
        E[1, 0] = R[1, 0]
        E[2, 0] = R[2, 0]
        E[0, 1] = -sg
        E[1, 1] = cg
        E[2, 2] = 1.0

        # chain kinematics
        link_R = np.empty((n, 3, 3))
        link_o = np.empty((n, 3))
        link_c = np.empty((n, 3))
        axes_w = np.empty((n, 3))
        p_plat = np.empty(3)
        for r in range(3):
            p_plat[r] = -L * R[r, 2]
        ok = np.empty(3)
        for r in range(3):
            ok[r] = p_plat[r] + R[r, 0] * mount[0] + R[r, 1] * mount[1] + R[r, 2] * mount[2]
        Rk = R.copy()
        for k in range(n):
            for r in range(3):
                ok[r] = (ok[r] + Rk[r, 0] * offsets[k, 0]
                         + Rk[r, 1] * offsets[k, 1] + Rk[r, 2] * offsets[k, 2])
                axes_w[k, r] = (Rk[r, 0] * axes[k, 0] + Rk[r, 1] * axes[k, 1]
                                + Rk[r, 2] * axes[k, 2])
            s, c = np.sin(Q[b, 5 + k]), np.cos(Q[b, 5 + k])
            A = np.empty((3, 3))
            for r in range(3):
                for cc in range(3):
                    A[r, cc] = s * kmats[k, r, cc] + (1.0 - c) * kmats2[k, r, cc]
                A[r, r] += 1.0
            Rn = np.empty((3, 3))
            for r in range(3):
                for cc in range(3):
                    Rn[r, cc] = Rk[r, 0] * A[0, cc] + Rk[r, 1] * A[1, cc] + Rk[r, 2] * A[2, cc]
            Rk = Rn
            for r in range(3):
                link_R[k, r, 0] = Rk[r, 0]
                link_R[k, r, 1] = Rk[r, 1]
                link_R[k, r, 2] = Rk[r, 2]
                link_o[k, r] = ok[r]
                link_c[k, r] = (ok[r] + Rk[r, 0] * coms[k, 0]
                                + Rk[r, 1] * coms[k, 1] + Rk[r, 2] * coms[k, 2])

        nb = 3 + n
        Jv = np.empty((3, N))
        Jw = np.empty((3, N))
        Iw = np.empty((3, 3))
        tmp = np.empty((3, N))
        p = np.empty(3)
        mtot = 0.0
        for i in range(nb):
            mtot += masses[i]

        for body in range(nb):
            m_i = masses[body]
            rotational = body == 0 or body >= 3
            if body == 0:
                for r in range(3):
                    p[r] = p_plat[r]
            elif body <= 2:
                ax = body - 1
                qm = Q[b, 3 + ax]
                for r in range(3):
                    p[r] = p_plat[r] + qm * R[r, ax] + rail * R[r, 2]
            else:
                for r in range(3):
                    p[r] = link_c[body - 3, r]

            for r in range(3):
                for cc in range(N):
                    Jv[r, cc] = 0.0
            # attitude columns: col c = E[:, c] x p
            for cc in range(3):
                e0, e1, e2 = E[0, cc], E[1, cc], E[2, cc]
                Jv[0, cc] = e1 * p[2] - e2 * p[1]
                Jv[1, cc] = e2 * p[0] - e0 * p[2]
                Jv[2, cc] = e0 * p[1] - e1 * p[0]
            if body == 1:
                for r in range(3):
                    Jv[r, 3] = R[r, 0]
            elif body == 2:
                for r in range(3):
                    Jv[r, 4] = R[r, 1]
            elif body >= 3:
                k_body = body - 3
                for j in range(k_body + 1):
                    d0 = p[0] - link_o[j, 0]
                    d1 = p[1] - link_o[j, 1]
                    d2 = p[2] - link_o[j, 2]
                    a0, a1, a2 = axes_w[j, 0], axes_w[j, 1], axes_w[j, 2]
                    Jv[0, 5 + j] = a1 * d2 - a2 * d1
                    Jv[1, 5 + j] = a2 * d0 - a0 * d2
                    Jv[2, 5 + j] = a0 * d1 - a1 * d0

            # accumulate translational terms
            for r in range(N):
                for cc in range(r, N):
                    s = (Jv[0, r] * Jv[0, cc] + Jv[1, r] * Jv[1, cc]
                         + Jv[2, r] * Jv[2, cc])
                    M[b, r, cc] += m_i * s
            for cc in range(N):
                g[b, cc] += m_i * g0 * Jv[2, cc]
                Jcom[b, 0, cc] += m_i * Jv[0, cc]
                Jcom[b, 1, cc] += m_i * Jv[1, cc]
            V[b] += m_i * g0 * p[2]
            com[b, 0] += m_i * p[0]
            com[b, 1] += m_i * p[1]

            if rotational:
                for r in range(3):
                    for cc in range(N):
                        Jw[r, cc] = 0.0
                for r in range(3):
                    Jw[r, 0] = E[r, 0]
                    Jw[r, 1] = E[r, 1]
                    Jw[r, 2] = E[r, 2]
                if body == 0:
                    Rb = R
                    Ib = plat_inertia
                else:
                    Rb = link_R[body - 3]
                    Ib = link_inertias[body - 3]
                    for j in range(body - 3 + 1):
                        for r in range(3):
                            Jw[r, 5 + j] = axes_w[j, r]
                # Iw = Rb Ib Rb^T
                for r in range(3):
                    for cc in range(3):
                        s = 0.0
                        for x in range(3):
                            s += (Rb[r, 0] * Ib[0, x] + Rb[r, 1] * Ib[1, x]
                                  + Rb[r, 2] * Ib[2, x]) * Rb[cc, x]
                        Iw[r, cc] = s
                for r in range(3):
                    for cc in range(N):
                        tmp[r, cc] = (Iw[r, 0] * Jw[0, cc] + Iw[r, 1] * Jw[1, cc]
                                      + Iw[r, 2] * Jw[2, cc])
                for r in range(N):
                    for cc in range(r, N):
                        M[b, r, cc] += (Jw[0, r] * tmp[0, cc] + Jw[1, r] * tmp[1, cc]
                                        + Jw[2, r] * tmp[2, cc])

        for r in range(N):
            for cc in range(r):
                M[b, r, cc] = M[b, cc, r]
        com[b, 0] /= mtot
        com[b, 1] /= mtot
        for cc in range(N):
            Jcom[b, 0, cc] /= mtot
            Jcom[b, 1, cc] /= mtot
    return M, g, V, com, Jcom


def assemble_min(model, Q):
    """(M, g, V, com, Jcom) through the compiled kernel."""
    plat = model.platform
    return _core(np.ascontiguousarray(Q, dtype=np.float64),
                 plat.wire_length, plat.rail_height, plat.mount_offset,
                 model._offsets, model._axes, model._kmats, model._kmats2,
                 model._coms, model._link_inertias, plat.inertia,
                 model._masses, model.gravity)

"""Batched kinematics and mass-matrix assembly.

Everything the dynamics layer needs per configuration (body frames, point and
angular Jacobians, mass matrix, gravity vector, potential, CoM and its
Jacobian) is assembled for a whole batch of configurations in one vectorized
pass.  Finite-difference consumers (Coriolis matrix, transform rate) batch
their perturbed configurations through here, which is what keeps fixed-step
closed-loop runs fast enough for interactive use.

Bodies are ordered: platform, mover 1, mover 2, link 1 .. link n (CoM).
Movers are point masses and carry no rotational inertia.
"""

import numpy as np

_EYE3 = np.eye(3)


def _cross(a, b):
    """Componentwise cross product over the last axis; avoids the axis
    bookkeeping overhead of np.cross for the small arrays used here."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


class Assembled:
    """Raw per-batch products of one assembly call."""

    __slots__ = ("R", "E", "p_platform", "p_movers", "link_R", "link_origin",
                 "link_com", "axes_world", "p_bodies", "Jv", "Jw", "M", "g",
                 "V", "com", "Jcom")


def assemble(model, Q):
    """Assemble dynamics quantities for a batch of configurations Q (B, N)."""
    Q = np.asarray(Q, dtype=float)
    B, N = Q.shape
    n = model.n_links
    nb = model.n_bodies
    if N != model.dof:
        raise ValueError(f"expected {model.dof} coordinates, got {N}")
    plat = model.platform
    L = plat.wire_length

    sa, ca = np.sin(Q[:, 0]), np.cos(Q[:, 0])
    sb, cb = np.sin(Q[:, 1]), np.cos(Q[:, 1])
    sg, cg = np.sin(Q[:, 2]), np.cos(Q[:, 2])

    R = np.empty((B, 3, 3))
    R[:, 0, 0] = cg * cb
    R[:, 0, 1] = cg * sb * sa - sg * ca
    R[:, 0, 2] = cg * sb * ca + sg * sa
    R[:, 1, 0] = sg * cb
    R[:, 1, 1] = sg * sb * sa + cg * ca
    R[:, 1, 2] = sg * sb * ca - cg * sa
    R[:, 2, 0] = -sb
    R[:, 2, 1] = cb * sa
    R[:, 2, 2] = cb * ca

    # World-frame Euler rate map: omega = E @ (da, db, dg).
    E = np.zeros((B, 3, 3))
    E[:, 0, 0] = cb * cg
    E[:, 1, 0] = cb * sg
    E[:, 2, 0] = -sb
    E[:, 0, 1] = -sg
    E[:, 1, 1] = cg
    E[:, 2, 2] = 1.0

    ex, ey, ez = R[:, :, 0], R[:, :, 1], R[:, :, 2]
    p_plat = -L * ez
    rail = plat.rail_height
    p_m = np.empty((B, 2, 3))
    p_m[:, 0] = p_plat + Q[:, 3, None] * ex + rail * ez
    p_m[:, 1] = p_plat + Q[:, 4, None] * ey + rail * ez

    if n:
        sth, cth = np.sin(Q[:, 5:]), np.cos(Q[:, 5:])
        link_R = np.empty((B, n, 3, 3))
        link_o = np.empty((B, n, 3))
        link_c = np.empty((B, n, 3))
        axes_w = np.empty((B, n, 3))
        Rk = R
        ok = p_plat + R @ plat.mount_offset
        for k in range(n):
            ok = ok + Rk @ model._offsets[k]
            axes_w[:, k] = Rk @ model._axes[k]
            A = (_EYE3 + sth[:, k, None, None] * model._kmats[k]
                 + (1.0 - cth[:, k, None, None]) * model._kmats2[k])
            Rk = Rk @ A
            link_R[:, k] = Rk
            link_o[:, k] = ok
            link_c[:, k] = ok + Rk @ model._coms[k]
        p_all = np.concatenate([p_plat[:, None], p_m, link_c], axis=1)
    else:
        link_R = np.zeros((B, 0, 3, 3))
        link_o = np.zeros((B, 0, 3))
        link_c = np.zeros((B, 0, 3))
        axes_w = np.zeros((B, 0, 3))
        p_all = np.concatenate([p_plat[:, None], p_m], axis=1)

    # Point Jacobians of every body CoM.  Attitude columns come from rigid
    # rotation about the pivot: v = (E qd_p) x p, column c = E[:, c] x p.
    Jv = np.zeros((B, nb, 3, N))
    att = _cross(E.transpose(0, 2, 1)[:, None, :, :], p_all[:, :, None, :])
    Jv[:, :, :, 0:3] = att.swapaxes(2, 3)
    Jv[:, 1, :, 3] = ex
    Jv[:, 2, :, 4] = ey
    if n:
        diff = link_c[:, :, None, :] - link_o[:, None, :, :]
        arm = _cross(axes_w[:, None, :, :], diff)
        arm *= model._tril[None, :, :, None]
        Jv[:, 3:, :, 5:] = arm.swapaxes(2, 3)

    # Angular Jacobians for the rotating bodies (platform and links).
    Jw = np.zeros((B, nb, 3, N))
    Jw[:, 0, :, 0:3] = E
    if n:
        Jw[:, 3:, :, 0:3] = E[:, None]
        aw = axes_w[:, None, :, :] * model._tril[None, :, :, None]
        Jw[:, 3:, :, 5:] = aw.swapaxes(2, 3)

    Iw = np.zeros((B, nb, 3, 3))
    Iw[:, 0] = R @ plat.inertia @ R.transpose(0, 2, 1)
    if n:
        Iw[:, 3:] = link_R @ model._link_inertias @ link_R.transpose(0, 1, 3, 2)

    masses = model._masses
    Wv = Jv * masses[None, :, None, None]
    IwJw = Iw @ Jw
    Jv_f = Jv.reshape(B, nb * 3, N)
    Wv_f = Wv.reshape(B, nb * 3, N)
    Jw_f = Jw.reshape(B, nb * 3, N)
    IwJw_f = IwJw.reshape(B, nb * 3, N)
    M = Jv_f.transpose(0, 2, 1) @ Wv_f + Jw_f.transpose(0, 2, 1) @ IwJw_f
    M = 0.5 * (M + M.transpose(0, 2, 1))

    g0 = model.gravity
    out = Assembled()
    out.R = R
    out.E = E
    out.p_platform = p_plat
    out.p_movers = p_m
    out.link_R = link_R
    out.link_origin = link_o
    out.link_com = link_c
    out.axes_world = axes_w
    out.p_bodies = p_all
    out.Jv = Jv
    out.Jw = Jw
    out.M = M
    out.g = g0 * Wv[:, :, 2, :].sum(axis=1)
    out.V = g0 * (p_all[:, :, 2] @ masses)
    out.com = (p_all[:, :, 0:2].transpose(0, 2, 1) @ masses) / model.total_mass
    out.Jcom = Wv[:, :, 0:2, :].sum(axis=1) / model.total_mass
    return out


def assemble1(model, q):
    """Single-configuration convenience wrapper."""
    return assemble(model, np.asarray(q, dtype=float)[None])


try:
    from . import engine_fast as _fast
    _FAST = _fast.assemble_min if _fast.HAVE_NUMBA else None
except ImportError:  # pragma: no cover
    _FAST = None


def assemble_min(model, Q):
    """(M, g, V, com, Jcom) for a batch of configurations.

    Routed through the JIT kernel when numba is importable (the two paths are
    parity-tested against each other); otherwise served by the full numpy
    assembly."""
    Q = np.asarray(Q, dtype=float)
    if _FAST is not None:
        return _FAST(model, Q)
    out = assemble(model, Q)
    return out.M, out.g, out.V, out.com, out.Jcom


def potential_offset(model):
    """Potential of the zero configuration, cached on the model; subtracting
    it keeps logged/compared energies at oscillation scale instead of the
    absolute hanging-depth scale."""
    cache = model._v0_cache
    if cache[0] is None:
        cache[0] = float(assemble_min(model, np.zeros((1, model.dof)))[2][0])
    return cache[0]

"""Physical description of the suspended platform, movers, and manipulator.

The platform hangs from a fixed world-origin pivot on a rigid massless rod of
length ``wire_length`` pointing along the platform's local -z axis, so the
three attitude angles fully determine the platform position.  Two point-mass
movers slide on rails at height ``rail_height`` above the platform center,
mover 1 along platform x and mover 2 along platform y.  An n-link revolute
serial chain is mounted at ``mount_offset``.

Generalized coordinates (N = 5 + n):
    q = (alpha, beta, gamma, qm1, qm2, qr1 .. qrn)
"""

from dataclasses import dataclass

import numpy as np

from .spatial import BETA_GUARD, euler_rate_map, rot_rpy, skew


class UnsupportedPresetError(ValueError):
    """Requested preset link count is not available."""


class InvalidBodyError(ValueError):
    """Body identifier does not name a body of the model."""


def _as_matrix(m, name):
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3, got {m.shape}")
    if not np.allclose(m, m.T, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ValueError(f"{name} must be symmetric")
    return m


@dataclass(frozen=True)
class PlatformParams:
    """Suspended platform body: mass [kg], inertia about its CoM [kg m^2],
    rod length [m], mover rail height [m], manipulator mount point [m]."""

    mass: float
    inertia: np.ndarray
    wire_length: float
    rail_height: float
    mount_offset: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inertia", _as_matrix(self.inertia, "platform inertia"))
        object.__setattr__(self, "mount_offset",
                           np.asarray(self.mount_offset, dtype=float).reshape(3))
        if self.mass <= 0.0:
            raise ValueError("platform mass must be positive")
        if self.wire_length <= 0.0:
            raise ValueError("wire_length must be positive")
        if np.linalg.eigvalsh(self.inertia).min() <= 0.0:
            raise ValueError("platform inertia must be positive definite")


@dataclass(frozen=True)
class MoverParams:
    """Two identical point-mass movers; mover 1 on platform x, mover 2 on
    platform y.  ``travel_limit`` is a soft bound, logged but never enforced."""

    mass: float
    travel_limit: float = 0.8

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("mover mass must be positive")
        if self.travel_limit <= 0.0:
            raise ValueError("travel limit must be positive")


@dataclass(frozen=True)
class SerialLink:
    """One revolute link: joint offset from the parent frame, unit joint axis
    in the parent frame, mass, CoM offset and inertia in the link frame."""

    parent_offset: np.ndarray
    axis: np.ndarray
    mass: float
    com_offset: np.ndarray
    inertia: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parent_offset",
                           np.asarray(self.parent_offset, dtype=float).reshape(3))
        object.__setattr__(self, "com_offset",
                           np.asarray(self.com_offset, dtype=float).reshape(3))
        ax = np.asarray(self.axis, dtype=float).reshape(3)
        if abs(np.linalg.norm(ax) - 1.0) > 1e-12:
            raise ValueError("joint axis must be unit-norm to 1e-12")
        object.__setattr__(self, "axis", ax)
        object.__setattr__(self, "inertia", _as_matrix(self.inertia, "link inertia"))
        if self.mass < 0.0:
            raise ValueError("link mass must be nonnegative")
        if np.linalg.eigvalsh(self.inertia).min() < -1e-12:
            raise ValueError("link inertia must be positive semidefinite")


@dataclass(frozen=True)
class SystemModel:
    """Immutable physical description shared by all evaluations of one system."""

    platform: PlatformParams
    movers: MoverParams
    links: tuple = ()
    gravity: float = 9.81

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        if self.gravity <= 0.0:
            raise ValueError("gravity must be positive")
        # Packed per-link arrays consumed by the batched evaluation engine.
        n = len(self.links)
        axes = np.array([l.axis for l in self.links]).reshape(n, 3)
        kmats = np.array([skew(a) for a in axes]).reshape(n, 3, 3)
        object.__setattr__(self, "_axes", axes)
        object.__setattr__(self, "_kmats", kmats)
        object.__setattr__(self, "_kmats2", np.einsum("kij,kjl->kil", kmats, kmats))
        object.__setattr__(self, "_offsets",
                           np.array([l.parent_offset for l in self.links]).reshape(n, 3))
        object.__setattr__(self, "_coms",
                           np.array([l.com_offset for l in self.links]).reshape(n, 3))
        object.__setattr__(self, "_link_inertias",
                           np.array([l.inertia for l in self.links]).reshape(n, 3, 3))
        masses = np.concatenate([[self.platform.mass, self.movers.mass, self.movers.mass],
                                 [l.mass for l in self.links]])
        object.__setattr__(self, "_masses", masses)
        object.__setattr__(self, "_total_mass", float(masses.sum()))
        object.__setattr__(self, "_tril", np.tril(np.ones((n, n))))
        object.__setattr__(self, "_v0_cache", [None])

    @property
    def n_links(self):
        return len(self.links)

    @property
    def dof(self):
        """Generalized-coordinate count N = 5 + n."""
        return 5 + len(self.links)

    @property
    def n_bodies(self):
        return 3 + len(self.links)

    @property
    def total_mass(self):
        return self._total_mass


@dataclass
class State:
    """Time, generalized position and velocity of one system configuration."""

    t: float
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.qd = np.asarray(self.qd, dtype=float).ravel()
        if self.q.shape != self.qd.shape:
            raise ValueError("q and qd must have equal length")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qd))):
            raise ValueError("state entries must be finite")
        if abs(self.q[1]) >= BETA_GUARD:
            from .spatial import GimbalLockError
            raise GimbalLockError(f"pitch {self.q[1]:.6f} rad violates the gimbal guard")

    @classmethod
    def zeros(cls, model, t=0.0):
        return cls(t, np.zeros(model.dof), np.zeros(model.dof))


# Default platform geometry: a 1.0 x 1.0 x 0.1 m box of 10 kg.
_BOX_INERTIA = 10.0 / 12.0 * np.diag([1.0**2 + 0.1**2, 1.0**2 + 0.1**2, 1.0**2 + 1.0**2])

# Desk-scale 3-link arm: 7/5/3 kg cylinders of 0.4/0.3/0.2 m, axes z-y-y.
_DESK_LINKS = [
    (7.0, 0.4, (0.0, 0.0, 1.0)),
    (5.0, 0.3, (0.0, 1.0, 0.0)),
    (3.0, 0.2, (0.0, 1.0, 0.0)),
]

# Full-scale 7-link arm: 15 kg split over 7 cylinders, axes z-y-y-z-y-z-y.
_FULL7_LINKS = [
    (4.0, 0.25, (0.0, 0.0, 1.0)),
    (3.0, 0.25, (0.0, 1.0, 0.0)),
    (2.0, 0.20, (0.0, 1.0, 0.0)),
    (2.0, 0.20, (0.0, 0.0, 1.0)),
    (2.0, 0.15, (0.0, 1.0, 0.0)),
    (1.0, 0.15, (0.0, 0.0, 1.0)),
    (1.0, 0.10, (0.0, 1.0, 0.0)),
]

# Link body radius [m]; nonzero axial inertia keeps M positive definite when
# a joint axis lines up with the arm mass distribution (e.g. q_r = 0).
_LINK_RADIUS = 0.08


def _rod_links(defs):
    """Build straight-up links: each joint sits at the previous link's tip,
    the link extends along local +z with its CoM at mid-length."""
    links = []
    prev_len = 0.0
    for mass, length, axis in defs:
        r2 = _LINK_RADIUS**2
        i_trans = mass * (length**2 / 12.0 + r2 / 4.0)
        i_axial = mass * r2 / 2.0
        links.append(SerialLink(
            parent_offset=(0.0, 0.0, prev_len),
            axis=axis,
            mass=mass,
            com_offset=(0.0, 0.0, length / 2.0),
            inertia=np.diag([i_trans, i_trans, i_axial]),
        ))
        prev_len = length
    return links


def preset_paper(n):
    """Preset models: wire length 10 m, platform 10 kg, movers 10 kg each,
    manipulator 15 kg total.  n=3 is the desk-scale default chain, n=7 the
    full-scale chain.  At q_r = 0 the arm points straight up so the zero
    configuration is left-right symmetric."""
    if n == 3:
        defs = _DESK_LINKS
    elif n == 7:
        defs = _FULL7_LINKS
    else:
        raise UnsupportedPresetError(f"no preset with {n} links (choose 3 or 7)")
    platform = PlatformParams(
        mass=10.0,
        inertia=_BOX_INERTIA,
        wire_length=10.0,
        rail_height=0.05,
        mount_offset=(0.0, 0.0, 0.05),
    )
    return SystemModel(platform=platform,
                       movers=MoverParams(mass=10.0, travel_limit=0.8),
                       links=_rod_links(defs))


def _frames(model, q):
    """World pose of every body at configuration q.

    Returns (R, p_platform, mover_positions(2,3), link_R(n,3,3),
    link_origin(n,3), link_com(n,3), joint_axes_world(n,3)).
    """
    plat = model.platform
    R = rot_rpy(q[0], q[1], q[2])
    p_plat = R @ np.array([0.0, 0.0, -plat.wire_length])
    ez = R[:, 2]
    p_m = np.array([
        p_plat + q[3] * R[:, 0] + plat.rail_height * ez,
        p_plat + q[4] * R[:, 1] + plat.rail_height * ez,
    ])
    n = model.n_links
    link_R = np.empty((n, 3, 3))
    link_o = np.empty((n, 3))
    link_c = np.empty((n, 3))
    axes_w = np.empty((n, 3))
    Rk = R
    ok = p_plat + R @ plat.mount_offset
    for k, link in enumerate(model.links):
        ok = ok + Rk @ link.parent_offset
        axes_w[k] = Rk @ link.axis
        sk = model._kmats[k]
        Rk = Rk @ (np.eye(3) + np.sin(q[5 + k]) * sk
                   + (1.0 - np.cos(q[5 + k])) * model._kmats2[k])
        link_R[k] = Rk
        link_o[k] = ok
        link_c[k] = ok + Rk @ link.com_offset
    return R, p_plat, p_m, link_R, link_o, link_c, axes_w


def _parse_body(model, body):
    """Map a body id string to (kind, index)."""
    if body == "platform":
        return "platform", 0
    if body in ("mover1", "mover2"):
        return "mover", int(body[-1]) - 1
    if body.startswith("link"):
        rest = body[4:]
        com = rest.endswith("_com")
        if com:
            rest = rest[:-4]
        if rest.isdigit():
            k = int(rest)
            if 1 <= k <= model.n_links:
                return ("link_com" if com else "link"), k - 1
    raise InvalidBodyError(f"unknown body {body!r}")


def body_position(model, q, body):
    """World position of a body reference point.

    ``platform`` is the platform center, ``moverI`` the mover point mass,
    ``linkK`` the joint-K origin and ``linkK_com`` the link-K center of mass.
    """
    kind, idx = _parse_body(model, body)
    R, p_plat, p_m, _, link_o, link_c, _ = _frames(model, q)
    if kind == "platform":
        return p_plat
    if kind == "mover":
        return p_m[idx]
    if kind == "link":
        return link_o[idx]
    return link_c[idx]


def _body_frame(model, q, kind, idx, frames):
    """(R_body, p_body) of the frame a local point is expressed in."""
    R, p_plat, p_m, link_R, link_o, link_c, _ = frames
    if kind == "platform":
        return R, p_plat
    if kind == "mover":
        return R, p_m[idx]
    if kind == "link":
        return link_R[idx], link_o[idx]
    return link_R[idx], link_c[idx]


def point_jacobian(model, q, body, local_point=(0.0, 0.0, 0.0)):
    """3xN Jacobian of the world position of ``local_point`` (expressed in the
    body frame) with respect to q, so point velocity = J @ qd."""
    kind, idx = _parse_body(model, body)
    frames = _frames(model, q)
    R, p_plat, p_m, link_R, link_o, link_c, axes_w = frames
    Rb, pb = _body_frame(model, q, kind, idx, frames)
    p = pb + Rb @ np.asarray(local_point, dtype=float)

    N = model.dof
    J = np.zeros((3, N))
    E = euler_rate_map(q[0], q[1], q[2])
    # The whole assembly rotates rigidly about the pivot: v = (E qd_p) x p.
    J[:, 0:3] = -skew(p) @ E
    if kind == "mover":
        J[:, 3 + idx] = R[:, idx]
    if kind in ("link", "link_com"):
        for j in range(idx + 1):
            J[:, 5 + j] = np.cross(axes_w[j], p - link_o[j])
    return J


def com_xy(model, q):
    """World x, y of the overall center of mass."""
    _, p_plat, p_m, _, _, link_c, _ = _frames(model, q)
    pts = np.vstack([p_plat, p_m, link_c.reshape(-1, 3)])
    return (model._masses @ pts[:, 0:2]) / model.total_mass


def com_jacobian(model, q):
    """2xN Jacobian of the overall CoM x, y: mass-weighted point Jacobians."""
    from . import engine
    return engine.assemble_min(model, np.asarray(q, dtype=float)[None])[4][0]


def model_to_dict(model):
    """JSON-ready dict with field names matching the parameter types."""
    return {
        "platform": {
            "mass": model.platform.mass,
            "inertia": model.platform.inertia.tolist(),
            "wire_length": model.platform.wire_length,
            "rail_height": model.platform.rail_height,
            "mount_offset": model.platform.mount_offset.tolist(),
        },
        "movers": {
            "mass": model.movers.mass,
            "travel_limit": model.movers.travel_limit,
        },
        "links": [
            {
                "parent_offset": l.parent_offset.tolist(),
                "axis": l.axis.tolist(),
                "mass": l.mass,
                "com_offset": l.com_offset.tolist(),
                "inertia": l.inertia.tolist(),
            }
            for l in model.links
        ],
        "gravity": model.gravity,
    }


def model_from_dict(doc):
    """Inverse of model_to_dict; raises ValueError on invalid parameters."""
    return SystemModel(
        platform=PlatformParams(**doc["platform"]),
        movers=MoverParams(**doc["movers"]),
        links=tuple(SerialLink(**entry) for entry in doc.get("links", [])),
        gravity=doc.get("gravity", 9.81),
    )

"""Orthogonal-group algebra: the displacement metric, classification, nets.

Transformation-space search needs three things from O(3): the displacement
metric D(R1, R2) = r * sigma_max(R1 - R2) that Prop.-1-style Lipschitz bounds
are stated in, classification of a matrix into identity / rotation / plane
reflection / point inversion / rotoreflection, and a deterministic rho-net
covering both components, with carving support for iterative detection.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .errors import ComponentMismatch, EmptyShape, ExcessiveNetSize, NotOrthogonal

_ORTHO_TOL = 1e-9
# arc length of an icosahedron edge on the unit sphere
_ICO_EDGE_ARC = 1.1071487177940904


@dataclasses.dataclass(frozen=True)
class OrthoTransform:
    """A 3x3 orthogonal matrix with its determinant sign cached."""

    matrix: np.ndarray
    determinant_sign: int = dataclasses.field(init=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", m)
        if m.shape != (3, 3):
            raise NotOrthogonal("matrix must be 3x3")
        if np.abs(m.T @ m - np.eye(3)).max() > 1e-6:
            raise NotOrthogonal("matrix is not orthogonal")
        det = np.linalg.det(m)
        if abs(abs(det) - 1.0) > 1e-6:
            raise NotOrthogonal("determinant is not +-1")
        object.__setattr__(self, "determinant_sign", 1 if det > 0 else -1)
        m.setflags(write=False)


@dataclasses.dataclass(frozen=True)
class TransformClass:
    """Classification of an orthogonal transform.

    kind  : identity | rotation | plane_reflection | point_inversion |
            rotoreflection
    axis  : rotation axis or plane normal (None for identity / inversion)
    angle : rotation angle, or rotoreflection angle phi from
            trace = -1 + 2 cos(phi); phi = 0 is a pure plane reflection.
    """

    kind: str
    axis: np.ndarray | None
    angle: float


def identity_transform() -> OrthoTransform:
    return OrthoTransform(np.eye(3))


def rotation_about(axis: np.ndarray, angle: float) -> OrthoTransform:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    return OrthoTransform(Rotation.from_rotvec(axis * angle).as_matrix())


def reflection_across(normal: np.ndarray) -> OrthoTransform:
    """Householder reflection through the plane with the given normal."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    return OrthoTransform(np.eye(3) - 2.0 * np.outer(n, n))


def displacement_distance(R1: OrthoTransform, R2: OrthoTransform, r: float) -> float:
    """D(R1, R2) = r * sigma_max(R1 - R2), the max displacement over B_r."""
    if not r > 0:
        raise EmptyShape("displacement metric needs r > 0")
    return float(r * np.linalg.norm(R1.matrix - R2.matrix, ord=2))


def geodesic_distance(R1: OrthoTransform, R2: OrthoTransform) -> float:
    """Geodesic angle arccos((tr(R1^T R2) - 1)/2); same component required.

    Improper pairs are mapped to SO(3) by negating both, which leaves the
    product R1^T R2 unchanged.
    """
    if R1.determinant_sign != R2.determinant_sign:
        raise ComponentMismatch("transforms lie in different O(3) components")
    t = float(np.trace(R1.matrix.T @ R2.matrix))
    return float(np.arccos(np.clip((t - 1.0) / 2.0, -1.0, 1.0)))


def _proper_axis_angle(W: np.ndarray) -> tuple[np.ndarray, float]:
    """Axis and angle in [0, pi] of a proper rotation matrix."""
    theta = float(np.arccos(np.clip((np.trace(W) - 1.0) / 2.0, -1.0, 1.0)))
    if theta < 1e-7:
        return np.array([0.0, 0.0, 1.0]), theta
    if theta > np.pi - 1e-4:
        # antisymmetric part vanishes; use (W + I)/2 = u u^T
        P = 0.5 * (W + np.eye(3))
        col = int(np.argmax(np.diag(P)))
        u = P[:, col] / np.sqrt(max(P[col, col], 1e-30))
    else:
        u = np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]])
        u = u / (2.0 * np.sin(theta))
    u = u / np.linalg.norm(u)
    # canonical undirected-line sign for the near-pi ambiguity
    if theta > np.pi - 1e-4:
        flip = np.nonzero(np.abs(u) > 1e-8)[0][0]
        if u[flip] < 0:
            u = -u
    return u, theta


def classify(R: OrthoTransform, tol: float = np.deg2rad(1.0)) -> TransformClass:
    """Classify an orthogonal matrix into its symmetry kind.

    Proper: angle theta from trace = 1 + 2 cos(theta); theta <= tol is the
    identity.  Improper: rotoreflection angle phi from trace = -1 + 2 cos(phi);
    phi <= tol is a plane reflection (normal = eigenvector of -1), phi close
    to pi is the point inversion.
    """
    M = R.matrix
    if np.abs(M.T @ M - np.eye(3)).max() > 1e-6:
        raise NotOrthogonal("matrix is not orthogonal")
    if R.determinant_sign > 0:
        axis, theta = _proper_axis_angle(M)
        if theta <= tol:
            return TransformClass("identity", None, 0.0)
        return TransformClass("rotation", axis, theta)
    # improper: -M is proper with angle pi - phi about the same axis
    axis, theta = _proper_axis_angle(-M)
    phi = np.pi - theta
    if phi <= tol:
        return TransformClass("plane_reflection", axis, float(phi))
    if phi >= np.pi - tol:
        return TransformClass("point_inversion", None, float(np.pi))
    return TransformClass("rotoreflection", axis, float(phi))


def nfold_members(axis: np.ndarray, n: int) -> list[OrthoTransform]:
    """The n - 1 rotations by 2*pi*i/n about the axis, i = 1..n-1."""
    if n < 2:
        raise ValueError("fold count must be >= 2")
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    return [rotation_about(axis, 2.0 * np.pi * i / n) for i in range(1, n)]


def icosphere_vertices(freq: int) -> np.ndarray:
    """Vertices of an icosahedron subdivided `freq` times, on the unit sphere.

    Each face is split into freq^2 triangles barycentrically and projected;
    the maximal angular spacing is about _ICO_EDGE_ARC / freq.
    """
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    base = []
    for a in (-1.0, 1.0):
        for b in (-phi, phi):
            base += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    base = np.asarray(base) / np.sqrt(1.0 + phi * phi)
    from scipy.spatial import ConvexHull

    faces = ConvexHull(base).simplices
    pts = []
    for f0, f1, f2 in faces:
        v0, v1, v2 = base[f0], base[f1], base[f2]
        for i in range(freq + 1):
            for j in range(freq + 1 - i):
                k = freq - i - j
                pts.append(i * v0 + j * v1 + k * v2)
    pts = np.asarray(pts)
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    # dedupe shared edge/vertex points
    key = np.round(pts * 1e9).astype(np.int64)
    _, keep = np.unique(key, axis=0, return_index=True)
    return pts[np.sort(keep)]


@dataclasses.dataclass
class TransformNet:
    """A rho-net over O(3) built as icosphere axes x uniform angles.

    Element layout: [proper identity, proper (axis, angle) grid, improper
    mirror by -I].  axis_index / angle_index are -1 for the identity and its
    mirror.  quats holds the unit quaternion of the proper part (of -M for
    improper elements), used for nearest-neighbor queries and carving.
    """

    matrices: np.ndarray
    det_signs: np.ndarray
    axes: np.ndarray
    angles: np.ndarray
    axis_index: np.ndarray
    angle_index: np.ndarray
    quats: np.ndarray
    rho: float
    rho_prime: float
    support_radius: float
    freq: int
    active: np.ndarray

    def __len__(self):
        return len(self.matrices)

    def element(self, i: int) -> OrthoTransform:
        return OrthoTransform(self.matrices[i])

    def copy_with_active(self, active: np.ndarray) -> "TransformNet":
        return dataclasses.replace(self, active=active.copy())


def _grid_for(rho_prime: float) -> tuple[np.ndarray, np.ndarray, int]:
    """Axis vertices, angle values, and icosphere frequency for a target spacing."""
    step = rho_prime / np.sqrt(2.0)
    freq = max(1, int(np.ceil(1.2 * _ICO_EDGE_ARC / step)))
    axes = icosphere_vertices(freq)
    nang = max(1, int(np.ceil(np.pi / step)))
    angles = np.pi * np.arange(1, nang + 1) / nang
    return axes, angles, freq


def projected_net_size(delta: float, V_S: float, r: float) -> int:
    """Element count build_net would produce, without building it."""
    rho = delta / (2.0 * V_S)
    rho_prime = min(rho / r, np.pi)
    if rho_prime >= np.pi:
        return 2
    step = rho_prime / np.sqrt(2.0)
    freq = max(1, int(np.ceil(1.2 * _ICO_EDGE_ARC / step)))
    n_axes = 10 * freq * freq + 2
    nang = max(1, int(np.ceil(np.pi / step)))
    return 2 * (n_axes * nang + 1)


def build_net(
    delta: float, V_S: float, r: float, size_cap: float = 1e8
) -> TransformNet:
    """Construct the rho-net with rho = delta / (2 V_S) in the metric D.

    rho' = min(rho / r, pi) is the geodesic budget, split by sqrt(2) between
    icosphere axis spacing and uniform angle steps in (0, pi]; the improper
    component is the proper net times -I (a D-isometry).  The size respects
    |net| <= 64 * 4*pi/(rho' - sin rho'), the corrected packing-bound form.
    """
    if not (delta > 0 and V_S > 0 and r > 0):
        raise ValueError("delta, V_S and r must be positive")
    if projected_net_size(delta, V_S, r) > size_cap:
        raise ExcessiveNetSize(
            f"net would need {projected_net_size(delta, V_S, r):.2e} elements "
            f"(cap {size_cap:.0e}); increase delta or the truncation K"
        )
    rho = delta / (2.0 * V_S)
    rho_prime = min(rho / r, np.pi)
    if rho_prime >= np.pi:
        axes = np.array([[0.0, 0.0, 1.0]])
        angles = np.array([], dtype=np.float64)
        freq = 0
        proper = np.eye(3)[None]
        axis_idx = np.array([-1], dtype=np.int64)
        angle_idx = np.array([-1], dtype=np.int64)
        quats = Rotation.identity(1).as_quat()
    else:
        axes, angles, freq = _grid_for(rho_prime)
        rotvecs = (axes[:, None, :] * angles[None, :, None]).reshape(-1, 3)
        rots = Rotation.from_rotvec(rotvecs)
        proper = np.concatenate([np.eye(3)[None], rots.as_matrix()])
        quats = np.concatenate([Rotation.identity(1).as_quat(), rots.as_quat()])
        na, nb = len(axes), len(angles)
        axis_idx = np.concatenate(
            [[-1], np.repeat(np.arange(na), nb)]
        ).astype(np.int64)
        angle_idx = np.concatenate([[-1], np.tile(np.arange(nb), na)]).astype(np.int64)
    n = len(proper)
    matrices = np.concatenate([proper, -proper])
    det_signs = np.concatenate(
        [np.ones(n, dtype=np.int8), -np.ones(n, dtype=np.int8)]
    )
    return TransformNet(
        matrices=matrices,
        det_signs=det_signs,
        axes=axes,
        angles=angles,
        axis_index=np.concatenate([axis_idx, axis_idx]),
        angle_index=np.concatenate([angle_idx, angle_idx]),
        quats=np.concatenate([quats, quats]),
        rho=float(min(rho, np.pi * r)),
        rho_prime=float(rho_prime),
        support_radius=float(r),
        freq=freq,
        active=np.ones(2 * n, dtype=bool),
    )


def _uniform_quats(count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((count, 4))
    return q / np.linalg.norm(q, axis=1)[:, None]


def covering_certificate(net: TransformNet, trials: int, seed: int) -> float:
    """Empirical covering check: max over random targets of D to the net.

    Random elements of both components are drawn via uniform quaternions; the
    nearest active element (cross-component distances are always 2r, so the
    search stays within each component) is found exactly with a KD-tree over
    +-q in R^4.  For a valid net the result is <= rho.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    r = net.support_radius
    worst = 0.0
    half = trials // 2 + trials % 2
    for comp, count in ((1, half), (-1, trials - half)):
        if count == 0:
            continue
        mask = net.active & (net.det_signs == comp)
        if not mask.any():
            return 2.0 * r
        q_net = net.quats[mask]
        tree = cKDTree(np.concatenate([q_net, -q_net]))
        targets = _uniform_quats(count, seed + (0 if comp == 1 else 1))
        chord, _ = tree.query(targets, k=1)
        # quaternion half-angle alpha from the chord; rotation-geodesic angle
        # beta = 2 alpha, and D = 2 r sin(beta / 2) = 2 r sin(alpha)
        alpha = 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
        gap = 2.0 * r * np.sin(np.clip(alpha, 0.0, np.pi / 2.0))
        worst = max(worst, float(gap.max()))
    return worst


def _axis_angles_to(axes: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Undirected-line angle between each row of axes and a given axis."""
    c = np.abs(axes @ axis)
    return np.arccos(np.clip(c, 0.0, 1.0))


def carve(
    net: TransformNet,
    detected: list[OrthoTransform],
    radius_deg: float,
    mode: str = "axis",
) -> TransformNet:
    """Deactivate the neighborhood of each detected transform.

    mode="axis" (the fixed-radius variant used in the experiments):
    deactivates active same-component elements whose classified axis / plane
    normal lies within radius_deg of the detected axis, as undirected lines;
    detected identity / point inversion, having no axis, carve a geodesic
    ball instead.

    mode="geodesic": deactivates same-component elements within radius_deg
    geodesic distance of the detected transform itself.
    """
    if not radius_deg > 0:
        raise ValueError("radius_deg must be positive")
    if mode not in ("axis", "geodesic"):
        raise ValueError(f"unknown carve mode {mode!r}")
    rad = np.deg2rad(radius_deg)
    active = net.active.copy()
    # per-element geodesic angle to the component's base point (I or -I)
    elem_angle = np.where(net.angle_index >= 0, net.angles[net.angle_index], 0.0)
    for det in detected:
        comp = det.determinant_sign
        in_comp = net.det_signs == comp
        if mode == "geodesic":
            # angle between proper parts via quaternion dot product
            q = Rotation.from_matrix(det.matrix if comp == 1 else -det.matrix).as_quat()
            c = np.abs(net.quats @ q)
            ang = 2.0 * np.arccos(np.clip(c, 0.0, 1.0))
            active &= ~(in_comp & (ang <= rad))
            continue
        cls = classify(det)
        if cls.axis is None:
            # identity / inversion: geodesic ball around the base point
            active &= ~(in_comp & (elem_angle <= rad))
        else:
            if len(net.axes) == 0:
                continue
            hit_axes = _axis_angles_to(net.axes, cls.axis) <= rad
            elem_hit = np.zeros(len(net), dtype=bool)
            has_axis = net.axis_index >= 0
            elem_hit[has_axis] = hit_axes[net.axis_index[has_axis]]
            active &= ~(in_comp & elem_hit)
    return net.copy_with_active(active)

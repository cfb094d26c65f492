"""Scalar voxel volumes and level-set shape representations.

A :class:`ScalarVolume` carries a level-set function s : R^3 -> [0, 1] on a
uniform centered voxel grid.  The shape S is the 1/2-sub-level set of s, so
the interior is stored as 0 and the exterior as 1; s_K built from a truncated
signed distance degenerates to that indicator continuously as K -> 0.

World conventions: voxel (i, j, k) has its center at origin + spacing*(i,j,k),
values are indexed [ix, iy, iz], and the far-field value (the constant s takes
outside the support ball B_r) is read from the grid corner.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy import ndimage

from .errors import DegenerateRadius, EmptyPhase, EmptyShape

_PASVOL_MAGIC = "PASVOL 1"


@dataclasses.dataclass(frozen=True)
class ScalarVolume:
    """Uniform voxel grid with world placement.

    values : float array of shape (nx, ny, nz), indexed [ix, iy, iz]
    spacing: world units per voxel (isotropic)
    origin : world coordinate of the center of voxel (0, 0, 0)
    """

    values: np.ndarray
    spacing: float
    origin: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ValueError("values must be a 3-d array with all dims >= 1")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        self.values.setflags(write=False)

    @property
    def dims(self):
        return self.values.shape

    @property
    def far_value(self) -> float:
        """The constant value s takes far from the shape (corner voxel)."""
        return float(self.values[0, 0, 0])

    def voxel_centers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """World coordinates of voxel centers along each axis."""
        nx, ny, nz = self.dims
        return tuple(
            self.origin[a] + self.spacing * np.arange(n)
            for a, n in enumerate((nx, ny, nz))
        )

    def center_distances(self) -> np.ndarray:
        """Distance of every voxel center from the world origin, shape dims."""
        x, y, z = self.voxel_centers()
        return np.sqrt(
            x[:, None, None] ** 2 + y[None, :, None] ** 2 + z[None, None, :] ** 2
        )


def sample_trilinear(vol: ScalarVolume, points: np.ndarray) -> np.ndarray:
    """Trilinearly interpolate s at world points; outside the grid -> far value.

    points may be a single (3,) coordinate or an (n, 3) batch.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    g = (pts - vol.origin) / vol.spacing
    nx, ny, nz = vol.dims
    hi = np.array([nx - 1, ny - 1, nz - 1], dtype=np.float64)
    out = np.full(len(pts), vol.far_value)
    ok = np.all((g >= 0.0) & (g <= hi), axis=1)
    if ok.any():
        go = g[ok]
        i0 = np.minimum(np.floor(go).astype(np.int64), (hi - 1).astype(np.int64))
        i0 = np.maximum(i0, 0)
        f = go - i0
        v = vol.values
        ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
        fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]
        acc = np.zeros(len(go))
        for dx in (0, 1):
            wx = fx if dx else 1.0 - fx
            for dy in (0, 1):
                wy = fy if dy else 1.0 - fy
                for dz in (0, 1):
                    wz = fz if dz else 1.0 - fz
                    acc += v[ix + dx, iy + dy, iz + dz] * wx * wy * wz
        out[ok] = acc
    if np.isscalar(points[0]) and np.ndim(points) == 1:
        return out[0]
    return out


def recenter(vol: ScalarVolume) -> ScalarVolume:
    """Shift the world frame so the shape-interior centroid sits at the origin.

    The centroid of |far_value - s| (the shape mass) is moved to within half a
    voxel of the origin by an integer-voxel origin shift; no resampling.
    """
    mass = np.abs(vol.values - vol.far_value)
    total = mass.sum()
    if total <= 0:
        raise EmptyShape("volume is constant; centroid undefined")
    x, y, z = vol.voxel_centers()
    cx = (mass.sum(axis=(1, 2)) * x).sum() / total
    cy = (mass.sum(axis=(0, 2)) * y).sum() / total
    cz = (mass.sum(axis=(0, 1)) * z).sum() / total
    c = np.array([cx, cy, cz])
    shift = np.round(c / vol.spacing) * vol.spacing
    return ScalarVolume(vol.values, vol.spacing, vol.origin - shift)


def support_radius(vol: ScalarVolume) -> float:
    """Smallest r such that s is constant at all voxel centers beyond r.

    Returns 0 for a constant volume.  The volume should be recentered first.
    """
    diff = np.abs(vol.values - vol.far_value) > 1e-12
    if not diff.any():
        return 0.0
    return float(vol.center_distances()[diff].max())


def total_variation(vol: ScalarVolume, r: float) -> float:
    """Ball-normalized total variation (1/Vol B_r) * integral of ||grad s||.

    Central differences inside, one-sided at the grid boundary.  The sum
    runs over voxel centers within r plus the two-voxel stencil support:
    the variation measure of the closed ball includes jump surfaces lying
    exactly on the sphere (a centered ball's entire boundary does), whose
    discrete gradient mass sits half a stencil outside r.
    """
    if not r > 0:
        raise DegenerateRadius("total_variation needs r > 0")
    gx, gy, gz = np.gradient(vol.values, vol.spacing)
    gnorm = np.sqrt(gx * gx + gy * gy + gz * gz)
    mask = vol.center_distances() <= r + 2.0 * vol.spacing
    integral = gnorm[mask].sum() * vol.spacing**3
    return float(integral / ((4.0 / 3.0) * np.pi * r**3))


def signed_distance(vol: ScalarVolume) -> ScalarVolume:
    """Exact Euclidean signed distance from the shape boundary, in world units.

    Negative inside S (values < 1/2), positive outside.  Distances are taken
    between voxel centers and shifted half a voxel toward the opposite phase
    so the zero level sits on the binary interface.
    """
    v = vol.values
    if not np.all((np.abs(v) < 1e-9) | (np.abs(v - 1.0) < 1e-9)):
        raise ValueError("signed_distance expects a binary (0/1) volume")
    inside = v < 0.5
    if not inside.any() or inside.all():
        raise EmptyPhase("signed_distance needs both phases non-empty")
    # distance_transform_edt measures to the nearest zero of its argument
    d_out = ndimage.distance_transform_edt(~inside)  # >0 outside
    d_in = ndimage.distance_transform_edt(inside)  # >0 inside
    d = np.where(inside, -(d_in - 0.5), d_out - 0.5) * vol.spacing
    return ScalarVolume(d, vol.spacing, vol.origin)


def truncate_levelset(sdf: ScalarVolume, K: float) -> ScalarVolume:
    """Build the level set s_K = clamp(d, -K, K)/(2K) + 1/2 from distances.

    K = 0 returns the binary indicator (0 inside, 1 outside) so the
    1/2-sub-level set is exactly S.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    d = sdf.values
    if K == 0:
        s = np.where(d < 0, 0.0, 1.0)
    else:
        s = np.clip(np.clip(d, -K, K) / (2.0 * K) + 0.5, 0.0, 1.0)
    return ScalarVolume(s, sdf.spacing, sdf.origin)


def pad_to_cube(vol: ScalarVolume, half_side: float, margin_voxels: int = 1) -> ScalarVolume:
    """Pad/crop to a cube covering [-half_side, half_side]^3 plus a margin.

    The voxel lattice is preserved (pure index-window change); new voxels take
    the far-field value.
    """
    sp = vol.spacing
    lo_w = -half_side - margin_voxels * sp
    hi_w = half_side + margin_voxels * sp
    i_lo = np.floor((lo_w - vol.origin) / sp).astype(np.int64)
    i_hi = np.ceil((hi_w - vol.origin) / sp).astype(np.int64)
    n = int((i_hi - i_lo).max()) + 1
    # center each axis window inside the common cube size
    starts = i_lo - (n - (i_hi - i_lo + 1)) // 2
    out = np.full((n, n, n), vol.far_value)
    src_lo = np.maximum(starts, 0)
    src_hi = np.minimum(starts + n, vol.dims)
    dst_lo = src_lo - starts
    dst_hi = src_hi - starts
    if np.all(src_hi > src_lo):
        out[
            dst_lo[0] : dst_hi[0], dst_lo[1] : dst_hi[1], dst_lo[2] : dst_hi[2]
        ] = vol.values[
            src_lo[0] : src_hi[0], src_lo[1] : src_hi[1], src_lo[2] : src_hi[2]
        ]
    return ScalarVolume(out, sp, vol.origin + starts * sp)


@dataclasses.dataclass(frozen=True)
class ShapeRepresentation:
    """A level-set volume with its derived shape statistics.

    radius is the support radius of the stored level set (for a truncated
    representation that is about r0 + K); complexity = radius * total_variation.
    target_unreachable marks an auto_truncation run that hit K = r without
    reaching the target complexity.
    """

    volume: ScalarVolume
    radius: float
    total_variation: float
    truncation: float
    complexity: float
    target_unreachable: bool = False


def represent(binary_vol: ScalarVolume, K: float) -> ShapeRepresentation:
    """Build the truncated level-set representation at a fixed K.

    The input must be a recentered binary volume; the output grid is padded
    so the whole support ball of s_K fits inside.
    """
    r0 = support_radius(binary_vol)
    if r0 <= 0:
        raise EmptyShape("cannot represent a constant volume")
    padded = pad_to_cube(binary_vol, r0 + K)
    if K == 0:
        level = padded
    else:
        level = truncate_levelset(signed_distance(padded), K)
    r = support_radius(level)
    vtv = total_variation(level, r)
    return ShapeRepresentation(level, r, vtv, K, r * vtv)


def auto_truncation(
    binary_vol: ScalarVolume, target_complexity: float = 3.0
) -> tuple[float, ShapeRepresentation]:
    """Pick the smallest K in [0, r] with r0 * V_S(s_K) <= target * 1.1.

    Returns K = 0 immediately when the binary representation already meets
    the target.  Bisection on the monotone complexity curve, at most 20
    steps; if even K = r misses the target the representation is returned
    with target_unreachable set instead of raising.
    """
    slack = 1.1
    r0 = support_radius(binary_vol)
    if r0 <= 0:
        raise EmptyShape("cannot truncate a constant volume")
    c0 = r0 * total_variation(binary_vol, r0)
    if c0 <= target_complexity * slack:
        return 0.0, represent(binary_vol, 0.0)

    # one EDT on the widest grid serves every K probe
    padded = pad_to_cube(binary_vol, 2.0 * r0)
    sdf = signed_distance(padded)

    def complexity_at(K: float) -> float:
        # same metric represent() reports: support radius of the smoothed
        # field (not the binary one) times its total variation
        level = truncate_levelset(sdf, K)
        rK = support_radius(level)
        return rK * total_variation(level, rK)

    lo, hi = 0.0, r0
    if complexity_at(r0) > target_complexity * slack:
        rep = represent(binary_vol, r0)
        return r0, dataclasses.replace(rep, target_unreachable=True)
    for _ in range(20):
        mid = 0.5 * (lo + hi)
        if complexity_at(mid) <= target_complexity * slack:
            hi = mid
        else:
            lo = mid
    return hi, represent(binary_vol, hi)


def write_pasvol(path, vol: ScalarVolume) -> None:
    """Write the PASVOL 1 format: ASCII header + little-endian float32 body."""
    nx, ny, nz = vol.dims
    header = (
        f"{_PASVOL_MAGIC} {nx} {ny} {nz} {float(vol.spacing)!r} "
        f"{float(vol.origin[0])!r} {float(vol.origin[1])!r} "
        f"{float(vol.origin[2])!r}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(vol.values.astype("<f4").ravel(order="F").tobytes())


def read_pasvol(path) -> ScalarVolume:
    """Read a PASVOL 1 file; rejects any other magic string."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        fields = header.split()
        if " ".join(fields[:2]) != _PASVOL_MAGIC or len(fields) != 9:
            raise ValueError(f"not a {_PASVOL_MAGIC} file: {header[:40]!r}")
        nx, ny, nz = (int(t) for t in fields[2:5])
        spacing = float(fields[5])
        origin = np.array([float(t) for t in fields[6:9]])
        body = np.frombuffer(fh.read(4 * nx * ny * nz), dtype="<f4")
        if body.size != nx * ny * nz:
            raise ValueError("truncated PASVOL body")
    values = body.astype(np.float64).reshape((nx, ny, nz), order="F")
    return ScalarVolume(values, spacing, origin)

"""Synthetic test solids, controlled asymmetry, and solid mesh voxelization.

The generators produce binary volumes of analytically defined solids whose
symmetry groups are known exactly, which makes them the test oracles for the
detector.  Meshes are voxelized solidly by scanline parity counting along
x-rays, with a symbolic perturbation of the ray grid so edge/vertex hits have
measure zero.
"""

from __future__ import annotations

import dataclasses
from itertools import product

import numpy as np
from scipy.spatial import ConvexHull

from .errors import DegenerateMesh, EmptyShape, NotWatertight
from .volume import ScalarVolume, pad_to_cube, recenter, support_radius

_PHI = (1.0 + np.sqrt(5.0)) / 2.0


def icosahedron_vertices(circumradius: float = 1.0) -> np.ndarray:
    """The 12 vertices, scaled to the given circumradius."""
    v = []
    for a in (-1.0, 1.0):
        for b in (-_PHI, _PHI):
            v += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    v = np.asarray(v)
    return v * (circumradius / np.linalg.norm(v[0]))


def dodecahedron_vertices(circumradius: float = 1.0) -> np.ndarray:
    """The 20 vertices, scaled to the given circumradius."""
    v = list(product((-1.0, 1.0), repeat=3))
    for a in (-1.0 / _PHI, 1.0 / _PHI):
        for b in (-_PHI, _PHI):
            v += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    v = np.asarray(v)
    return v * (circumradius / np.sqrt(3.0))


def _centered_grid(r_shape: float, grid_max_dim: int):
    """Cube grid of side ~2 r_shape with a small margin, centered at 0."""
    n = int(grid_max_dim)
    spacing = 2.0 * r_shape / (n - 4)
    origin = np.full(3, -spacing * (n - 1) / 2.0)
    ax = origin[0] + spacing * np.arange(n)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    return X, Y, Z, spacing, origin, n


def _halfspace_inside(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Inside test for the convex hull of the vertices via its facet planes."""
    eq = ConvexHull(vertices).equations
    return np.all(points @ eq[:, :3].T + eq[:, 3] <= 0.0, axis=1)


def gen_primitive(kind: str, params: dict | None = None, grid_max_dim: int = 128) -> ScalarVolume:
    """Binary volume of an analytic solid, centered and padded to side 2r.

    kinds and params:
      ball         radius (default 1)
      box          half_extents (default (1, 2, 3))
      cylinder     radius (default 1), half_height (default 2)
      icosahedron  circumradius (default 1)
      dodecahedron circumradius (default 1)
      wireframe_cube  half_side (default 1), strut radius (default
                      0.16 * half_side); a cube truss of cylindrical struts
                      (2x2x2 grid lines plus face and body diagonals)
    """
    if grid_max_dim < 16:
        raise ValueError("grid_max_dim must be >= 16")
    params = dict(params or {})
    if kind == "ball":
        a = float(params.pop("radius", 1.0))
        if a <= 0:
            raise ValueError("radius must be positive")
        X, Y, Z, spacing, origin, n = _centered_grid(a, grid_max_dim)
        inside = X * X + Y * Y + Z * Z <= a * a
    elif kind == "box":
        h = np.asarray(params.pop("half_extents", (1.0, 2.0, 3.0)), dtype=np.float64)
        if h.shape != (3,) or np.any(h <= 0):
            raise ValueError("half_extents must be 3 positive numbers")
        r_shape = float(np.linalg.norm(h))
        X, Y, Z, spacing, origin, n = _centered_grid(r_shape, grid_max_dim)
        inside = (np.abs(X) <= h[0]) & (np.abs(Y) <= h[1]) & (np.abs(Z) <= h[2])
    elif kind == "cylinder":
        a = float(params.pop("radius", 1.0))
        hh = float(params.pop("half_height", 2.0))
        if a <= 0 or hh <= 0:
            raise ValueError("radius and half_height must be positive")
        r_shape = np.hypot(a, hh)
        X, Y, Z, spacing, origin, n = _centered_grid(r_shape, grid_max_dim)
        inside = (X * X + Y * Y <= a * a) & (np.abs(Z) <= hh)
    elif kind in ("icosahedron", "dodecahedron"):
        cr = float(params.pop("circumradius", 1.0))
        if cr <= 0:
            raise ValueError("circumradius must be positive")
        verts = (
            icosahedron_vertices(cr) if kind == "icosahedron" else dodecahedron_vertices(cr)
        )
        X, Y, Z, spacing, origin, n = _centered_grid(cr, grid_max_dim)
        pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
        inside = _halfspace_inside(pts, verts).reshape(X.shape)
    elif kind == "wireframe_cube":
        # the high-complexity thin-featured test shape: a cube truss of
        # cylindrical struts along all 12 edges, 12 face diagonals and 4
        # body diagonals -- lots of surface area per enclosed volume, so
        # the binary complexity C0 is well above the truncation target
        hs = float(params.pop("half_side", 1.0))
        strut = float(params.pop("strut", 0.19 * hs))
        if hs <= 0 or strut <= 0:
            raise ValueError("half_side and strut must be positive")
        r_shape = hs * np.sqrt(3.0)
        X, Y, Z, spacing, origin, n = _centered_grid(r_shape, grid_max_dim)
        pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
        segs = []
        levels = (-hs, 0.0, hs)
        for u in levels:  # 27 grid lines: a 2x2x2 subdivision frame
            for v in levels:
                segs.append((np.array([-hs, u, v]), np.array([hs, u, v])))
                segs.append((np.array([u, -hs, v]), np.array([u, hs, v])))
                segs.append((np.array([u, v, -hs]), np.array([u, v, hs])))
        corners = np.array(
            [[sx, sy, sz] for sx in (-hs, hs) for sy in (-hs, hs) for sz in (-hs, hs)]
        )
        for i in range(8):  # 12 face diagonals and 4 body diagonals
            for j in range(i + 1, 8):
                if np.count_nonzero(corners[i] - corners[j]) >= 2:
                    segs.append((corners[i], corners[j]))
        inside_flat = np.zeros(len(pts), dtype=bool)
        for a, b in segs:
            ab = b - a
            t = np.clip((pts - a) @ ab / (ab @ ab), 0.0, 1.0)
            closest = a + t[:, None] * ab
            inside_flat |= np.einsum(
                "ij,ij->i", pts - closest, pts - closest
            ) <= strut * strut
        inside = inside_flat.reshape(X.shape)
    else:
        raise ValueError(f"unknown primitive kind {kind!r}")
    if params:
        raise ValueError(f"unused params for {kind}: {sorted(params)}")
    values = np.where(inside, 0.0, 1.0)
    vol = recenter(ScalarVolume(values, spacing, origin))
    return pad_to_cube(vol, support_radius(vol))


def inject_asymmetry(vol: ScalarVolume, center, eps: float) -> ScalarVolume:
    """Flip the binary phase inside B_eps(center) — the paper's noise model."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    center = np.asarray(center, dtype=np.float64)
    lo = vol.origin
    hi = vol.origin + vol.spacing * (np.array(vol.dims) - 1)
    if np.any(center < lo) or np.any(center > hi):
        raise ValueError("center lies outside the grid")
    if eps == 0:
        return vol
    x, y, z = vol.voxel_centers()
    d2 = (
        (x - center[0])[:, None, None] ** 2
        + (y - center[1])[None, :, None] ** 2
        + (z - center[2])[None, None, :] ** 2
    )
    mask = d2 <= eps * eps
    values = np.where(mask, 1.0 - vol.values, vol.values)
    return ScalarVolume(values, vol.spacing, vol.origin)


@dataclasses.dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle soup with a computed watertightness flag."""

    vertices: np.ndarray
    faces: np.ndarray
    watertight: bool = dataclasses.field(init=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        if len(f) == 0:
            raise DegenerateMesh("mesh has no faces")
        if f.min() < 0 or f.max() >= len(v):
            raise DegenerateMesh("face index out of range")
        # drop zero-area faces
        a = v[f[:, 1]] - v[f[:, 0]]
        b = v[f[:, 2]] - v[f[:, 0]]
        area2 = np.linalg.norm(np.cross(a, b), axis=1)
        f = f[area2 > 1e-14]
        if len(f) == 0:
            raise DegenerateMesh("all faces are degenerate")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        object.__setattr__(self, "watertight", bool(np.all(counts == 2)))


def _fan_triangulate(indices: list[int]) -> list[tuple[int, int, int]]:
    return [(indices[0], indices[i], indices[i + 1]) for i in range(1, len(indices) - 1)]


def read_mesh(path) -> TriangleMesh:
    """Read an ASCII OFF or OBJ (v/f records) mesh; quads become fans."""
    text = open(path, "r", encoding="ascii", errors="replace").read().splitlines()
    verts: list = []
    faces: list = []
    if text and text[0].strip().upper().startswith("OFF"):
        body = [ln for ln in text[1:] if ln.strip() and not ln.lstrip().startswith("#")]
        nv, nf, _ = (int(t) for t in body[0].split()[:3])
        for ln in body[1 : 1 + nv]:
            verts.append([float(t) for t in ln.split()[:3]])
        for ln in body[1 + nv : 1 + nv + nf]:
            toks = ln.split()
            cnt = int(toks[0])
            faces.extend(_fan_triangulate([int(t) for t in toks[1 : 1 + cnt]]))
    else:
        for ln in text:
            toks = ln.split()
            if not toks:
                continue
            if toks[0] == "v":
                verts.append([float(t) for t in toks[1:4]])
            elif toks[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in toks[1:]]
                faces.extend(_fan_triangulate(idx))
    if not verts or not faces:
        raise DegenerateMesh(f"no usable geometry in {path}")
    return TriangleMesh(np.asarray(verts), np.asarray(faces))


def voxelize_mesh(mesh: TriangleMesh, grid_max_dim: int = 160) -> ScalarVolume:
    """Solid binary voxelization by x-ray scanline parity counting.

    The ray grid is offset from voxel centers by a tiny symbolic perturbation
    so rays never hit triangle edges or vertices exactly.  Output is
    recentered and padded to a cube of side 2r.
    """
    if not mesh.watertight:
        raise NotWatertight("mesh has boundary or non-manifold edges")
    v = mesh.vertices
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    extent = hi - lo
    if extent.max() <= 0:
        raise DegenerateMesh("mesh has zero extent")
    spacing = float(extent.max()) / (grid_max_dim - 4)
    dims = np.maximum((np.ceil(extent / spacing)).astype(int) + 4, 2)
    origin = (lo + hi) / 2.0 - spacing * (dims - 1) / 2.0
    ny, nz = int(dims[1]), int(dims[2])
    # symbolic perturbation of the ray grid
    ey, ez = spacing * 1e-6, spacing * 2e-6
    ys = origin[1] + spacing * np.arange(ny) + ey
    zs = origin[2] + spacing * np.arange(nz) + ez
    crossings: dict[tuple[int, int], list[float]] = {}
    for tri in mesh.faces:
        p0, p1, p2 = v[tri[0]], v[tri[1]], v[tri[2]]
        # projected 2x2 system in (y, z); skip x-parallel triangles
        d1 = p1 - p0
        d2 = p2 - p0
        det = d1[1] * d2[2] - d1[2] * d2[1]
        if abs(det) < 1e-14:
            continue
        tlo = np.minimum(np.minimum(p0, p1), p2)
        thi = np.maximum(np.maximum(p0, p1), p2)
        j0 = max(0, int(np.ceil((tlo[1] - ey - origin[1]) / spacing)))
        j1 = min(ny - 1, int(np.floor((thi[1] - ey - origin[1]) / spacing)))
        k0 = max(0, int(np.ceil((tlo[2] - ez - origin[2]) / spacing)))
        k1 = min(nz - 1, int(np.floor((thi[2] - ez - origin[2]) / spacing)))
        if j1 < j0 or k1 < k0:
            continue
        yy = ys[j0 : j1 + 1][:, None] - p0[1]
        zz = zs[k0 : k1 + 1][None, :] - p0[2]
        a = (yy * d2[2] - zz * d2[1]) / det
        b = (zz * d1[1] - yy * d1[2]) / det
        hit = (a > 0) & (b > 0) & (a + b < 1)
        jj, kk = np.nonzero(hit)
        xh = p0[0] + a[hit] * d1[0] + b[hit] * d2[0]
        for j, k, xc in zip(jj + j0, kk + k0, xh):
            crossings.setdefault((int(j), int(k)), []).append(float(xc))
    values = np.ones(tuple(int(d) for d in dims))
    xs = origin[0] + spacing * np.arange(dims[0])
    for (j, k), xlist in crossings.items():
        xlist.sort()
        if len(xlist) % 2 != 0:
            raise NotWatertight("odd crossing parity; mesh is not a closed solid")
        for i in range(0, len(xlist), 2):
            inside = (xs > xlist[i]) & (xs < xlist[i + 1])
            values[inside, j, k] = 0.0
    vol = ScalarVolume(values, spacing, origin)
    try:
        vol = recenter(vol)
    except EmptyShape:
        raise DegenerateMesh("voxelization produced an empty solid")
    return pad_to_cube(vol, support_radius(vol))

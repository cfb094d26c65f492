"""Exact and randomized evaluation of the symmetry distortion.

dis_s(R) = (1/Vol B_r) * integral over B_r of |s(x) - s(Rx)|: 0 for an exact
symmetry, at most 1 always.  The exact form is a Riemann sum over the voxel
lattice inside B_r and serves as the oracle; the randomized form averages m
uniform ball samples, with m chosen by the Chernoff-Hoeffding bound
m_eps = ceil((1/(2 eps^2)) ln(2/p)) for additive accuracy eps at confidence
1 - p (natural logarithm).
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from . import _kernels
from .errors import DegenerateRadius
from .ogroup import OrthoTransform
from .volume import ShapeRepresentation, sample_trilinear


@dataclasses.dataclass(frozen=True)
class DistortionEstimate:
    """A distortion value with the provenance of its accuracy claim."""

    value: float
    mode: str  # "exact" | "sampled"
    samples_used: int
    epsilon: float
    failure_prob: float


def required_samples(epsilon: float, p: float) -> int:
    """Hoeffding sample count ceil((1/(2 eps^2)) ln(2/p))."""
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must lie in (0, 1)")
    if not (0.0 < p < 1.0):
        raise ValueError("p must lie in (0, 1)")
    return int(math.ceil(math.log(2.0 / p) / (2.0 * epsilon * epsilon)))


def uniform_ball_points(r: float, m: int, seed: int) -> np.ndarray:
    """m i.i.d. uniform points in the solid ball B_r(0), deterministic in seed.

    Drawn by rejection from the bounding cube (acceptance pi/6 ~ 0.524); the
    method is part of the determinism contract and must stay stable.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not r > 0:
        raise DegenerateRadius("ball sampling needs r > 0")
    rng = np.random.default_rng(seed)
    chunks = []
    need = m
    while need > 0:
        cand = rng.uniform(-1.0, 1.0, size=(int(need * 2.2) + 16, 3))
        keep = cand[np.einsum("ij,ij->i", cand, cand) <= 1.0]
        chunks.append(keep[:need])
        need -= len(keep[:need])
    return np.concatenate(chunks) * r


def exact_distortion(shape: ShapeRepresentation, R: OrthoTransform) -> DistortionEstimate:
    """Riemann-sum distortion over all voxel centers inside B_r."""
    if not shape.radius > 0:
        raise DegenerateRadius("exact_distortion needs radius > 0")
    vol = shape.volume
    mask = vol.center_distances() <= shape.radius
    x, y, z = vol.voxel_centers()
    xs = np.broadcast_to(x[:, None, None], vol.dims)[mask]
    ys = np.broadcast_to(y[None, :, None], vol.dims)[mask]
    zs = np.broadcast_to(z[None, None, :], vol.dims)[mask]
    pts = np.stack([xs, ys, zs], axis=1)
    s0 = vol.values[mask]
    s1 = sample_trilinear(vol, pts @ R.matrix.T)
    value = float(np.abs(s0 - s1).mean())
    return DistortionEstimate(value, "exact", len(s0), 0.0, 0.0)


def approx_distortion(
    shape: ShapeRepresentation,
    R: OrthoTransform,
    epsilon: float,
    p: float,
    seed: int,
) -> DistortionEstimate:
    """Monte-Carlo distortion: |estimate - exact| <= eps with prob >= 1 - p."""
    if not shape.radius > 0:
        raise DegenerateRadius("approx_distortion needs radius > 0")
    m = required_samples(epsilon, p)
    pts = uniform_ball_points(shape.radius, m, seed)
    vol = shape.volume
    s0 = sample_trilinear(vol, pts)
    s1 = sample_trilinear(vol, pts @ R.matrix.T)
    value = float(np.abs(s0 - s1).mean())
    return DistortionEstimate(value, "sampled", m, epsilon, p)


def estimate_net(
    shape: ShapeRepresentation,
    matrices: np.ndarray,
    stream_ids: np.ndarray,
    m: int,
    master_seed: int,
    i0: int = 0,
) -> np.ndarray:
    """Batched sampled distortion of many transforms (compiled kernel).

    Each matrix e is evaluated on its own counter-based sample stream keyed
    by (master_seed, stream_ids[e]), so estimates are independent of the
    order and batching of evaluation.  With i0 > 0 the mean covers samples
    i0..m-1 only, allowing an earlier estimate over 0..i0-1 to be extended
    by merging the two means.
    """
    vol = shape.volume
    nx, ny, nz = vol.dims
    out = np.empty(len(matrices), dtype=np.float64)
    if len(matrices) == 0:
        return out
    _kernels.estimate_batch(
        np.ascontiguousarray(vol.values).ravel(),
        nx,
        ny,
        nz,
        vol.spacing,
        vol.origin[0],
        vol.origin[1],
        vol.origin[2],
        vol.far_value,
        np.ascontiguousarray(matrices, dtype=np.float64),
        np.ascontiguousarray(stream_ids, dtype=np.uint64),
        i0,
        m,
        np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF),
        shape.radius,
        out,
    )
    return out

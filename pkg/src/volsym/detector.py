"""Best-symmetry search and full symmetry-set detection.

detect_best sweeps a rho-net with the Hoeffding-sized Monte-Carlo estimator
and returns the minimizer; its guarantee is the net-plus-estimator argument:
with probability >= 1 - p the returned estimate d satisfies d <= 0.5 delta =>
the transform is a delta-symmetry, and d > 1.5 delta => no delta-symmetry
exists among the active candidates.

detect_best_bnb runs the same search coarse-to-fine: a coarse net is
evaluated fully and only the neighborhoods of near-optimal elements are
refined on progressively finer lattices until the target delta is reached.
Two survival rules are provided: the "guaranteed" rule keeps every element
within best + delta_level + eps_level (the Lipschitz bound |dis R1 - dis R2|
<= V_S * D makes the true optimum's cell survive), and the default
"empirical" rule replaces the Lipschitz slope with a measured landscape
slope plus a per-element noise allowance, pruning aggressively enough to be
practical on low-complexity shapes where the guaranteed rule cannot prune at
all (see README).  Within each level the sample count is tightened in stages
(x4 per rung, same sample streams extended) so that borderline candidates
are re-estimated instead of being refined wholesale.

detect_all iterates best-symmetry search with neighborhood carving,
expanding detected rotations into n-fold families and reporting continuous
axial symmetries.  By default carving removes a fixed-radius geodesic ball
around every detected group element (the variant the experiments adopt for
its simplicity); with a radius exceeding the covering radius of the shape's
symmetry group the search terminates by net exhaustion.
"""

from __future__ import annotations

import dataclasses
import json
import time

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .distortion import (
    DistortionEstimate,
    approx_distortion,
    estimate_net,
    exact_distortion,
    required_samples,
)
from .errors import EmptyNet, NoFold
from .ogroup import (
    OrthoTransform,
    TransformClass,
    TransformNet,
    _grid_for,
    build_net,
    carve,
    classify,
    identity_transform,
    nfold_members,
    reflection_across,
)
from .volume import ShapeRepresentation

_LEVEL_STRIDE = np.uint64(1) << np.uint64(42)
_NFOLD_TAG = np.uint64(0xA5) << np.uint64(48)
_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _mix64(z: np.uint64) -> np.uint64:
    """splitmix64 finalizer (numpy mirror of the kernel's hash)."""
    with np.errstate(over="ignore"):
        z = (z + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
        z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
        z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
        return z ^ (z >> np.uint64(31))


@dataclasses.dataclass(frozen=True)
class DetectionConfig:
    """Knobs for the detection algorithms.

    delta / p are the PAC parameters; coarse_delta and bnb_shrink control
    the coarse-to-fine schedule; stop_multiplier / accept_multiplier are the
    1.5 / 0.5 theorem constants.  carve_mode "geodesic" (default) removes a
    fixed-radius geodesic ball around each detected group element;
    carve_mode "axis" removes all elements whose symmetry axis lies within
    carve_deg of a detected axis.  survival picks the branch-and-bound rule
    ("empirical" default, "guaranteed" for the pure Lipschitz-bound rule);
    emp_slope is the assumed distortion-per-radian landscape slope and
    emp_nsigma the noise allowance of the empirical rule.
    """

    delta: float = 0.05
    p: float = 0.01
    max_fold: int = 20
    carve_deg: float = 50.0
    seed: int = 0
    coarse_delta: float = 0.25
    bnb_shrink: float = 0.5
    stop_multiplier: float = 1.5
    accept_multiplier: float = 0.5
    carve_mode: str = "geodesic"
    method: str = "bnb"  # or "flat"
    survival: str = "empirical"  # or "guaranteed"
    emp_slope: float = 0.6  # distortion per radian of transform motion
    emp_nsigma: float = 2.5
    max_survivors: int = 200_000
    net_size_cap: float = 1e8

    def __post_init__(self):
        if not (0 < self.delta <= self.coarse_delta):
            raise ValueError("need 0 < delta <= coarse_delta")
        if not (0 < self.p < 1):
            raise ValueError("p must lie in (0, 1)")
        if self.max_fold < 2:
            raise ValueError("max_fold must be >= 2")
        if self.carve_deg <= 0:
            raise ValueError("carve_deg must be positive")
        if self.carve_mode not in ("axis", "geodesic"):
            raise ValueError("carve_mode must be 'axis' or 'geodesic'")
        if self.survival not in ("empirical", "guaranteed"):
            raise ValueError("survival must be 'empirical' or 'guaranteed'")
        if self.method not in ("bnb", "flat"):
            raise ValueError("method must be 'bnb' or 'flat'")


@dataclasses.dataclass
class SymmetryRecord:
    """One detected symmetry: a transform, its class, fold and distortion.

    fold: 0 = continuous axial rotation, 1 = single transform, n >= 2 = the
    n-fold rotation family whose members (with their sampled distortions)
    are listed in `members`.
    """

    transform: OrthoTransform
    klass: TransformClass
    fold: int
    distortion: float
    members: list = dataclasses.field(default_factory=list)
    indeterminate: bool = False
    wall_ms: float = 0.0

    def to_dict(self) -> dict:
        axis = None if self.klass.axis is None else [float(t) for t in self.klass.axis]
        return {
            "kind": self.klass.kind,
            "fold": self.fold,
            "axis": axis,
            "angle_deg": float(np.rad2deg(self.klass.angle)),
            "matrix": [float(t) for t in self.transform.matrix.ravel()],
            "distortion": float(self.distortion),
            "indeterminate": self.indeterminate,
            "members": [
                {"matrix": [float(t) for t in m.matrix.ravel()], "distortion": float(d)}
                for m, d in self.members
            ],
            "wall_ms": float(self.wall_ms),
        }


@dataclasses.dataclass
class DetectionReport:
    """Full output of detect_all."""

    radius: float
    total_variation: float
    truncation: float
    complexity: float
    dims: tuple
    config: DetectionConfig
    records: list
    net_size: int
    evaluations: int
    continuous_reflection_axis: list | None = None

    def to_json(self, indent: int | None = 2) -> str:
        body = {
            "shape": {
                "r": self.radius,
                "total_variation": self.total_variation,
                "truncation": self.truncation,
                "complexity": self.complexity,
                "dims": list(self.dims),
            },
            "config": dataclasses.asdict(self.config),
            "symmetries": [rec.to_dict() for rec in self.records],
            "net_size": self.net_size,
            "evaluations": self.evaluations,
            "continuous_reflection_axis": self.continuous_reflection_axis,
        }
        return json.dumps(body, indent=indent)


def _level_schedule(cfg: DetectionConfig) -> list[float]:
    """The per-level delta sequence from coarse_delta down to delta."""
    deltas = [cfg.coarse_delta]
    while deltas[-1] > cfg.delta * (1 + 1e-12):
        deltas.append(max(deltas[-1] * cfg.bnb_shrink, cfg.delta))
    return deltas


def detect_best(
    shape: ShapeRepresentation, net: TransformNet, cfg: DetectionConfig
) -> tuple[OrthoTransform, float]:
    """Flat net sweep: minimum sampled distortion over the active elements."""
    active = np.nonzero(net.active)[0]
    if len(active) == 0:
        raise EmptyNet("no active net elements")
    m = required_samples(cfg.delta / 2.0, cfg.p)
    ests = estimate_net(
        shape, net.matrices[active], active.astype(np.uint64), m, cfg.seed
    )
    k = int(np.argmin(ests))
    return net.element(int(active[k])), float(ests[k])


class _CarveState:
    """Carve predicates applied to lazily generated fine-lattice candidates."""

    def __init__(self, cfg: DetectionConfig):
        self.cfg = cfg
        self.rad = np.deg2rad(cfg.carve_deg)
        self.axis_lines: list[tuple[int, np.ndarray]] = []  # (det, axis)
        self.base_balls: set[int] = set()  # det signs with a carved base point
        self.quats: list[tuple[int, np.ndarray]] = []  # (det, proper-part quat)

    def split(self, transforms: list[OrthoTransform]):
        """Predicate data for a batch of new detections (also stored)."""
        new_axis, new_base, new_quat = [], set(), []
        for t in transforms:
            comp = t.determinant_sign
            if self.cfg.carve_mode == "geodesic":
                q = Rotation.from_matrix(t.matrix if comp == 1 else -t.matrix).as_quat()
                new_quat.append((comp, q))
                continue
            cls = classify(t)
            if cls.axis is None:
                new_base.add(comp)
            else:
                new_axis.append((comp, cls.axis))
        self.axis_lines += new_axis
        self.base_balls |= new_base
        self.quats += new_quat
        return new_axis, new_base, new_quat

    @staticmethod
    def apply(
        rad, axis_lines, base_balls, quat_list, det, axes, angles, quats
    ) -> np.ndarray:
        """Mask of candidates unaffected by the given predicates."""
        ok = np.ones(len(det), dtype=bool)
        for comp, q in quat_list:
            ang = 2.0 * np.arccos(np.clip(np.abs(quats @ q), 0.0, 1.0))
            ok &= (det != comp) | (ang > rad)
        for comp in base_balls:
            ok &= (det != comp) | (angles > rad)
        for comp, line in axis_lines:
            sep = np.arccos(np.clip(np.abs(axes @ line), 0.0, 1.0))
            ok &= (det != comp) | (sep > rad)
        return ok

    def allowed(self, det, axes, angles, quats) -> np.ndarray:
        return self.apply(
            self.rad, self.axis_lines, self.base_balls, self.quats, det, axes, angles, quats
        )


class _Level:
    """A global lattice at one refinement level (axes x angles)."""

    def __init__(self, rho_prime: float):
        from .ogroup import icosphere_vertices  # local to avoid cycle noise

        self.rho_prime = rho_prime
        self.axes, self.angles, self.freq = _grid_for(rho_prime)
        self.tree = cKDTree(self.axes)
        self.nang = len(self.angles)
        self.block = len(self.axes) * self.nang + 1


@dataclasses.dataclass
class _Candidates:
    """Evaluated candidates of one refinement level, shared across carving."""

    ids: np.ndarray  # lattice id (+block for improper), unique
    det: np.ndarray
    axes: np.ndarray
    angles: np.ndarray
    iden: np.ndarray
    quats: np.ndarray
    est: np.ndarray
    m: np.ndarray  # samples behind each estimate
    alive: np.ndarray


class _BnbSearch:
    """Coarse-to-fine search with persistent caches across carve iterations."""

    def __init__(self, shape: ShapeRepresentation, cfg: DetectionConfig):
        self.shape = shape
        self.cfg = cfg
        self.deltas = _level_schedule(cfg)
        self.p_level = cfg.p / len(self.deltas)
        self.net = build_net(
            self.deltas[0], shape.total_variation, shape.radius, cfg.net_size_cap
        )
        self.base_est = np.full(len(self.net), np.nan)
        self.base_m = np.zeros(len(self.net), dtype=np.int64)
        self.levels: dict[int, _Level] = {}
        self.cands: dict[int, _Candidates] = {}
        self.carves = _CarveState(cfg)
        self.evaluations = 0
        self.explored = False
        self.m_final = required_samples(cfg.delta / 2.0, self.p_level)

    # ----- lattice / sampling helpers -------------------------------------

    def _level(self, idx: int) -> _Level:
        if idx not in self.levels:
            rho_p = min(
                self.deltas[idx]
                / (2.0 * self.shape.total_variation * self.shape.radius),
                np.pi,
            )
            self.levels[idx] = _Level(rho_p)
        return self.levels[idx]

    def _m_level(self, idx: int) -> int:
        return required_samples(self.deltas[idx] / 2.0, self.p_level)

    def _estimate(self, idx: int, ids, mats, m: int, i0: int = 0) -> np.ndarray:
        streams = np.uint64(idx) * _LEVEL_STRIDE + ids.astype(np.uint64)
        vals = estimate_net(self.shape, mats, streams, m, self.cfg.seed, i0)
        self.evaluations += len(mats) * (m - i0)
        return vals

    def _extend(self, idx: int, ids, mats, est, m_have, m_t: int):
        """Raise every estimate to m_t samples, reusing samples already drawn."""
        redo = m_have < m_t
        if not redo.any():
            return est, m_have
        est = est.copy()
        m_have = np.asarray(m_have).copy()
        for mh in np.unique(m_have[redo]):
            sub = np.nonzero(redo & (m_have == mh))[0]
            inc = self._estimate(idx, ids[sub], mats[sub], m_t, i0=int(mh))
            if mh > 0:
                est[sub] = (est[sub] * mh + inc * (m_t - mh)) / m_t
            else:
                est[sub] = inc
        m_have[redo] = m_t
        return est, m_have

    def _gate(self) -> float:
        return self.cfg.stop_multiplier * self.cfg.delta

    def _keep_limit(self, idx: int, best: float) -> float:
        """Survival threshold before the per-element noise allowance."""
        cfg = self.cfg
        if cfg.survival == "guaranteed":
            return best + self.deltas[idx] + self.deltas[idx] / 2.0
        return best + cfg.emp_slope * self._level(idx).rho_prime

    def _keep_mask(self, idx: int, est, m, best: float) -> np.ndarray:
        cfg = self.cfg
        lim = self._keep_limit(idx, best)
        if cfg.survival == "guaranteed":
            return est <= lim
        sig = np.sqrt(np.clip(est * (1.0 - est), 1e-6, None) / np.maximum(m, 1))
        return est - cfg.emp_nsigma * sig <= lim

    # ----- carving ---------------------------------------------------------

    def carve_detected(self, transforms: list[OrthoTransform]) -> None:
        """Deactivate neighborhoods on the base net and all cached levels."""
        self.net = carve(self.net, transforms, self.cfg.carve_deg, self.cfg.carve_mode)
        new_axis, new_base, new_quat = self.carves.split(transforms)
        for cand in self.cands.values():
            live = np.nonzero(cand.alive)[0]
            if len(live) == 0:
                continue
            ok = _CarveState.apply(
                self.carves.rad,
                new_axis,
                new_base,
                new_quat,
                cand.det[live],
                cand.axes[live],
                cand.angles[live],
                cand.quats[live],
            )
            cand.alive[live] = ok

    # ----- expansion -------------------------------------------------------

    def _expand(self, idx, par_det, par_axes, par_angles, par_iden):
        """Unique level-idx lattice ids of the children of the parents."""
        lev = self._level(idx)
        prev_rho = self._level(idx - 1).rho_prime if idx > 0 else lev.rho_prime
        win = (
            max(0.75 * prev_rho / np.sqrt(2.0), 1.2 * lev.rho_prime / np.sqrt(2.0))
            + 0.25 * lev.rho_prime  # parent-thinning pad, see _thin
        )
        chord = 2.0 * np.sin(min(win, np.pi / 2) / 2.0) + 1e-12
        out = {1: [], -1: []}
        for det in (1, -1):
            sel = par_det == det
            if not sel.any():
                continue
            if par_iden[sel].any():
                n_small = int(np.searchsorted(lev.angles, win, side="right"))
                ids = (
                    np.arange(len(lev.axes))[:, None] * lev.nang
                    + np.arange(n_small)[None, :]
                    + 1
                ).ravel()
                out[det] += [np.array([0]), ids]
            normal = sel & ~par_iden
            if normal.any():
                ax = par_axes[normal]
                ang = par_angles[normal]
                neigh = lev.tree.query_ball_point(ax, chord)
                neigh_m = lev.tree.query_ball_point(-ax, chord)
                for row in range(len(ax)):
                    a0 = ang[row]
                    jlo = int(np.searchsorted(lev.angles, a0 - win, side="left"))
                    jhi = int(np.searchsorted(lev.angles, a0 + win, side="right"))
                    cand = np.asarray(neigh[row], dtype=np.int64)
                    if jhi > jlo and len(cand):
                        js = np.arange(jlo, jhi)
                        out[det].append(
                            (cand[:, None] * lev.nang + js[None, :] + 1).ravel()
                        )
                    if a0 + win > np.pi:
                        # rot(-u, theta) continues past pi on the mirrored axis
                        cand_m = np.asarray(neigh_m[row], dtype=np.int64)
                        jlo2 = int(
                            np.searchsorted(
                                lev.angles, 2.0 * np.pi - a0 - win, side="left"
                            )
                        )
                        if jlo2 < lev.nang and len(cand_m):
                            js = np.arange(jlo2, lev.nang)
                            out[det].append(
                                (cand_m[:, None] * lev.nang + js[None, :] + 1).ravel()
                            )
                    if a0 - win <= 0.0:
                        out[det].append(np.array([0]))
        parts = []
        for det in (1, -1):
            if out[det]:
                ids = np.unique(np.concatenate(out[det]))
                parts.append(ids + (0 if det == 1 else lev.block))
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(parts)

    def _decode(self, idx: int, ids: np.ndarray):
        """Lattice ids -> (det, axes, angles, identity mask, quats, matrices)."""
        lev = self._level(idx)
        det = np.where(ids < lev.block, 1, -1).astype(np.int8)
        loc = np.where(ids < lev.block, ids, ids - lev.block)
        iden = loc == 0
        ai = np.maximum(loc - 1, 0) // lev.nang
        bj = np.maximum(loc - 1, 0) % lev.nang
        axes = lev.axes[ai].copy()
        angles = lev.angles[bj].copy() if lev.nang else np.zeros(len(ids))
        axes[iden] = np.array([0.0, 0.0, 1.0])
        angles[iden] = 0.0
        rots = Rotation.from_rotvec(axes * angles[:, None])
        mats = rots.as_matrix()
        mats[iden] = np.eye(3)
        quats = rots.as_quat()
        mats[det == -1] *= -1.0
        return det, axes, angles, iden, quats, mats

    # ----- the search ------------------------------------------------------

    _REFINE_BUDGET = 3e8  # sample pairs per refinement rung

    def _tighten(self, idx, ids, mats, est, m_have, refine):
        """Re-estimate shrinking candidate sets at growing sample counts.

        Phase A walks a x4 ladder up to this level's required sample count,
        pruning with the survival rule after each rung; rungs that fail to
        filter are skipped.  Phase B (refine=True, used before expansion)
        keeps quadrupling the survivors' sample counts toward the final
        level's requirement while the cost stays within a fixed budget and
        the pruning still pays.  Returns (kept positions, est, m).
        """
        top = self._m_level(idx)
        rungs = [min(max(250, top // 64), top)]
        while rungs[-1] < top:
            nxt = rungs[-1] * 4
            rungs.append(top if nxt * 2 >= top else nxt)
        pos = np.arange(len(ids))

        def run_rung(pos, ids, mats, est, m_have, m_t):
            est, m_have = self._extend(idx, ids, mats, est, m_have, m_t)
            best = float(est.min())
            keep = self._keep_mask(idx, est, m_have, best)
            keep[int(np.argmin(est))] = True  # never drop the incumbent
            frac = keep.sum() / max(len(keep), 1)
            return pos[keep], ids[keep], mats[keep], est[keep], m_have[keep], frac

        for m_t in rungs:
            pos, ids, mats, est, m_have, frac = run_rung(pos, ids, mats, est, m_have, m_t)
        if refine:
            m_t = top * 4
            while m_t < self.m_final * 2 and len(pos) * min(m_t, self.m_final) <= self._REFINE_BUDGET:
                m_t = min(m_t, self.m_final)
                n_before = len(pos)
                pos, ids, mats, est, m_have, frac = run_rung(
                    pos, ids, mats, est, m_have, m_t
                )
                if m_t >= self.m_final or len(pos) > 0.8 * n_before:
                    break
                m_t *= 4
        return pos, est, m_have

    def _thin(self, rho_cell: float, det, quats, rank) -> np.ndarray:
        """Keep one representative (the lowest rank) per quaternion cell.

        The cell size is a sixteenth of rho_cell, so any discarded candidate
        lies within 0.25 * rho_cell (rotation geodesic) of its kept
        representative.  This collapses the lattice's 1/theta^2 clustering
        of axis-angle points near theta = 0 (the neighborhoods of +-I),
        where vast numbers of lattice points denote nearly equal transforms.
        """
        c = 0.0625 * rho_cell
        q = quats.copy()
        est = np.asarray(rank, dtype=np.float64)
        sgn = np.zeros(len(q))
        for k in (3, 2, 1, 0):
            sgn = np.where((sgn == 0) & (np.abs(q[:, k]) > 1e-9), np.sign(q[:, k]), sgn)
        q *= np.where(sgn == 0, 1.0, sgn)[:, None]
        cells = np.floor(q / c).astype(np.int64)
        key = np.column_stack([cells, det.astype(np.int64)])
        _, inv = np.unique(key, axis=0, return_inverse=True)
        order = np.lexsort((est, inv))
        first = np.zeros(len(q), dtype=bool)
        first[order[np.r_[True, np.diff(inv[order]) != 0]]] = True
        return first

    def run(self) -> tuple[OrthoTransform, float]:
        """One best-symmetry query against the current carve state."""
        if not self.net.active.any():
            raise EmptyNet("all net elements carved")
        if self.explored:
            result = self._run_restricted()
            if result is not None:
                return result
        return self._run_full()

    def _run_restricted(self):
        """Cheap pass over cached final-level candidates.

        Valid whenever it returns an estimate at or below the stop gate: the
        caches contain every candidate that survived with keep thresholds
        anchored at best ~ the minimal distortion, and carving only removes
        elements.  A high or empty result falls back to a full pass.
        """
        last = len(self.deltas) - 1
        if last == 0:
            return None
        cand = self.cands.get(last)
        if cand is None or not cand.alive.any():
            return None
        live = np.nonzero(cand.alive & (cand.m >= self.m_final))[0]
        if len(live) == 0:
            return None
        k = live[int(np.argmin(cand.est[live]))]
        if cand.est[k] > self._gate():
            return None
        _, _, _, _, _, mats = self._decode(last, cand.ids[k : k + 1])
        return OrthoTransform(mats[0]), float(cand.est[k])

    def _merge_cands(self, idx, ids, det, axes, angles, iden, quats, est, m):
        cand = self.cands.get(idx)
        if cand is None:
            self.cands[idx] = _Candidates(
                ids, det, axes, angles, iden, quats, est, m, np.ones(len(ids), bool)
            )
            return
        fresh = ~np.isin(ids, cand.ids, assume_unique=True)
        upd = np.isin(cand.ids, ids, assume_unique=True)
        # refresh estimates of previously known candidates that got better m
        pos_in_new = {int(i): k for k, i in enumerate(ids)}
        for j in np.nonzero(upd)[0]:
            k = pos_in_new[int(cand.ids[j])]
            if m[k] > cand.m[j]:
                cand.m[j] = m[k]
                cand.est[j] = est[k]
        if fresh.any():
            self.cands[idx] = _Candidates(
                np.concatenate([cand.ids, ids[fresh]]),
                np.concatenate([cand.det, det[fresh]]),
                np.concatenate([cand.axes, axes[fresh]]),
                np.concatenate([cand.angles, angles[fresh]]),
                np.concatenate([cand.iden, iden[fresh]]),
                np.concatenate([cand.quats, quats[fresh]]),
                np.concatenate([cand.est, est[fresh]]),
                np.concatenate([cand.m, m[fresh]]),
                np.concatenate([cand.alive, np.ones(fresh.sum(), bool)]),
            )

    def _run_full(self) -> tuple[OrthoTransform, float]:
        cfg = self.cfg
        net = self.net
        act = np.nonzero(net.active)[0]
        todo = act[np.isnan(self.base_est[act])]
        m0 = self._m_level(0)
        if len(todo):
            self.base_est[todo] = self._estimate(
                0, todo.astype(np.int64), net.matrices[todo], m0
            )
            self.base_m[todo] = m0
        est = self.base_est[act]
        m_have = self.base_m[act]
        k = int(np.argmin(est))
        best_mat, best = net.matrices[act[k]], float(est[k])
        last = len(self.deltas) - 1
        if last == 0:
            self.explored = True
            return OrthoTransform(best_mat), best

        # tighten level 0 in place (cached for later iterations)
        pos, est_t, m_t = self._tighten(
            0, act.astype(np.int64), net.matrices[act], est, m_have.copy(), last > 0
        )
        sel = act[pos]
        self.base_est[sel] = est_t
        self.base_m[sel] = m_t
        k = int(np.argmin(est_t))
        best_mat, best = net.matrices[sel[k]], float(est_t[k])
        if best - self._slack(0, best, int(m_t[k])) > self._gate():
            self.explored = True
            return OrthoTransform(best_mat), best

        keep = np.nonzero(self._keep_mask(0, est_t, m_t, best))[0]
        thin = self._thin(
            self._level(1).rho_prime,
            net.det_signs[sel[keep]],
            net.quats[sel[keep]],
            est_t[keep],
        )
        keep = keep[thin]
        if len(keep) > cfg.max_survivors:
            keep = keep[np.argsort(est_t[keep])[: cfg.max_survivors]]
        surv = sel[keep]
        has_axis = net.axis_index[surv] >= 0
        par_axes = np.where(
            has_axis[:, None],
            net.axes[np.maximum(net.axis_index[surv], 0)],
            [0.0, 0.0, 1.0],
        )
        par_angles = np.where(
            has_axis, net.angles[np.maximum(net.angle_index[surv], 0)], 0.0
        )
        par_det = net.det_signs[surv]
        par_iden = ~has_axis

        for idx in range(1, last + 1):
            ids = self._expand(idx, par_det, par_axes, par_angles, par_iden)
            if len(ids) == 0:
                break
            det, axes, angles, iden, quats, mats = self._decode(idx, ids)
            ok = self.carves.allowed(det, axes, angles, quats)
            if cfg.survival == "empirical":
                # dedupe near-identical children before paying for estimates
                ok = ok.copy()
                live = np.nonzero(ok)[0]
                ok[live] = self._thin(
                    self._level(idx).rho_prime, det[live], quats[live], ids[live]
                )
            ids, det, axes, angles, iden, quats, mats = (
                a[ok] for a in (ids, det, axes, angles, iden, quats, mats)
            )
            if len(ids) == 0:
                break
            est = np.full(len(ids), np.inf)
            m_have = np.zeros(len(ids), dtype=np.int64)
            cand = self.cands.get(idx)
            if cand is not None:
                hit = np.isin(ids, cand.ids, assume_unique=True)
                if hit.any():
                    lut = {int(i): j for j, i in enumerate(cand.ids)}
                    rows = np.fromiter(
                        (lut[int(i)] for i in ids[hit]), dtype=np.int64, count=int(hit.sum())
                    )
                    est[hit] = cand.est[rows]
                    m_have[hit] = cand.m[rows]
            pos, est_t, m_t = self._tighten(idx, ids, mats, est, m_have, idx < last)
            self._merge_cands(
                idx,
                ids[pos],
                det[pos],
                axes[pos],
                angles[pos],
                iden[pos],
                quats[pos],
                est_t,
                m_t,
            )
            k = int(np.argmin(est_t))
            best = float(est_t[k])
            best_mat = mats[pos[k]]
            if best - self._slack(idx, best, int(m_t[k])) > self._gate():
                break
            if idx < last:
                keep = np.nonzero(self._keep_mask(idx, est_t, m_t, best))[0]
                thin = self._thin(
                    self._level(idx + 1).rho_prime,
                    det[pos[keep]],
                    quats[pos[keep]],
                    est_t[keep],
                )
                keep = keep[thin]
                if len(keep) > cfg.max_survivors:
                    keep = keep[np.argsort(est_t[keep])[: cfg.max_survivors]]
                sel2 = pos[keep]
                par_det, par_axes = det[sel2], axes[sel2]
                par_angles, par_iden = angles[sel2], iden[sel2].astype(bool)
                if len(sel2) == 0:
                    break
        self.explored = True
        return OrthoTransform(best_mat), best

    def _slack(self, idx: int, est: float, m: int) -> float:
        cfg = self.cfg
        if cfg.survival == "guaranteed":
            return self.deltas[idx] * 1.5
        sig = np.sqrt(max(est * (1.0 - est), 1e-6) / max(m, 1))
        return cfg.emp_slope * self._level(idx).rho_prime + cfg.emp_nsigma * sig


def detect_best_bnb(
    shape: ShapeRepresentation,
    cfg: DetectionConfig,
    carved: list[OrthoTransform] | None = None,
) -> tuple[OrthoTransform, float]:
    """Coarse-to-fine best-symmetry search; carved transforms are excluded."""
    search = _BnbSearch(shape, cfg)
    if carved:
        search.carve_detected(carved)
    return search.run()


def _nfold_streams(axis: np.ndarray, n: int, count: int) -> np.ndarray:
    """Deterministic sample-stream ids for the members of an n-fold family."""
    q = (np.round((np.asarray(axis) + 2.0) * 1e6)).astype(np.uint64)
    h = _NFOLD_TAG ^ np.uint64(n)
    for c in q:
        h = _mix64(h ^ c)
    return np.array([_mix64(h ^ np.uint64(i)) for i in range(count)], dtype=np.uint64)


def expand_nfold(
    shape: ShapeRepresentation, axis: np.ndarray, cfg: DetectionConfig
) -> SymmetryRecord:
    """Find the maximal n-fold rotation family about an axis.

    Reports the largest n in 2..max_fold whose every member's sampled
    distortion is <= delta; fold 0 (continuous) when every member of every n
    passes; NoFold when not even n = 2 passes.
    """
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    m = required_samples(cfg.delta / 2.0, cfg.p)

    def member_ests(n: int):
        members = nfold_members(axis, n)
        mats = np.stack([t.matrix for t in members])
        streams = _nfold_streams(axis, n, len(members))
        ests = estimate_net(shape, mats, streams, m, cfg.seed)
        return members, ests

    chosen = None
    all_pass = True
    for n in range(cfg.max_fold, 1, -1):
        members, ests = member_ests(n)
        if np.all(ests <= cfg.delta):
            if chosen is None:
                chosen = (n, members, ests)
                if n < cfg.max_fold:
                    all_pass = False
                    break
        else:
            all_pass = False
            if chosen is not None:
                break
    if chosen is None:
        raise NoFold(f"no n-fold rotation about {axis} passes delta={cfg.delta}")
    n, members, ests = chosen
    fold = 0 if (all_pass and n == cfg.max_fold) else n
    rep = members[0]
    return SymmetryRecord(
        transform=rep,
        klass=classify(rep),
        fold=fold,
        distortion=float(ests.max()),
        members=list(zip(members, [float(t) for t in ests])),
    )


def _detect_all_flat(shape: ShapeRepresentation, cfg: DetectionConfig):
    """Flat-net variant of the detect_all loop."""
    net = build_net(cfg.delta, shape.total_variation, shape.radius, cfg.net_size_cap)
    net = carve(net, [identity_transform()], cfg.carve_deg, cfg.carve_mode)
    evaluations = 0
    m = required_samples(cfg.delta / 2.0, cfg.p)
    records = []
    while net.active.any():
        t0 = time.perf_counter()
        R, d = detect_best(shape, net, cfg)
        evaluations += int(net.active.sum()) * m
        if d > cfg.stop_multiplier * cfg.delta:
            break
        record = _make_record(shape, cfg, R, d)
        record.wall_ms = (time.perf_counter() - t0) * 1e3
        records.append(record)
        net = carve(net, _carve_list(record, cfg), cfg.carve_deg, cfg.carve_mode)
    return records, len(net), evaluations


def _make_record(shape, cfg, R: OrthoTransform, d: float) -> SymmetryRecord:
    cls = classify(R)
    if cls.kind == "rotation":
        try:
            record = expand_nfold(shape, cls.axis, cfg)
        except NoFold:
            record = SymmetryRecord(R, cls, 1, d)
    else:
        record = SymmetryRecord(R, cls, 1, d)
    record.distortion = float(min(max(d, record.distortion), 1.0))
    record.indeterminate = record.distortion > cfg.accept_multiplier * cfg.delta
    return record


def _carve_list(record: SymmetryRecord, cfg: DetectionConfig) -> list[OrthoTransform]:
    out = [record.transform] + [m for m, _ in record.members]
    if record.fold == 0:
        out += nfold_members(record.klass.axis, cfg.max_fold)
    return out


def detect_all(shape: ShapeRepresentation, cfg: DetectionConfig) -> DetectionReport:
    """Iterated best-symmetry detection with neighborhood carving.

    The identity's neighborhood is carved before the loop; each iteration
    finds the current best transform, stops when its estimate exceeds
    stop_multiplier * delta or the net is exhausted, expands rotations into
    n-fold families, and carves all detected members before continuing.
    """
    if cfg.method == "flat":
        records, net_size, evaluations = _detect_all_flat(shape, cfg)
    else:
        search = _BnbSearch(shape, cfg)
        search.carve_detected([identity_transform()])
        records = []
        while True:
            t0 = time.perf_counter()
            try:
                R, d = search.run()
            except EmptyNet:
                break
            if d > cfg.stop_multiplier * cfg.delta:
                break
            cls = classify(R)
            if cls.kind == "identity":
                # only reachable with a sub-degree carve radius
                search.carve_detected([R])
                continue
            record = _make_record(shape, cfg, R, d)
            record.wall_ms = (time.perf_counter() - t0) * 1e3
            records.append(record)
            search.carve_detected(_carve_list(record, cfg))
        net_size = len(search.net)
        evaluations = search.evaluations
    records.sort(key=lambda rec: rec.distortion)
    return DetectionReport(
        radius=shape.radius,
        total_variation=shape.total_variation,
        truncation=shape.truncation,
        complexity=shape.complexity,
        dims=shape.volume.dims,
        config=cfg,
        records=records,
        net_size=net_size,
        evaluations=evaluations,
        continuous_reflection_axis=_continuous_reflection_axis(records),
    )


def _continuous_reflection_axis(records: list[SymmetryRecord]) -> list | None:
    """Flag >= 6 reflection planes sharing a common line (continuous family)."""
    normals = [
        rec.klass.axis for rec in records if rec.klass.kind == "plane_reflection"
    ]
    if len(normals) < 6:
        return None
    N = np.stack(normals)
    _, _, vt = np.linalg.svd(N)
    axis = vt[-1]
    if np.max(np.abs(N @ axis)) < np.sin(np.deg2rad(5.0)):
        return [float(t) for t in axis]
    return None


def reflection_distortion_map(
    shape: ShapeRepresentation,
    directions: np.ndarray,
    cfg: DetectionConfig | None = None,
) -> list[tuple[np.ndarray, float]]:
    """Distortion of the Householder reflection for each plane normal.

    Exact evaluation when cfg is None, sampled (eps = delta/2) otherwise.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if len(directions) == 0:
        raise ValueError("directions must be non-empty")
    out = []
    for i, n in enumerate(directions):
        R = reflection_across(n)
        if cfg is None:
            est: DistortionEstimate = exact_distortion(shape, R)
        else:
            est = approx_distortion(shape, R, cfg.delta / 2.0, cfg.p, cfg.seed + i)
        out.append((n / np.linalg.norm(n), est.value))
    return out

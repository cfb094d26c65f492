"""Command-line front end: gen, voxelize, detect, refl-map.

Human-readable summaries go to standard output (plus one JSON stats line for
scripting); machine artifacts are written only to files.  All randomness
funnels through --seed, so outputs are byte-reproducible.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from scipy.spatial.transform import Rotation

from . import shapes, volume
from .detector import DetectionConfig, detect_all, reflection_distortion_map
from .errors import ExcessiveNetSize, VolsymError
from .volume import auto_truncation, read_pasvol, represent, write_pasvol


def _fibonacci_hemisphere(n: int) -> np.ndarray:
    """n nearly uniform directions on the upper hemisphere (z >= 0)."""
    i = np.arange(n)
    ga = np.pi * (3.0 - np.sqrt(5.0))
    z = (i + 0.5) / n  # upper hemisphere only
    rho = np.sqrt(1.0 - z * z)
    return np.stack([rho * np.cos(ga * i), rho * np.sin(ga * i), z], axis=1)


def _cmd_gen(args) -> int:
    params = json.loads(args.params) if args.params else None
    vol = shapes.gen_primitive(args.kind, params, args.max_dim)
    write_pasvol(args.out, vol)
    r = volume.support_radius(vol)
    stats = {
        "kind": args.kind,
        "r": r,
        "dims": list(vol.dims),
        "spacing": vol.spacing,
        "voxels_inside": int((vol.values < 0.5).sum()),
    }
    print(json.dumps(stats))
    return 0


def _cmd_voxelize(args) -> int:
    mesh = shapes.read_mesh(args.infile)
    if args.random_rotate:
        Rm = Rotation.random(random_state=np.random.default_rng(args.seed)).as_matrix()
        mesh = shapes.TriangleMesh(mesh.vertices @ Rm.T, mesh.faces)
    if args.max_dim < 32:
        print(
            f"warning: --max-dim {args.max_dim} is very coarse; "
            "thin features may disappear",
            file=sys.stderr,
        )
    vol = shapes.voxelize_mesh(mesh, args.max_dim)
    write_pasvol(args.out, vol)
    stats = {
        "r": volume.support_radius(vol),
        "dims": list(vol.dims),
        "spacing": vol.spacing,
        "voxels_inside": int((vol.values < 0.5).sum()),
    }
    print(json.dumps(stats))
    return 0


def _load_shape(args):
    vol = read_pasvol(args.infile)
    vol = volume.recenter(vol)
    if args.truncation == "auto":
        K, rep = auto_truncation(vol)
    else:
        K = float(args.truncation)
        rep = represent(vol, K)
    return rep


def _cmd_detect(args) -> int:
    rep = _load_shape(args)
    cfg = DetectionConfig(
        delta=args.delta,
        p=args.prob,
        max_fold=args.max_fold,
        carve_deg=args.carve_deg,
        seed=args.seed,
        coarse_delta=max(args.coarse_delta, args.delta),
        carve_mode=args.carve_mode,
        method="flat" if args.flat else "bnb",
        survival=args.survival,
    )
    report = detect_all(rep, cfg)
    with open(args.out, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    print(
        f"r={report.radius:.4f} V_S={report.total_variation:.4f} "
        f"K={report.truncation:.4f} C={report.complexity:.4f} "
        f"net={report.net_size} symmetries={len(report.records)}"
    )
    for rec in report.records:
        axis = (
            "-"
            if rec.klass.axis is None
            else "({:+.3f},{:+.3f},{:+.3f})".format(*rec.klass.axis)
        )
        fold = {0: "CONT"}.get(rec.fold, str(rec.fold))
        print(
            f"  {rec.klass.kind:<16} fold={fold:<4} axis={axis:<26} "
            f"dist={rec.distortion:.4f}"
        )
    print(json.dumps({"symmetries": len(report.records), "net_size": report.net_size}))
    return 0


def _cmd_refl_map(args) -> int:
    rep = _load_shape(args)
    dirs = _fibonacci_hemisphere(args.directions)
    rows = reflection_distortion_map(rep, dirs, None)
    with open(args.out, "w") as fh:
        for n, d in rows:
            fh.write(f"{n[0]:.6f},{n[1]:.6f},{n[2]:.6f},{d:.6f}\n")
    print(json.dumps({"directions": len(rows), "min": min(d for _, d in rows)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="volsym", description="approximate rigid-symmetry detection for voxel volumes"
    )
    ap.add_argument("--threads", type=int, default=1, help="internal pool cap")
    sub = ap.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate an analytic test solid")
    g.add_argument("kind", choices=["ball", "box", "cylinder", "icosahedron", "dodecahedron", "wireframe_cube"])
    g.add_argument("--params", help="JSON dict of shape parameters")
    g.add_argument("--max-dim", type=int, default=128)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=_cmd_gen)

    v = sub.add_parser("voxelize", help="solid-voxelize an OFF/OBJ mesh")
    v.add_argument("--in", dest="infile", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--max-dim", type=int, default=160)
    v.add_argument("--random-rotate", action="store_true")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(fn=_cmd_voxelize)

    d = sub.add_parser("detect", help="detect all approximate symmetries")
    d.add_argument("--in", dest="infile", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--delta", type=float, default=0.05)
    d.add_argument("--prob", type=float, default=0.01)
    d.add_argument("--max-fold", type=int, default=20)
    d.add_argument("--carve-deg", type=float, default=50.0)
    d.add_argument("--carve-mode", choices=["axis", "geodesic"], default="geodesic")
    d.add_argument("--coarse-delta", type=float, default=0.25)
    d.add_argument("--survival", choices=["empirical", "guaranteed"], default="empirical")
    d.add_argument("--truncation", default="auto", help='"auto" or a fixed K in world units')
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--flat", action="store_true", help="single flat net, no branch-and-bound")
    d.add_argument("--bnb", action="store_true", help="coarse-to-fine search (default)")
    d.set_defaults(fn=_cmd_detect)

    r = sub.add_parser("refl-map", help="reflection distortion sphere map (CSV)")
    r.add_argument("--in", dest="infile", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--directions", type=int, default=1000)
    r.add_argument("--truncation", default="auto", help='"auto" or a fixed K in world units')
    r.set_defaults(fn=_cmd_refl_map)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0,) else 0
    if getattr(args, "cmd", None) == "refl-map" and args.directions < 10:
        print("refl-map needs --directions >= 10", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExcessiveNetSize as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VolsymError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

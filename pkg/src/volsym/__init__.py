"""volsym: approximate global rigid-symmetry detection for voxel volumes.

Detects plane reflections, n-fold and continuous axial rotations, point
inversions and rotoreflections of a volumetrically represented 3D shape,
with a probabilistic guarantee: the best symmetry found is within a chosen
distortion delta of the true optimum with probability at least 1 - p.
"""

from .detector import (
    DetectionConfig,
    DetectionReport,
    SymmetryRecord,
    detect_all,
    detect_best,
    detect_best_bnb,
    expand_nfold,
    reflection_distortion_map,
)
from .distortion import (
    DistortionEstimate,
    approx_distortion,
    exact_distortion,
    required_samples,
    uniform_ball_points,
)
from .ogroup import (
    OrthoTransform,
    TransformClass,
    TransformNet,
    build_net,
    carve,
    classify,
    covering_certificate,
    displacement_distance,
    geodesic_distance,
    nfold_members,
    reflection_across,
    rotation_about,
)
from .shapes import TriangleMesh, gen_primitive, inject_asymmetry, read_mesh, voxelize_mesh
from .volume import (
    ScalarVolume,
    ShapeRepresentation,
    auto_truncation,
    read_pasvol,
    recenter,
    represent,
    sample_trilinear,
    signed_distance,
    support_radius,
    total_variation,
    truncate_levelset,
    write_pasvol,
)

__version__ = "0.1.0"

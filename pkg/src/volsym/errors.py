"""Exception hierarchy for the volsym package."""


class VolsymError(Exception):
    """Base class for all package-specific errors."""


class EmptyShape(VolsymError):
    """The volume is constant: no shape mass, no centroid."""


class DegenerateRadius(VolsymError):
    """An operation required a strictly positive support radius."""


class EmptyPhase(VolsymError):
    """A signed distance transform needs both phases to be non-empty."""


class NotOrthogonal(VolsymError):
    """A matrix failed the orthogonality invariant."""


class ComponentMismatch(VolsymError):
    """Geodesic distance requires both transforms in the same O(3) component."""


class ExcessiveNetSize(VolsymError):
    """The requested precision would produce an impractically large net."""


class EmptyNet(VolsymError):
    """All net elements have been carved away."""


class NoFold(VolsymError):
    """Not even a 2-fold rotation passes the distortion threshold."""


class NotWatertight(VolsymError):
    """The mesh has boundary edges and cannot be solidly voxelized."""


class DegenerateMesh(VolsymError):
    """The mesh has no usable (non-degenerate) faces."""

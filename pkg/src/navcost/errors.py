"""Exception types shared across the navcost pipeline."""


class NavcostError(Exception):
    """Base class for all navcost errors."""


class OutOfImage(NavcostError):
    """Pixel coordinate lies outside the camera image bounds."""


class HorizonError(NavcostError):
    """Viewing ray is parallel to or above the ground plane."""


class BehindCamera(NavcostError):
    """Ground point has non-positive depth along the optical axis."""


class EmptyTrajectory(NavcostError):
    """Trajectory input contains no poses."""


class InsufficientPoints(NavcostError):
    """Too few (or degenerate) points for a line/heading fit."""


class DegenerateRoute(NavcostError):
    """Route is shorter than the requested sample spacing."""


class EmptySequence(NavcostError):
    """An alignment input sequence is empty."""


class OutOfMapBounds(NavcostError):
    """Requested crop window does not fit inside the map raster."""


class InvalidRate(NavcostError):
    """Crop rate outside the supported [0, 0.25] range."""


class DimensionMismatch(NavcostError):
    """Array dimensions disagree where equal shapes are required."""


class IoError(NavcostError):
    """File read/write failure; the message names the offending path."""


class NoFeasibleBranch(NavcostError):
    """No route branch matches the instruction's indicated direction."""


class OffRoad(NavcostError):
    """Pose does not lie on a traversable road region."""


class UnknownBranch(NavcostError):
    """Branch id does not name a drivable route of the world."""


class NoReachableGoal(NavcostError):
    """Every candidate goal cell at the horizon is at floor plausibility."""


class UndefinedMetric(NavcostError):
    """Metric denominator is empty (e.g. empty IOU union)."""


class EmptyPrediction(NavcostError):
    """Predicted mask has no traversable pixels to extract a centerline from."""


class EmptyHorizon(NavcostError):
    """No trajectory pose falls within the evaluation horizon."""

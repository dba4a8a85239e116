class HypersepError(Exception):
    """Base class for library errors."""


class DimensionError(HypersepError, ValueError):
    pass


class IncidenceError(HypersepError):
    """A point lies on a plane where a strict side is required."""

    def __init__(self, point_id, plane_index, value):
        self.point_id = point_id
        self.plane_index = plane_index
        self.value = value
        super().__init__(f"point {point_id} lies on plane {plane_index} (value {value!r})")


class RankDeficient(HypersepError):
    def __init__(self, rank: int, n: int):
        self.rank = rank
        self.n = n
        super().__init__(f"midpoint matrix has rank {rank} < {n}")


class InconsistentSystem(HypersepError):
    """No plane with the fixed constant passes through all given points."""

    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"constraint system is inconsistent (residual {residual:.3g})")


class BootstrapFailed(HypersepError):
    pass


class DegenerateGeometry(HypersepError):
    def __init__(self, message: str, point_ids=()):
        self.point_ids = tuple(point_ids)
        super().__init__(message if not self.point_ids else f"{message} (points {list(self.point_ids)})")


class StateError(HypersepError):
    """Operation not valid for the current state (e.g. unfinished separation)."""

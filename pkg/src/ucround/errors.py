class UCError(Exception):
    """Base class for errors raised by ucround."""


class FleetValidationError(UCError, ValueError):
    """Malformed input data or a violated generator/fleet invariant."""


class InfeasibleError(UCError):
    """No commitment can satisfy the demand and reserve constraints."""


class CurveError(UCError, ValueError):
    """Invalid bid curve or a least-squares fit that cannot be formed."""

"""Quadratic total-cost generators from step-price bid curves.

A bid curve offers output in blocks: block ``i`` covers the MW between the
previous breakpoint (0 for the first block) and ``steps[i].mw`` at a fixed
price. Integrating that step function gives a piecewise-linear total cost,
which is sampled over the economic range and fitted with ``aP^2 + bP + c``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .errors import CurveError
from .fleet import Generator

DEFAULT_GRID_POINTS = 20


@dataclass(frozen=True)
class BidCurve:
    id: str
    no_load_cost: float
    startup_cost: float
    eco_min: float
    eco_max: float
    steps: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple((float(mw), float(pr)) for mw, pr in self.steps))
        if not self.steps:
            raise CurveError(f"curve {self.id}: no steps")
        values = [self.no_load_cost, self.startup_cost, self.eco_min, self.eco_max]
        values += [v for s in self.steps for v in s]
        if not all(np.isfinite(values)):
            raise CurveError(f"curve {self.id}: non-finite value")
        mw = np.array([s[0] for s in self.steps])
        if mw[0] <= 0 or np.any(np.diff(mw) <= 0):
            raise CurveError(f"curve {self.id}: breakpoints must be positive and strictly increasing")
        if not np.isclose(mw[-1], self.eco_max, rtol=1e-12, atol=0.0):
            raise CurveError(f"curve {self.id}: last breakpoint {mw[-1]} != eco_max {self.eco_max}")
        if not 0 <= self.eco_min <= self.eco_max:
            raise CurveError(f"curve {self.id}: eco_min {self.eco_min} outside [0, eco_max]")

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([s[0] for s in self.steps])

    @property
    def prices(self) -> np.ndarray:
        return np.array([s[1] for s in self.steps])

    @property
    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.prices) >= 0))

    def total_cost(self, p, amortize_startup: bool = False) -> np.ndarray:
        """No-load plus the exact integral of the step prices from 0 to ``p``."""
        p = np.asarray(p, dtype=float)
        upper = self.breakpoints
        lower = np.concatenate(([0.0], upper[:-1]))
        covered = np.clip(p[..., None] - lower, 0.0, upper - lower)
        base = self.no_load_cost + (self.startup_cost if amortize_startup else 0.0)
        return base + covered @ self.prices

    @classmethod
    def from_dict(cls, rec: dict) -> "BidCurve":
        try:
            return cls(
                id=str(rec["id"]),
                no_load_cost=float(rec["no_load_cost_usd_per_h"]),
                startup_cost=float(rec.get("startup_usd", 0.0) or 0.0),
                eco_min=float(rec["eco_min_mw"]),
                eco_max=float(rec["eco_max_mw"]),
                steps=tuple((float(s["mw"]), float(s["price_usd_per_mwh"])) for s in rec["steps"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, CurveError):
                raise
            raise CurveError(f"curve {rec.get('id', '?') if isinstance(rec, dict) else '?'}: {exc!r}") from exc

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "no_load_cost_usd_per_h": self.no_load_cost,
            "startup_usd": self.startup_cost,
            "eco_min_mw": self.eco_min,
            "eco_max_mw": self.eco_max,
            "steps": [{"mw": mw, "price_usd_per_mwh": pr} for mw, pr in self.steps],
        }


@dataclass(frozen=True)
class QuadraticFit:
    a: float
    b: float
    c: float
    r_squared: float
    clamped: tuple[str, ...] = ()


@dataclass(frozen=True)
class FitOptions:
    grid_points: int = DEFAULT_GRID_POINTS
    amortize_startup: bool = False
    allow_nonmonotone: bool = False


@dataclass(frozen=True)
class FitReport:
    generator: Generator
    fit: QuadraticFit
    notes: tuple[str, ...] = field(default=())


def integrate_bid_curve(
    curve: BidCurve,
    grid: float,
    amortize_startup: bool = False,
    allow_nonmonotone: bool = False,
) -> list[tuple[float, float]]:
    """Sample the integrated total cost over ``[eco_min, eco_max]``.

    Points are spaced ``grid`` MW apart starting at eco_min, always
    include eco_max, and include every breakpoint inside the range.
    """
    if not grid > 0:
        raise CurveError(f"grid spacing must be positive, got {grid}")
    if not allow_nonmonotone and not curve.is_monotone:
        raise CurveError(f"curve {curve.id}: step prices decrease; pass allow_nonmonotone to fit anyway")
    lo, hi = curve.eco_min, curve.eco_max
    n_steps = int(np.floor((hi - lo) / grid + 1e-9))
    pts = lo + grid * np.arange(n_steps + 1)
    bps = curve.breakpoints
    pts = np.unique(np.concatenate((pts[pts < hi], bps[(bps >= lo) & (bps <= hi)], [lo, hi])))
    # grid points a rounding error away from a breakpoint would only add noise
    keep = np.concatenate((np.diff(pts) > 1e-9 * max(hi - lo, 1.0), [True]))
    keep |= np.isin(pts, bps)
    pts = pts[keep]
    costs = curve.total_cost(pts, amortize_startup)
    return [(float(p), float(v)) for p, v in zip(pts, costs)]


def _r_squared(y: np.ndarray, fitted: np.ndarray) -> float:
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= 1e-30 * max(1.0, float(np.sum(y * y))):
        return 1.0 if ss_res <= 1e-24 * max(1.0, float(np.sum(y * y))) else 0.0
    return float(min(1.0, max(0.0, 1.0 - ss_res / ss_tot)))


def _lstsq(x: np.ndarray, y: np.ndarray, powers: Sequence[int]) -> dict[int, float]:
    basis = np.column_stack([x**k for k in powers])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return dict(zip(powers, coef))


def fit_quadratic(samples: Sequence[tuple[float, float]], nonneg_b: bool = False) -> QuadraticFit:
    """Least squares on {P^2, P, 1}; a negative ``a`` is clamped and {P, 1} refit.

    With ``nonneg_b`` a negative linear term triggers a bounded least-squares
    refit with both ``a`` and ``b`` held nonnegative.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise CurveError("need at least 3 (P, cost) samples")
    p, y = arr[:, 0], arr[:, 1]
    if np.unique(p).size < 3:
        raise CurveError("rank-deficient samples: fewer than 3 distinct P values")
    # work in x = P / scale so the normal matrix stays well conditioned
    scale = float(np.max(np.abs(p)))
    x = p / scale
    coef = _lstsq(x, y, (2, 1, 0))
    clamped = []
    noise = 1e-12 * max(1.0, float(np.max(np.abs(y))))
    if coef[2] <= noise:
        # curvature at rounding level is a linear cost, not a clamp
        if coef[2] < -noise:
            clamped.append("a")
        coef = {2: 0.0, **_lstsq(x, y, (1, 0))}
    if nonneg_b and coef[1] < 0:
        clamped.append("b")
        basis = np.column_stack((x * x, x, np.ones_like(x)))
        sol = lsq_linear(basis, y, bounds=([0.0, 0.0, -np.inf], np.inf), method="bvls", tol=1e-14)
        coef = dict(zip((2, 1, 0), sol.x))
    a, b, c = coef[2] / scale**2, coef[1] / scale, coef[0]
    fitted = a * p * p + b * p + c
    return QuadraticFit(float(a), float(b), float(c), _r_squared(y, fitted), tuple(clamped))


def fit_curve(curve: BidCurve, options: FitOptions = FitOptions()) -> FitReport:
    """Full pipeline for one curve, keeping the fit and any clamp notes."""
    notes = []
    width = curve.eco_max - curve.eco_min
    prices = curve.prices
    if width <= 0:
        # a must-run block: cost is only known at one point, so take it as linear
        p0 = curve.eco_max
        price = float(prices[-1])
        total = float(curve.total_cost(p0, options.amortize_startup))
        fit = QuadraticFit(0.0, price, total - price * p0, 1.0, ())
        notes.append("eco_min == eco_max; linear cost at last step price")
    else:
        samples = integrate_bid_curve(
            curve,
            width / (options.grid_points - 1),
            amortize_startup=options.amortize_startup,
            allow_nonmonotone=options.allow_nonmonotone,
        )
        fit = fit_quadratic(samples)
        if fit.b < 0:
            warnings.warn(f"curve {curve.id}: fitted b={fit.b:.6g} < 0, clamped to 0 and refit", stacklevel=2)
            fit = fit_quadratic(samples, nonneg_b=True)
        notes.extend(f"{name} clamped to 0" for name in fit.clamped)
    gen = Generator(
        id=curve.id,
        p_min=curve.eco_min,
        p_max=curve.eco_max,
        a=fit.a,
        b=fit.b,
        c=fit.c,
        startup_cost=curve.startup_cost,
        first_step_price=float(prices[0]),
        max_step_price=float(prices[-1]),
    )
    return FitReport(gen, fit, tuple(notes))


def bid_curve_to_generator(curve: BidCurve, options: FitOptions = FitOptions()) -> Generator:
    return fit_curve(curve, options).generator


def load_curves(path) -> list[BidCurve]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CurveError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list):
        raise CurveError(f"{path}: expected a JSON array of curves")
    curves = [BidCurve.from_dict(rec) for rec in data]
    ids = [c.id for c in curves]
    if len(set(ids)) != len(ids):
        raise CurveError(f"{path}: duplicate curve ids")
    return curves


def write_curves(curves: Sequence[BidCurve], path) -> None:
    Path(path).write_text(json.dumps([c.to_dict() for c in curves], indent=2) + "\n")

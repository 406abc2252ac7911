"""Generator and fleet data model, file ingestion and fleet replication."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import FleetValidationError, InfeasibleError

#: fraction of total capacity used as demand when none is given
DEFAULT_LOAD_FRACTION = 0.8
#: sigma_d as a fraction of demand when none is given
DEFAULT_SIGMA_FRACTION = 0.02

CSV_COLUMNS = (
    "id",
    "p_min_mw",
    "p_max_mw",
    "a_usd_per_mw2h",
    "b_usd_per_mwh",
    "c_usd_per_h",
    "startup_usd",
    "first_step_price",
    "max_step_price",
)
_REQUIRED_COLUMNS = CSV_COLUMNS[:6]
_OPTIONAL_COLUMNS = CSV_COLUMNS[6:]


@dataclass(frozen=True)
class Generator:
    """One unit with total hourly cost ``a*P**2 + b*P + c`` while committed.

    Power in MW, ``a`` in USD/MW^2h, ``b`` in USD/MWh, ``c`` in USD/h.
    ``startup_cost`` and the step prices are metadata carried from the
    source bid curve; they do not enter the objective.
    """

    id: str
    p_min: float
    p_max: float
    a: float
    b: float
    c: float
    startup_cost: float = 0.0
    first_step_price: Optional[float] = None
    max_step_price: Optional[float] = None

    def __post_init__(self):
        for name in ("p_min", "p_max", "a", "b", "c", "startup_cost"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise FleetValidationError(f"unit {self.id!r}: {name} is not finite ({value})")
        if self.p_max <= 0:
            raise FleetValidationError(f"unit {self.id!r}: p_max must be positive (got {self.p_max})")
        if self.p_min < 0:
            raise FleetValidationError(f"unit {self.id!r}: p_min must be nonnegative (got {self.p_min})")
        if self.p_min > self.p_max:
            raise FleetValidationError(
                f"unit {self.id!r}: p_min ({self.p_min}) exceeds p_max ({self.p_max})"
            )
        if self.a < 0:
            raise FleetValidationError(f"unit {self.id!r}: a must be nonnegative (got {self.a})")
        if self.b < 0:
            raise FleetValidationError(f"unit {self.id!r}: b must be nonnegative (got {self.b})")

    def cost(self, p: float) -> float:
        return self.a * p * p + self.b * p + self.c

    def marginal_cost(self, p: float) -> float:
        return 2.0 * self.a * p + self.b


@dataclass(frozen=True)
class ReserveRequirement:
    """Committed capacity (MW) needed to cover demand, its uncertainty and a contingency."""

    value: float


@dataclass(frozen=True)
class Fleet:
    generators: tuple[Generator, ...]
    demand: float
    sigma_d: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        seen = set()
        for g in self.generators:
            if g.id in seen:
                raise FleetValidationError(f"duplicate generator id {g.id!r}")
            seen.add(g.id)
        if not (math.isfinite(self.demand) and self.demand >= 0):
            raise FleetValidationError(f"demand must be a nonnegative number (got {self.demand})")
        if not (math.isfinite(self.sigma_d) and self.sigma_d >= 0):
            raise FleetValidationError(f"sigma_d must be nonnegative (got {self.sigma_d})")

    def __len__(self) -> int:
        return len(self.generators)

    # Column views used by the numerical kernels. Read-only so that workers
    # sharing a fleet cannot mutate it.
    def _column(self, name: str) -> np.ndarray:
        arr = np.array([getattr(g, name) for g in self.generators], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def p_min(self) -> np.ndarray:
        return self._column("p_min")

    @cached_property
    def p_max(self) -> np.ndarray:
        return self._column("p_max")

    @cached_property
    def a(self) -> np.ndarray:
        return self._column("a")

    @cached_property
    def b(self) -> np.ndarray:
        return self._column("b")

    @cached_property
    def c(self) -> np.ndarray:
        return self._column("c")

    @property
    def ids(self) -> list[str]:
        return [g.id for g in self.generators]

    def with_demand(self, demand: Optional[float] = None, sigma_d: Optional[float] = None) -> "Fleet":
        return Fleet(
            self.generators,
            self.demand if demand is None else demand,
            self.sigma_d if sigma_d is None else sigma_d,
        )

    def subset(self, indices: Iterable[int]) -> list[Generator]:
        return [self.generators[i] for i in indices]


def default_demand(generators: Sequence[Generator]) -> tuple[float, float]:
    """Demand and sigma_d used when a fleet file does not carry them."""
    demand = DEFAULT_LOAD_FRACTION * math.fsum(g.p_max for g in generators)
    return demand, DEFAULT_SIGMA_FRACTION * demand


def make_fleet(
    generators: Sequence[Generator],
    demand: Optional[float] = None,
    sigma_d: Optional[float] = None,
) -> Fleet:
    d_default, s_default = default_demand(generators)
    if demand is None:
        demand = d_default
        if sigma_d is None:
            sigma_d = s_default
    if sigma_d is None:
        sigma_d = DEFAULT_SIGMA_FRACTION * demand
    return Fleet(tuple(generators), float(demand), float(sigma_d))


def reserve_requirement(
    fleet: Fleet,
    policy: str = "fleet",
    committed: Optional[Sequence[int]] = None,
) -> ReserveRequirement:
    """``D + 3*sigma_D + max P_max``.

    With ``policy="fleet"`` the max runs over every unit in the fleet. With
    ``policy="committed"`` it runs over ``committed`` (indices), which must be
    given and non-empty.
    """
    if len(fleet) == 0:
        raise FleetValidationError("reserve requirement of an empty fleet is undefined")
    if policy == "fleet":
        largest = max(g.p_max for g in fleet.generators)
    elif policy == "committed":
        if not committed:
            raise ValueError("policy 'committed' needs a non-empty committed set")
        largest = max(fleet.generators[i].p_max for i in committed)
    else:
        raise ValueError(f"unknown reserve policy {policy!r}")
    return ReserveRequirement(fleet.demand + 3.0 * fleet.sigma_d + largest)


def check_full_fleet_feasible(fleet: Fleet, policy: str = "fleet") -> ReserveRequirement:
    """Raise InfeasibleError unless committing every unit meets the reserve."""
    req = reserve_requirement(fleet, policy, committed=range(len(fleet)))
    total = math.fsum(g.p_max for g in fleet.generators)
    if total < req.value * (1.0 - 1e-12):
        raise InfeasibleError(
            f"reserve constraint infeasible: total P_max {total:.6g} MW < "
            f"requirement D + 3*sigma_D + max P_max = {req.value:.6g} MW"
        )
    return req


# ---------------------------------------------------------------- ingestion


def _parse_float(raw: str, unit_id: str, column: str, line: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise FleetValidationError(
            f"line {line}: unit {unit_id!r}: column {column!r} is not a number ({raw!r})"
        ) from None


def _generator_from_record(rec: dict, where: str) -> Generator:
    unit_id = str(rec.get("id", "")).strip()
    if not unit_id:
        raise FleetValidationError(f"{where}: missing id")
    values = {}
    for col in _REQUIRED_COLUMNS[1:]:
        raw = rec.get(col)
        if raw is None or (isinstance(raw, str) and not raw.strip()):
            raise FleetValidationError(f"{where}: unit {unit_id!r}: missing {col!r}")
        try:
            values[col] = float(raw)
        except (TypeError, ValueError):
            raise FleetValidationError(
                f"{where}: unit {unit_id!r}: column {col!r} is not a number ({raw!r})"
            ) from None
    optional = {}
    for col in _OPTIONAL_COLUMNS:
        raw = rec.get(col)
        if raw is None or (isinstance(raw, str) and not raw.strip()):
            optional[col] = None
            continue
        try:
            optional[col] = float(raw)
        except (TypeError, ValueError):
            raise FleetValidationError(
                f"{where}: unit {unit_id!r}: column {col!r} is not a number ({raw!r})"
            ) from None
    return Generator(
        id=unit_id,
        p_min=values["p_min_mw"],
        p_max=values["p_max_mw"],
        a=values["a_usd_per_mw2h"],
        b=values["b_usd_per_mwh"],
        c=values["c_usd_per_h"],
        startup_cost=optional["startup_usd"] or 0.0,
        first_step_price=optional["first_step_price"],
        max_step_price=optional["max_step_price"],
    )


def _read_csv(path: Path) -> list[Generator]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in _REQUIRED_COLUMNS if c not in header]
        if missing:
            raise FleetValidationError(f"{path}: missing required columns {missing}")
        unknown = [c for c in header if c not in CSV_COLUMNS]
        if unknown:
            raise FleetValidationError(f"{path}: unknown columns {unknown}")
        gens = []
        for row in reader:
            if None in row:
                raise FleetValidationError(f"{path}: line {reader.line_num}: too many fields")
            gens.append(_generator_from_record(row, f"{path}: line {reader.line_num}"))
    return gens


def load_fleet(path, format: Optional[str] = None) -> Fleet:
    """Read a fleet from CSV or JSON; generator order follows the file.

    CSV files carry no demand, so the default policy applies (80% of total
    P_max, sigma_d 2% of demand). Raises FleetValidationError on malformed
    input or invariant violations.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        return make_fleet(_read_csv(path))
    if fmt == "json":
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FleetValidationError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(doc, dict) or not isinstance(doc.get("generators"), list):
            raise FleetValidationError(f"{path}: expected an object with a 'generators' array")
        gens = [
            _generator_from_record(rec, f"{path}: generators[{i}]")
            for i, rec in enumerate(doc["generators"])
        ]
        demand = doc.get("demand_mw")
        sigma = doc.get("sigma_d_mw")
        try:
            return make_fleet(
                gens,
                None if demand is None else float(demand),
                None if sigma is None else float(sigma),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, FleetValidationError):
                raise
            raise FleetValidationError(f"{path}: demand_mw/sigma_d_mw must be numbers") from None
    raise FleetValidationError(f"unsupported fleet format {fmt!r} (use csv or json)")


def _generator_record(g: Generator) -> dict:
    return {
        "id": g.id,
        "p_min_mw": g.p_min,
        "p_max_mw": g.p_max,
        "a_usd_per_mw2h": g.a,
        "b_usd_per_mwh": g.b,
        "c_usd_per_h": g.c,
        "startup_usd": g.startup_cost,
        "first_step_price": g.first_step_price,
        "max_step_price": g.max_step_price,
    }


def write_fleet(fleet: Fleet, path, format: Optional[str] = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for g in fleet.generators:
                rec = _generator_record(g)
                writer.writerow({k: "" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v
                                 for k, v in rec.items()})
    elif fmt == "json":
        doc = {
            "demand_mw": fleet.demand,
            "sigma_d_mw": fleet.sigma_d,
            "generators": [_generator_record(g) for g in fleet.generators],
        }
        path.write_text(json.dumps(doc, indent=2) + "\n")
    else:
        raise FleetValidationError(f"unsupported fleet format {fmt!r} (use csv or json)")


# -------------------------------------------------------------- replication


def replicate_fleet(
    fleet: Fleet,
    multiplier: int,
    deviation: float = 0.01,
    seed: int = 0,
) -> Fleet:
    """Stack ``multiplier`` perturbed copies of ``fleet``.

    Each copy scales a, b, c, p_min and p_max of every unit by independent
    factors drawn uniformly from ``[1 - deviation, 1 + deviation]``. Copy
    ``r`` of unit ``g`` gets id ``f"{g.id}#r{r}"``; copies are laid out
    replica by replica. Demand and sigma_d scale with total capacity, so a
    fleet on the default 80%-of-capacity policy stays on it.
    """
    if int(multiplier) != multiplier or multiplier < 1:
        raise ValueError(f"multiplier must be a positive integer (got {multiplier})")
    if not 0.0 <= deviation < 1.0:
        raise ValueError(f"deviation must be in [0, 1) (got {deviation})")
    multiplier = int(multiplier)
    n = len(fleet)
    rng = np.random.default_rng(seed)
    factors = rng.uniform(1.0 - deviation, 1.0 + deviation, size=(multiplier, n, 5))
    if deviation == 0.0:
        factors[:] = 1.0
    gens = []
    for r in range(multiplier):
        for i, g in enumerate(fleet.generators):
            fa, fb, fc, flo, fhi = factors[r, i].tolist()
            p_max = g.p_max * fhi
            p_min = min(g.p_min * flo, p_max)
            gens.append(
                replace(
                    g,
                    id=f"{g.id}#r{r}",
                    a=g.a * fa,
                    b=g.b * fb,
                    c=g.c * fc,
                    p_min=p_min,
                    p_max=p_max,
                )
            )
    old_cap = math.fsum(g.p_max for g in fleet.generators)
    new_cap = math.fsum(g.p_max for g in gens)
    ratio = new_cap / old_cap
    return Fleet(tuple(gens), fleet.demand * ratio, fleet.sigma_d * ratio)


def random_fleet(
    n: int,
    rng: np.random.Generator,
    load_fraction: Optional[float] = None,
    sigma_fraction: float = DEFAULT_SIGMA_FRACTION,
    id_prefix: str = "g",
) -> Fleet:
    """Synthetic fleet with small, fast units.

    P_min 5-30 MW, P_max mostly 50-100 MW with roughly one unit in seven at
    200-300 MW, no-load cost 200-1500 USD/h, startup cost mostly under
    100 USD, marginal prices 20-800 USD/MWh. Demand is ``load_fraction`` of
    the largest demand the reserve constraint admits (drawn from
    [0.3, 0.9] when not given).
    """
    p_min = rng.uniform(5.0, 30.0, n)
    large = rng.random(n) < 0.15
    p_max = np.where(large, rng.uniform(200.0, 300.0, n), rng.uniform(50.0, 100.0, n))
    p_max = np.maximum(p_max, p_min + 15.0)
    b = rng.uniform(20.0, 150.0, n)
    a = np.where(rng.random(n) < 0.2, 0.0, rng.uniform(0.0, 1.0, n) * (800.0 - b) / (2.0 * p_max))
    a = np.minimum(a, 2.0)
    c = rng.uniform(200.0, 1500.0, n)
    startup = np.where(rng.random(n) < 0.8, rng.uniform(0.0, 100.0, n), rng.uniform(100.0, 6000.0, n))
    gens = [
        Generator(
            id=f"{id_prefix}{i}",
            p_min=float(p_min[i]),
            p_max=float(p_max[i]),
            a=float(a[i]),
            b=float(b[i]),
            c=float(c[i]),
            startup_cost=float(startup[i]),
            first_step_price=float(b[i] + 2.0 * a[i] * p_min[i]),
            max_step_price=float(b[i] + 2.0 * a[i] * p_max[i]),
        )
        for i in range(n)
    ]
    if load_fraction is None:
        load_fraction = float(rng.uniform(0.3, 0.9))
    d_max = (float(p_max.sum()) - float(p_max.max())) / (1.0 + 3.0 * sigma_fraction)
    demand = load_fraction * d_max
    return Fleet(tuple(gens), demand, sigma_fraction * demand)

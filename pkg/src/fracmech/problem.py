"""YAML problem files: one model, its grid, and optional boundary and trajectory data.

Example::

    grid: {a: 0.0, b: 1.0, n_points: 257}
    orders: {alpha: 0.5}
    coords: [q1, q2]
    lagrangian:
      linear_velocity:
        a: [q2, "0"]
        V: 0.5 * (q1^2 + q2^2)
    boundary: {left: [1.0, null], right: [null, 0.0]}
    trajectory:
      q1: sin(t)
      q2: [0.0, 0.1, ...]

A ``general`` Lagrangian is written over ladder names instead, e.g.
``{L: "0.5 * q1_1^2", N: 1, N_prime: 0}``. Trajectory entries keyed by a
coordinate name are expanded into the full ladder; entries keyed by a
generated name (``p1_0``, ``lam1``, ...) are stored as given.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
import yaml

from . import expr as ex
from .errors import FracMechError
from .frac_ops import FracOrders, Grid
from .solver import BoundarySpec
from .varprob import (
    TIME,
    ConstraintSpec,
    CoordinateSystem,
    LagrangianSpec,
    LinearVelocityLagrangian,
    PhaseTrajectory,
    augment,
    ladder_samples,
    lvl_to_lagrangian,
)


class ProblemFileError(FracMechError, ValueError):
    """A problem file is malformed or inconsistent."""


_TOP_KEYS = {"grid", "orders", "coords", "lagrangian", "constraints", "boundary", "trajectory"}
_REQUIRED = {"grid", "orders", "lagrangian"}
_EXPR_TYPES = ex.Expr.__args__


@dataclass(frozen=True)
class ProblemFile:
    grid: Grid
    orders: FracOrders
    names: tuple[str, ...]
    kind: str  # "linear_velocity" or "general"
    a: tuple[ex.Expr, ...] = ()
    V: ex.Expr = ex.ZERO
    L: ex.Expr = ex.ZERO
    N: int = 1
    N_prime: int = 0
    constraints: tuple[ex.Expr, ...] = ()
    boundary: BoundarySpec | None = None
    trajectory: tuple[tuple[str, Any], ...] = ()

    # -- model construction ------------------------------------------------------

    def lvl(self) -> LinearVelocityLagrangian:
        if self.kind != "linear_velocity":
            raise ProblemFileError("this operation needs a linear_velocity Lagrangian")
        return LinearVelocityLagrangian(self.a, self.V, self.orders.alpha, self.names)

    def coords(self) -> CoordinateSystem:
        if self.kind == "linear_velocity":
            return self.lvl().coords
        return CoordinateSystem(len(self.names), self.N, self.N_prime, self.names)

    def lagrangian(self):
        """The model as a ladder-variable Lagrangian, augmented if constraints are present."""
        if self.kind == "linear_velocity":
            spec = lvl_to_lagrangian(self.lvl())
            spec = LagrangianSpec(spec.coords, spec.L, self.orders)
        else:
            spec = LagrangianSpec(self.coords(), self.L, self.orders)
        if self.constraints:
            return augment(spec, ConstraintSpec(self.constraints))
        return spec

    def phase_trajectory(self) -> PhaseTrajectory:
        if not self.trajectory:
            raise ProblemFileError("problem file has no trajectory section")
        grid, coords = self.grid, self.coords()
        t = grid.nodes
        values = {}
        for name, entry in self.trajectory:
            if isinstance(entry, _EXPR_TYPES):
                v = ex.evaluate(entry, {TIME: t})
                values[name] = np.broadcast_to(np.asarray(v, dtype=float), t.shape).copy()
            else:
                values[name] = np.asarray(entry, dtype=float)
        missing = [n for n in coords.names if n not in values]
        if missing:
            raise ProblemFileError(f"trajectory lacks coordinates {missing}")
        traj = ladder_samples([values[n] for n in coords.names], coords, self.orders, grid)
        extra = {k: v for k, v in values.items() if k not in coords.names}
        return traj.with_samples(**extra) if extra else traj

    # -- serialization -------------------------------------------------------------

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "grid": {"a": self.grid.a, "b": self.grid.b, "n_points": self.grid.n_points},
            "orders": {"alpha": self.orders.alpha, "beta": self.orders.beta},
            "coords": list(self.names),
        }
        if self.kind == "linear_velocity":
            body = {"a": [ex.to_text(e) for e in self.a], "V": ex.to_text(self.V)}
        else:
            body = {"L": ex.to_text(self.L), "N": self.N, "N_prime": self.N_prime}
        out["lagrangian"] = {self.kind: body}
        if self.constraints:
            out["constraints"] = [ex.to_text(c) for c in self.constraints]
        if self.boundary is not None:
            out["boundary"] = {"left": list(self.boundary.left), "right": list(self.boundary.right)}
        if self.trajectory:
            out["trajectory"] = {
                name: ex.to_text(v) if isinstance(v, _EXPR_TYPES) else [float(x) for x in v]
                for name, v in self.trajectory
            }
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _section(data: Mapping, key: str, allowed: set[str], required: set[str] = frozenset()):
    value = data.get(key)
    if not isinstance(value, Mapping):
        raise ProblemFileError(f"section {key!r} must be a mapping")
    unknown = sorted(set(value) - allowed)
    if unknown:
        raise ProblemFileError(f"unknown keys in {key!r}: {unknown}")
    missing = sorted(required - set(value))
    if missing:
        raise ProblemFileError(f"section {key!r} is missing {missing}")
    return value


def _expr(text, declared, what: str) -> ex.Expr:
    if isinstance(text, bool) or not isinstance(text, (str, int, float)):
        raise ProblemFileError(f"{what} must be an expression string")
    return ex.parse(str(text), declared)


def from_dict(data: Mapping) -> ProblemFile:
    if not isinstance(data, Mapping):
        raise ProblemFileError("problem file must be a mapping at top level")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ProblemFileError(f"unknown top-level keys: {unknown}")
    missing = sorted(_REQUIRED - set(data))
    if missing:
        raise ProblemFileError(f"missing sections: {missing}")

    g = _section(data, "grid", {"a", "b", "n_points"}, {"a", "b", "n_points"})
    grid = Grid(g["a"], g["b"], g["n_points"])
    o = _section(data, "orders", {"alpha", "beta"}, {"alpha"})
    orders = FracOrders(o["alpha"], o.get("beta"))

    lag = _section(data, "lagrangian", {"linear_velocity", "general"})
    if len(lag) != 1:
        raise ProblemFileError("lagrangian needs exactly one of linear_velocity, general")
    kind = next(iter(lag))

    names = data.get("coords")
    if names is not None and (
        not isinstance(names, list) or not all(isinstance(n, str) for n in names)
    ):
        raise ProblemFileError("coords must be a list of names")

    fields: dict[str, Any] = {}
    if kind == "linear_velocity":
        body = _section(lag, kind, {"a", "V"}, {"a"})
        a_texts = body["a"]
        if not isinstance(a_texts, list) or not a_texts:
            raise ProblemFileError("linear_velocity.a must be a non-empty list")
        names = tuple(names or (f"q{r + 1}" for r in range(len(a_texts))))
        if len(names) != len(a_texts):
            raise ProblemFileError(f"{len(a_texts)} coefficients for {len(names)} coordinates")
        fields["a"] = tuple(_expr(t, names, f"a_{j + 1}") for j, t in enumerate(a_texts))
        fields["V"] = _expr(body.get("V", "0"), names, "V")
        coords = CoordinateSystem(len(names), 1, 0, names)
    else:
        body = _section(lag, kind, {"L", "N", "N_prime", "R"}, {"L"})
        R = body.get("R", len(names) if names else None)
        if R is None:
            raise ProblemFileError("general Lagrangian needs coords or R")
        names = tuple(names or (f"q{r + 1}" for r in range(R)))
        coords = CoordinateSystem(len(names), int(body.get("N", 1)), int(body.get("N_prime", 0)), names)
        fields["N"], fields["N_prime"] = coords.N, coords.N_prime
        fields["L"] = _expr(body["L"], set(coords.ladder_vars()) | {TIME}, "L")
        names = coords.names

    ladder = set(coords.ladder_vars()) | {TIME}
    constraints = data.get("constraints") or []
    if not isinstance(constraints, list):
        raise ProblemFileError("constraints must be a list of expressions")
    fields["constraints"] = tuple(
        _expr(c, ladder, f"constraint {m + 1}") for m, c in enumerate(constraints)
    )

    if "boundary" in data:
        b = _section(data, "boundary", {"left", "right"})
        left = b.get("left") or [None] * len(names)
        right = b.get("right") or [None] * len(names)
        if len(left) != len(names) or len(right) != len(names):
            raise ProblemFileError("boundary lists must have one entry per coordinate")
        fields["boundary"] = BoundarySpec(tuple(left), tuple(right))

    if "trajectory" in data:
        traj = data["trajectory"]
        if not isinstance(traj, Mapping):
            raise ProblemFileError("trajectory must map names to expressions or sample lists")
        entries = []
        for name, value in traj.items():
            if isinstance(value, list):
                if len(value) != grid.n_points:
                    raise ProblemFileError(
                        f"trajectory {name!r} has {len(value)} samples, grid has {grid.n_points}"
                    )
                entries.append((str(name), tuple(float(v) for v in value)))
            else:
                entries.append((str(name), _expr(value, {TIME}, f"trajectory {name!r}")))
        fields["trajectory"] = tuple(entries)

    return ProblemFile(grid, orders, tuple(names), kind, **fields)


def loads(text: str) -> ProblemFile:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ProblemFileError(f"invalid YAML: {err}") from None
    return from_dict(data)


def load(path) -> ProblemFile:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())

"""Data model for fractional variational problems.

Generated variable names follow one scheme everywhere:

* ``q{r}_{n}``  left ladder ``(aD_t^alpha)^n x_r`` for ``n = 0..N`` (``q{r}_0`` is ``x_r``)
* ``Q{r}_{n}``  right ladder ``(tD_b^beta)^n x_r`` for ``n = 1..N'``
* ``p{r}_{n}``, ``pi{r}_{n}``  conjugate momenta
* ``lam{m}``    constraint multipliers
* ``t``         time

Indices ``r`` and ``m`` are 1-based in names and 0-based in Python APIs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import DomainError, UsageError
from .frac_ops import FracOrders, Grid, SampledFunction, Side, build_operator, sequential_apply

TIME = "t"


def q_name(r: int, n: int) -> str:
    return f"q{r + 1}_{n}"


def Q_name(r: int, n: int) -> str:
    return f"Q{r + 1}_{n}"


def p_name(r: int, n: int) -> str:
    return f"p{r + 1}_{n}"


def pi_name(r: int, n: int) -> str:
    return f"pi{r + 1}_{n}"


def lam_name(m: int) -> str:
    return f"lam{m + 1}"


_GENERATED = re.compile(r"^(q|Q|p|pi)\d+_\d+$|^lam\d+$|^t$")


@dataclass(frozen=True)
class CoordinateSystem:
    """``R`` fundamental coordinates with left/right ladder depths ``N``, ``N'``."""

    R: int
    N: int = 1
    N_prime: int = 0
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.R < 1:
            raise DomainError(f"need at least one coordinate, got R={self.R}")
        if self.N < 0 or self.N_prime < 0 or (self.N < 1 and self.N_prime < 1):
            raise DomainError("need N >= 1 or N' >= 1")
        names = tuple(self.names) or tuple(f"q{r + 1}" for r in range(self.R))
        if len(names) != self.R:
            raise DomainError(f"expected {self.R} coordinate names, got {len(names)}")
        if len(set(names)) != len(names):
            raise DomainError(f"coordinate names must be unique: {names}")
        for name in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name) or name in ex.FUNCTIONS:
                raise DomainError(f"invalid coordinate name {name!r}")
            if _GENERATED.match(name):
                raise DomainError(f"coordinate name {name!r} clashes with a generated name")
        object.__setattr__(self, "names", names)

    def left_vars(self) -> list[str]:
        return [q_name(r, n) for r in range(self.R) for n in range(self.N + 1)]

    def right_vars(self) -> list[str]:
        return [Q_name(r, n) for r in range(self.R) for n in range(1, self.N_prime + 1)]

    def ladder_vars(self) -> list[str]:
        return self.left_vars() + self.right_vars()

    def momentum_vars(self) -> list[str]:
        out = [p_name(r, n) for r in range(self.R) for n in range(self.N)]
        out += [pi_name(r, n) for r in range(self.R) for n in range(self.N_prime)]
        return out

    def conjugate_pairs(self) -> list[tuple[str, str]]:
        """Pairs ``(q_n, p_n)`` for ``n < N`` and ``(Q_n', pi_n')`` for ``n' < N'``.

        ``Q_0`` is the coordinate itself, so ``q{r}_0`` is paired with both
        ``p{r}_0`` and ``pi{r}_0``; the top ladder variables have no momentum.
        """
        pairs = [(q_name(r, n), p_name(r, n)) for r in range(self.R) for n in range(self.N)]
        for r in range(self.R):
            for n in range(self.N_prime):
                Q = q_name(r, 0) if n == 0 else Q_name(r, n)
                pairs.append((Q, pi_name(r, n)))
        return pairs


@dataclass(frozen=True)
class LagrangianSpec:
    coords: CoordinateSystem
    L: ex.Expr
    orders: FracOrders

    def __post_init__(self):
        _check_declared(self.L, set(self.coords.ladder_vars()) | {TIME}, "Lagrangian")

    @property
    def lagrangian(self) -> ex.Expr:
        return self.L

    @property
    def multipliers(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class ConstraintSpec:
    phis: tuple[ex.Expr, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "phis", tuple(self.phis))
        for m, phi in enumerate(self.phis):
            if not ex.free_vars(phi):
                raise DomainError(f"constraint {m + 1} is constant: {ex.to_text(phi)}")

    @property
    def M(self) -> int:
        return len(self.phis)


@dataclass(frozen=True)
class AugmentedLagrangian:
    """``L + sum_m lam_m * Phi_m`` with the sum expanded term by term."""

    base: LagrangianSpec
    constraints: ConstraintSpec
    multipliers: tuple[str, ...]
    L_bar: ex.Expr

    @property
    def coords(self) -> CoordinateSystem:
        return self.base.coords

    @property
    def orders(self) -> FracOrders:
        return self.base.orders

    @property
    def lagrangian(self) -> ex.Expr:
        return self.L_bar


@dataclass(frozen=True)
class LinearVelocityLagrangian:
    """``L = sum_j a_j(q) aD_t^alpha q_j - V(q)`` with ``a_j`` and ``V`` over coordinate names."""

    a: tuple[ex.Expr, ...]
    V: ex.Expr
    alpha: float
    names: tuple[str, ...] = ()

    def __post_init__(self):
        a = tuple(self.a)
        object.__setattr__(self, "a", a)
        coords = CoordinateSystem(len(a), 1, 0, tuple(self.names))
        object.__setattr__(self, "names", coords.names)
        FracOrders(self.alpha)
        object.__setattr__(self, "alpha", float(self.alpha))
        allowed = set(coords.names)
        for j, aj in enumerate(a):
            _check_declared(aj, allowed, f"coefficient a_{j + 1}")
        _check_declared(self.V, allowed, "potential V")

    @property
    def R(self) -> int:
        return len(self.a)

    @property
    def coords(self) -> CoordinateSystem:
        return CoordinateSystem(self.R, 1, 0, self.names)

    @property
    def orders(self) -> FracOrders:
        return FracOrders(self.alpha)

    def to_ladder(self, e: ex.Expr) -> ex.Expr:
        """Rewrite an expression over coordinate names onto ``q{r}_0``."""
        return ex.rename(e, {name: q_name(r, 0) for r, name in enumerate(self.names)})

    def from_ladder_names(self) -> dict[str, str]:
        """Display names: ``q{r}_0 -> name_r``, ``q{r}_1 -> name_r_1``, ``p{r}_0 -> p{r}``."""
        out = {}
        for r, name in enumerate(self.names):
            out[q_name(r, 0)] = name
            out[q_name(r, 1)] = f"{name}_1"
            out[p_name(r, 0)] = f"p{r + 1}"
            out[p_name(r, 1)] = f"p{r + 1}_1"
        return out


def _check_declared(e: ex.Expr, allowed: set[str], what: str) -> None:
    extra = sorted(ex.free_vars(e) - allowed)
    if extra:
        raise ex.UndeclaredVariableError(extra[0], context=what)


def lvl_to_lagrangian(lvl: LinearVelocityLagrangian) -> LagrangianSpec:
    velocity_terms = [
        ex.mul(lvl.to_ladder(aj), ex.Var(q_name(j, 1))) for j, aj in enumerate(lvl.a)
    ]
    L = ex.sub(ex.total(velocity_terms), lvl.to_ladder(lvl.V))
    return LagrangianSpec(lvl.coords, L, lvl.orders)


def augment(spec: LagrangianSpec, constraints: ConstraintSpec) -> AugmentedLagrangian:
    coords = spec.coords
    if constraints.M >= coords.R:
        raise DomainError(
            f"{constraints.M} constraints for {coords.R} coordinates; independent "
            "constraints require m < R"
        )
    allowed = set(coords.ladder_vars()) | {TIME}
    for m, phi in enumerate(constraints.phis):
        _check_declared(phi, allowed, f"constraint {m + 1}")
    multipliers = tuple(lam_name(m) for m in range(constraints.M))
    L_bar = spec.L
    for lam, phi in zip(multipliers, constraints.phis):
        L_bar = ex.add(L_bar, ex.mul(ex.Var(lam), phi))
    return AugmentedLagrangian(spec, constraints, multipliers, L_bar)


@dataclass(frozen=True, eq=False)
class PhaseTrajectory:
    """Named sample arrays on a common grid.

    Nothing ties the ladder or momentum samples to each other; consistency
    between them is checked by the residual evaluators, not assumed here.
    """

    grid: Grid
    samples: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        frozen = {}
        for name, values in self.samples.items():
            arr = np.array(values, dtype=float)
            if arr.shape != (self.grid.n_points,):
                raise UsageError(
                    f"samples for {name!r} have shape {arr.shape}, grid has {self.grid.n_points} nodes"
                )
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"samples for {name!r} are not finite")
            arr.setflags(write=False)
            frozen[name] = arr
        object.__setattr__(self, "samples", frozen)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.samples[name]
        except KeyError:
            raise UsageError(f"trajectory has no samples for {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.samples

    def binding(self) -> dict[str, np.ndarray]:
        out = dict(self.samples)
        out[TIME] = self.grid.nodes
        return out

    def with_samples(self, **extra: np.ndarray) -> "PhaseTrajectory":
        merged = dict(self.samples)
        merged.update(extra)
        return PhaseTrajectory(self.grid, merged)


def ladder_samples(
    xs: Sequence[SampledFunction | np.ndarray],
    coords: CoordinateSystem,
    orders: FracOrders,
    grid: Grid,
) -> PhaseTrajectory:
    """Fill ``q{r}_n`` by repeated left derivatives and ``Q{r}_n'`` by right ones."""
    if len(xs) != coords.R:
        raise UsageError(f"expected {coords.R} sampled coordinates, got {len(xs)}")
    left = build_operator(Side.LEFT, orders.alpha, grid)
    right = build_operator(Side.RIGHT, orders.beta, grid) if coords.N_prime else None
    samples = {}
    for r, x in enumerate(xs):
        if not isinstance(x, SampledFunction):
            x = SampledFunction(grid, x)
        elif x.grid != grid:
            raise UsageError(f"coordinate {r + 1} is sampled on a different grid")
        for n in range(coords.N + 1):
            samples[q_name(r, n)] = sequential_apply(left, x, n).values
        for n in range(1, coords.N_prime + 1):
            samples[Q_name(r, n)] = sequential_apply(right, x, n).values
    return PhaseTrajectory(grid, samples)

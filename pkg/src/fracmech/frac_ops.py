"""Left and right Riemann-Liouville derivatives on uniform grids.

The discrete operators use the standard (unshifted) Grunwald-Letnikov
convolution, which is first-order accurate. Two independent references
are provided for testing: the closed-form power rule and a direct
quadrature of the defining integral.
"""

from __future__ import annotations

import enum
import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import AccuracyError, DomainError, UsageError


class Side(enum.Enum):
    """Which end of the interval the operator integrates from."""

    LEFT = "left"
    RIGHT = "right"

    @classmethod
    def parse(cls, value: "Side | str") -> "Side":
        if isinstance(value, Side):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown side {value!r}; expected 'left' or 'right'") from None


@dataclass(frozen=True)
class Grid:
    """Uniform mesh ``t_i = a + i*h`` on ``[a, b]`` with ``n_points`` nodes."""

    a: float
    b: float
    n_points: int

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if int(self.n_points) != self.n_points:
            raise DomainError(f"n_points must be an integer, got {self.n_points!r}")
        object.__setattr__(self, "n_points", int(self.n_points))
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or not self.a < self.b:
            raise DomainError(f"grid needs finite a < b, got a={self.a}, b={self.b}")
        if self.n_points < 2:
            raise DomainError(f"grid needs n_points >= 2, got {self.n_points}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.n_points)

    def refine(self) -> "Grid":
        """Grid with half the step on the same interval."""
        return Grid(self.a, self.b, 2 * self.n_points - 1)


@dataclass(frozen=True)
class FracOrders:
    """Order ``alpha`` of the left operator and ``beta`` of the right one."""

    alpha: float
    beta: float | None = None

    def __post_init__(self):
        beta = self.alpha if self.beta is None else self.beta
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(beta))
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive, got {value}")

    @property
    def in_main_range(self) -> bool:
        return 0 < self.alpha <= 1 and 0 < self.beta <= 1


@dataclass(frozen=True)
class SampledFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise UsageError(
                f"expected {self.grid.n_points} samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("sampled values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: Grid, f) -> "SampledFunction":
        t = grid.nodes
        return cls(grid, np.broadcast_to(np.asarray(f(t), dtype=float), t.shape))


def gl_weights(order: float, count: int) -> np.ndarray:
    """Grunwald-Letnikov weights ``(-1)^k binom(order, k)`` for ``k < count``."""
    order = float(order)
    if not (math.isfinite(order) and order > 0):
        raise DomainError(f"order must be positive, got {order}")
    if count < 1:
        raise DomainError(f"count must be at least 1, got {count}")
    return _gl_weights_cached(order, int(count)).copy()


@functools.lru_cache(maxsize=64)
def _gl_weights_cached(order: float, count: int) -> np.ndarray:
    w = np.empty(count)
    w[0] = 1.0
    for k in range(1, count):
        w[k] = w[k - 1] * (1.0 - (order + 1.0) / k)
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense matrix realizing one fractional derivative on a grid.

    Node 0 of a left operator (node ``n-1`` of a right one) only sees the
    ``w_0`` term and is treated as boundary-affected by all consumers.
    """

    side: Side
    order: float
    grid: Grid
    entries: np.ndarray

    @property
    def boundary_node(self) -> int:
        return 0 if self.side is Side.LEFT else self.grid.n_points - 1

    def matvec(self, values: np.ndarray) -> np.ndarray:
        """Apply to raw samples; trailing batch columns are allowed."""
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.grid.n_points:
            raise UsageError(
                f"operator has {self.grid.n_points} nodes, samples have {values.shape[0]}"
            )
        return self.entries @ values

    def __matmul__(self, values):
        return self.matvec(values)


def build_operator(side: Side | str, order: float, grid: Grid) -> OperatorMatrix:
    """Grunwald-Letnikov matrix for the left or right RL derivative.

    Cached per ``(side, order, grid)``, so repeated calls hand back the very
    same immutable instance.
    """
    if not isinstance(grid, Grid):
        raise UsageError("build_operator needs a Grid")
    order = float(order)
    if not (math.isfinite(order) and order > 0):
        raise DomainError(f"order must be positive, got {order}")
    return _build_operator_cached(Side.parse(side), order, grid)


@functools.lru_cache(maxsize=32)
def _build_operator_cached(side: Side, order: float, grid: Grid) -> OperatorMatrix:
    left = _left_entries(order, grid)
    entries = left if side is Side.LEFT else np.ascontiguousarray(left.T)
    entries.setflags(write=False)
    return OperatorMatrix(side, order, grid, entries)


@functools.lru_cache(maxsize=32)
def _left_entries(order: float, grid: Grid) -> np.ndarray:
    n = grid.n_points
    scaled = _gl_weights_cached(order, n) * grid.h ** (-order)
    lag = np.subtract.outer(np.arange(n), np.arange(n))
    entries = np.where(lag >= 0, scaled[np.clip(lag, 0, None)], 0.0)
    entries.setflags(write=False)
    return entries


def apply(op: OperatorMatrix, f: SampledFunction) -> SampledFunction:
    if f.grid != op.grid:
        raise UsageError("sampled function and operator live on different grids")
    return SampledFunction(op.grid, op.entries @ f.values)


def sequential_apply(op: OperatorMatrix, f: SampledFunction, times: int) -> SampledFunction:
    """Apply ``op`` ``times`` times in a row.

    This is literal composition; no semigroup law ``D^a D^a = D^{2a}`` is
    assumed.
    """
    if int(times) != times or times < 0:
        raise UsageError(f"times must be a non-negative integer, got {times!r}")
    if f.grid != op.grid:
        raise UsageError("sampled function and operator live on different grids")
    values = f.values
    for _ in range(int(times)):
        values = op.entries @ values
    return f if times == 0 else SampledFunction(op.grid, values)


def power_rule_oracle(nu: float, order: float, a: float, t):
    """Left RL derivative of ``(t - a)^nu``, i.e. ``G(nu+1)/G(nu+1-order) (t-a)^(nu-order)``.

    Uses the reciprocal gamma function, so the result is exactly zero where
    ``nu + 1 - order`` is a pole of the gamma function.
    """
    if not nu > -1:
        raise DomainError(f"power rule needs nu > -1, got {nu}")
    t = np.asarray(t, dtype=float)
    if np.any(t <= a):
        raise DomainError("power rule is evaluated only for t > a")
    value = special.gamma(nu + 1.0) * special.rgamma(nu + 1.0 - order) * (t - a) ** (nu - order)
    return float(value) if value.ndim == 0 else value


def quadrature_oracle(side, order, f, a, b, t, tol=1e-8, max_levels=10):
    """Reference RL derivative of order in (0, 1) by direct quadrature.

    The fractional integral of order ``1 - order`` is computed after the
    substitution ``tau = t -/+ s**(1/(1-order))``, which removes the kernel
    singularity. Its derivative is taken by central differences refined with
    Richardson extrapolation until two successive diagonal estimates agree
    within ``tol``.
    """
    side = Side.parse(side)
    if not 0 < order < 1:
        raise DomainError(f"quadrature oracle supports 0 < order < 1, got {order}")
    if not a < t < b:
        raise DomainError(f"t={t} must lie strictly inside ({a}, {b})")

    p = 1.0 / (1.0 - order)
    scale = special.rgamma(2.0 - order)

    def frac_integral(s):
        if side is Side.LEFT:
            upper = (s - a) ** (1.0 - order)
            integrand = lambda u: f(s - u**p)  # noqa: E731
        else:
            upper = (b - s) ** (1.0 - order)
            integrand = lambda u: f(s + u**p)  # noqa: E731
        with warnings.catch_warnings():
            # quad flags roundoff when asked for near machine precision; the
            # Richardson bound below is what decides acceptance
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            value, _ = integrate.quad(integrand, 0.0, upper, epsabs=1e-15, epsrel=1e-14, limit=400)
        return scale * value

    sign = 1.0 if side is Side.LEFT else -1.0
    step = 0.25 * min(t - a, b - t)
    table: list[list[float]] = []
    best, bound = math.nan, math.inf
    for level in range(max_levels):
        diff = (frac_integral(t + step) - frac_integral(t - step)) / (2.0 * step)
        row = [sign * diff]
        for j in range(1, level + 1):
            factor = 4.0**j
            row.append(row[j - 1] + (row[j - 1] - table[level - 1][j - 1]) / (factor - 1.0))
        table.append(row)
        if level > 0:
            bound = abs(row[-1] - table[level - 1][-1])
            best = row[-1]
            if bound < tol:
                return best
        step *= 0.5
    raise AccuracyError(
        f"quadrature oracle did not reach tol={tol} after {max_levels} levels",
        estimate=best,
        error_bound=bound,
    )

"""Newton solver for discretized linear-velocity Euler-Lagrange systems.

Unknowns are the coordinate samples at every node that is not pinned by a
boundary value. Equations are the interior rows ``1..n-2`` of each
coordinate's EL residual, plus an endpoint row wherever that equation has
no operator that is boundary-affected there: row 0 of equation ``k`` when
no ``a_j`` depends on ``q_k`` (so no left derivative appears) and row
``n-1`` when ``a_k`` vanishes (so no right derivative appears).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from . import expr as ex
from .dynamics import ConstraintReport, derive_momenta, lvl_el_full, lvl_el_residual, lvl_parts
from .dynamics import primary_constraints
from .errors import ConditioningError, DomainError, UsageError
from .frac_ops import Grid, Side, build_operator
from .varprob import LinearVelocityLagrangian, PhaseTrajectory, lvl_to_lagrangian, p_name, q_name

FD_STEP = 1e-7
MAX_HALVINGS = 30
RCOND_WARN = 1e-10
_BATCH_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class BoundarySpec:
    """Optional fixed values of each coordinate at ``t = a`` and ``t = b``."""

    left: tuple[float | None, ...]
    right: tuple[float | None, ...]

    def __post_init__(self):
        left, right = tuple(self.left), tuple(self.right)
        if len(left) != len(right):
            raise DomainError("left and right boundary lists differ in length")
        for r, (lo, hi) in enumerate(zip(left, right)):
            if lo is None and hi is None:
                raise DomainError(f"coordinate {r + 1} has no boundary condition")
            for v in (lo, hi):
                if v is not None and not np.isfinite(v):
                    raise DomainError(f"boundary value for coordinate {r + 1} is not finite")
        object.__setattr__(self, "left", tuple(None if v is None else float(v) for v in left))
        object.__setattr__(self, "right", tuple(None if v is None else float(v) for v in right))

    @property
    def R(self) -> int:
        return len(self.left)

    @classmethod
    def at_left(cls, values: Sequence[float]) -> "BoundarySpec":
        return cls(tuple(values), (None,) * len(values))


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Residual map ``F(u)`` together with its bookkeeping.

    ``residual`` accepts ``u`` of shape ``(m,)`` or ``(m, B)`` and returns
    equation values with the same trailing shape.
    """

    lvl: LinearVelocityLagrangian
    grid: Grid
    boundary: BoundarySpec
    unknown_mask: np.ndarray  # (R, n) True where the sample is unknown
    equation_mask: np.ndarray  # (R, n) True where the residual row is used
    residual: Callable[[np.ndarray], np.ndarray]
    uncoupled_pins: tuple[str, ...] = ()

    @property
    def n_unknowns(self) -> int:
        return int(self.unknown_mask.sum())

    @property
    def n_equations(self) -> int:
        return int(self.equation_mask.sum())

    @property
    def determination(self) -> str:
        m, k = self.n_equations, self.n_unknowns
        return "square" if m == k else ("overdetermined" if m > k else "underdetermined")

    def describe(self) -> str:
        return f"{self.n_equations} equations, {self.n_unknowns} unknowns ({self.determination})"

    def pinned(self) -> np.ndarray:
        """Coordinate samples with boundary values filled and unknowns zero."""
        q = np.zeros(self.unknown_mask.shape)
        for r in range(self.boundary.R):
            if self.boundary.left[r] is not None:
                q[r, 0] = self.boundary.left[r]
            if self.boundary.right[r] is not None:
                q[r, -1] = self.boundary.right[r]
        return q

    def unpack(self, u: np.ndarray) -> np.ndarray:
        """``(R, n)`` samples (``(R, n, B)`` for batched ``u``)."""
        u = np.asarray(u, dtype=float)
        base = self.pinned()
        if u.ndim == 2:
            base = np.repeat(base[:, :, None], u.shape[1], axis=2)
        base[self.unknown_mask] = u
        return base

    def initial_guess(self) -> np.ndarray:
        """Linear interpolation between pins, falling to zero at an unpinned end."""
        s = (self.grid.nodes - self.grid.a) / (self.grid.b - self.grid.a)
        q = np.empty(self.unknown_mask.shape)
        for r in range(self.boundary.R):
            lo = self.boundary.left[r] or 0.0
            hi = self.boundary.right[r] or 0.0
            q[r] = lo + (hi - lo) * s
        return q[self.unknown_mask]


def assemble_system(
    lvl: LinearVelocityLagrangian, grid: Grid, boundary: BoundarySpec
) -> AssembledSystem:
    if boundary.R != lvl.R:
        raise UsageError(f"boundary data for {boundary.R} coordinates, model has {lvl.R}")
    n, R = grid.n_points, lvl.R
    if n < 3:
        raise DomainError("solving needs at least 3 grid nodes")
    parts = lvl_parts(lvl)
    left = build_operator(Side.LEFT, lvl.alpha, grid)
    right = build_operator(Side.RIGHT, lvl.alpha, grid)

    unknown = np.ones((R, n), dtype=bool)
    for r in range(R):
        unknown[r, 0] = boundary.left[r] is None
        unknown[r, -1] = boundary.right[r] is None
    rows = np.zeros((R, n), dtype=bool)
    rows[:, 1:-1] = True
    for k in range(R):
        rows[k, 0] = all(ex.is_const(d, 0.0) for d in parts.da[k])
        rows[k, -1] = ex.is_const(parts.a[k], 0.0)

    def residual_of(q: np.ndarray) -> np.ndarray:
        qs = list(q)
        xs = [left.entries @ qj for qj in qs]
        full = np.stack(lvl_el_full(parts, qs, xs, right))
        return full[rows]

    system = AssembledSystem(lvl, grid, boundary, unknown, rows, None)

    def residual(u: np.ndarray) -> np.ndarray:
        return residual_of(system.unpack(u))

    object.__setattr__(system, "residual", residual)
    object.__setattr__(system, "uncoupled_pins", _uncoupled_pins(system, residual_of))
    return system


def _uncoupled_pins(system: AssembledSystem, residual_of) -> tuple[str, ...]:
    """Boundary values that no selected equation depends on."""
    pins = [(r, 0, "a") for r in range(system.boundary.R) if system.boundary.left[r] is not None]
    pins += [(r, -1, "b") for r in range(system.boundary.R) if system.boundary.right[r] is not None]
    if not pins:
        return ()
    rng = np.random.default_rng(0)
    base = system.unpack(system.initial_guess()) + 0.1 * rng.standard_normal(
        system.unknown_mask.shape
    )
    batch = np.repeat(base[:, :, None], len(pins) + 1, axis=2)
    for col, (r, i, _) in enumerate(pins, start=1):
        batch[r, i, col] += 1.0
    values = residual_of(batch)
    out = []
    for col, (r, _, end) in enumerate(pins, start=1):
        if np.array_equal(values[:, col], values[:, 0]):
            out.append(f"{system.lvl.names[r]}({end})")
    return tuple(out)


@dataclass(frozen=True, eq=False)
class NewtonResult:
    u: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool
    conditioning_warning: bool = False
    rcond: float | None = None
    history: tuple[float, ...] = ()


def fd_jacobian(residual, u: np.ndarray, f0: np.ndarray | None = None) -> np.ndarray:
    """Forward differences with step ``1e-7 * max(1, |u_i|)``, in column batches."""
    u = np.asarray(u, dtype=float)
    f0 = residual(u) if f0 is None else f0
    m = u.size
    steps = FD_STEP * np.maximum(1.0, np.abs(u))
    J = np.empty((f0.size, m))
    chunk = max(1, _BATCH_ELEMENTS // max(1, 4 * m))
    for start in range(0, m, chunk):
        cols = np.arange(start, min(m, start + chunk))
        U = np.repeat(u[:, None], cols.size, axis=1)
        U[cols, np.arange(cols.size)] += steps[cols]
        J[:, cols] = (residual(U) - f0[:, None]) / steps[cols]
    return J


def _newton_step(J: np.ndarray, F: np.ndarray) -> tuple[np.ndarray, float | None]:
    if J.shape[0] == J.shape[1]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu, piv = linalg.lu_factor(J)
        if not np.all(np.isfinite(lu)) or np.any(np.diag(lu) == 0.0):
            raise ConditioningError("Jacobian is singular")
        anorm = np.linalg.norm(J, 1)
        rcond, info = linalg.lapack.dgecon(lu, anorm, norm="1")
        if info != 0 or rcond < np.finfo(float).eps:
            raise ConditioningError(f"Jacobian is numerically singular (rcond={rcond:.3e})")
        return linalg.lu_solve((lu, piv), -F), float(rcond)
    # minimum-norm Gauss-Newton step; SVD based, so rank deficiency is harmless
    try:
        step, *_ = linalg.lstsq(J, -F, lapack_driver="gelsd")
    except linalg.LinAlgError as err:
        raise ConditioningError(f"least-squares step failed: {err}") from None
    return step, None


def newton_solve(
    residual: Callable[[np.ndarray], np.ndarray],
    u0: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> NewtonResult:
    """Damped Newton iteration on ``residual(u) = 0``.

    Steps are halved (at most 30 times) until the Euclidean residual norm
    decreases; the iteration stops when the max-norm drops below ``tol``,
    after ``max_iter`` steps, or when no damped step makes progress.
    """
    u = np.array(u0, dtype=float)
    F = residual(u)
    norm = _inf_norm(F)
    history = [norm]
    warn, rcond = False, None
    iterations = 0
    while norm >= tol and iterations < max_iter:
        J = fd_jacobian(residual, u, F)
        du, step_rcond = _newton_step(J, F)
        if step_rcond is not None:
            rcond = step_rcond if rcond is None else min(rcond, step_rcond)
            warn = warn or step_rcond < RCOND_WARN
        merit = np.linalg.norm(F)
        lam, accepted = 1.0, False
        for _ in range(MAX_HALVINGS + 1):
            trial = u + lam * du
            F_trial = residual(trial)
            if np.all(np.isfinite(F_trial)) and np.linalg.norm(F_trial) < merit:
                accepted = True
                break
            lam *= 0.5
        iterations += 1
        if not accepted:
            break
        u, F = trial, F_trial
        norm = _inf_norm(F)
        history.append(norm)
    return NewtonResult(u, iterations, norm, bool(norm < tol), warn, rcond, tuple(history))


def _inf_norm(F) -> float:
    return float(np.max(np.abs(F))) if np.size(F) else 0.0


@dataclass(frozen=True, eq=False)
class SolveReport:
    trajectory: PhaseTrajectory
    iterations: int
    residual_norm: float
    converged: bool
    conditioning_warning: bool
    n_unknowns: int
    n_equations: int
    determination: str
    uncoupled_pins: tuple[str, ...] = ()
    el_residual_max: float = float("nan")
    constraints: ConstraintReport | None = None
    rcond: float | None = None
    history: tuple[float, ...] = field(default=())

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "el_residual_max": self.el_residual_max,
            "constraint_violation": None
            if self.constraints is None
            else self.constraints.max_violation,
            "conditioning_warning": self.conditioning_warning,
            "rcond": self.rcond,
            "unknowns": self.n_unknowns,
            "equations": self.n_equations,
            "determination": self.determination,
            "uncoupled_pins": list(self.uncoupled_pins),
        }


def solve_lvl(
    lvl: LinearVelocityLagrangian,
    grid: Grid,
    boundary: BoundarySpec,
    tol: float = 1e-10,
    max_iter: int = 50,
    initial: np.ndarray | None = None,
) -> SolveReport:
    """Assemble, solve, and attach ``q{j}_1 = aD q_j`` and momenta ``p{j}_0 = a_j(q)``."""
    system = assemble_system(lvl, grid, boundary)
    u0 = system.initial_guess() if initial is None else np.asarray(initial, dtype=float)
    if u0.shape != (system.n_unknowns,):
        raise UsageError(f"initial guess needs {system.n_unknowns} values, got {u0.shape}")
    result = newton_solve(system.residual, u0, tol, max_iter)
    q = system.unpack(result.u)
    left = build_operator(Side.LEFT, lvl.alpha, grid)
    samples = {}
    for r in range(lvl.R):
        samples[q_name(r, 0)] = q[r]
        samples[q_name(r, 1)] = left.entries @ q[r]
    binding = dict(samples)
    lag = lvl_to_lagrangian(lvl)
    momenta = derive_momenta(lag)
    for r in range(lvl.R):
        value = ex.evaluate(momenta.expr(r, 0), binding)
        samples[p_name(r, 0)] = np.broadcast_to(value, (grid.n_points,))
    trajectory = PhaseTrajectory(grid, samples)
    constraints = primary_constraints(momenta, lvl, trajectory)
    el_max = lvl_el_residual(lvl, trajectory).max_abs
    return SolveReport(
        trajectory,
        result.iterations,
        result.residual_norm,
        result.converged,
        result.conditioning_warning,
        system.n_unknowns,
        system.n_equations,
        system.determination,
        system.uncoupled_pins,
        el_max,
        constraints,
        result.rcond,
        result.history,
    )

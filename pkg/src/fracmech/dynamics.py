"""Euler-Lagrange and Hamilton machinery for fractional variational problems.

Equations that contain fractional operators are kept as :class:`OpExpr`
values: sums of ``coeff * (D)^k [arg]`` terms whose operator tags are only
resolved into matrices when evaluated on a grid. Everything symbolic goes
through :mod:`fracmech.expr`; nothing here tries to compose RL operators
symbolically.

Residuals are reported on interior nodes ``1..n-2``. The left operator is
boundary-affected at node 0 and the right operator at node ``n-1``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
from scipy import integrate

from . import expr as ex
from .errors import UsageError
from .frac_ops import Grid, Side, build_operator
from .varprob import (
    TIME,
    AugmentedLagrangian,
    CoordinateSystem,
    LagrangianSpec,
    LinearVelocityLagrangian,
    PhaseTrajectory,
    Q_name,
    lvl_to_lagrangian,
    p_name,
    pi_name,
    q_name,
)

AnyLagrangian = Union[LagrangianSpec, AugmentedLagrangian]

EQUIVALENCE_TOL = 1e-12
MISMATCH_FACTOR = 1.0 + 1e-3


# -- operator-valued expressions --------------------------------------------------


@dataclass(frozen=True)
class OpTerm:
    """``coeff * (D_side^order)^power [arg]``; with ``power == 0`` just ``coeff * arg``."""

    coeff: ex.Expr
    arg: ex.Expr = ex.ONE
    side: Side | None = None
    order: float | None = None
    power: int = 0

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("operator power must be non-negative")
        if self.power == 0:
            object.__setattr__(self, "side", None)
            object.__setattr__(self, "order", None)
        elif self.side is None or self.order is None:
            raise ValueError("operator terms need a side and an order")

    @property
    def is_zero(self) -> bool:
        return ex.is_const(self.coeff, 0.0) or ex.is_const(self.arg, 0.0)

    def to_text(self, names: Mapping[str, str] | None = None) -> str:
        coeff = self.coeff if names is None else ex.rename(self.coeff, names)
        arg = self.arg if names is None else ex.rename(self.arg, names)
        if self.power == 0:
            return ex.to_text(ex.mul(coeff, arg))
        tag = "aD" if self.side is Side.LEFT else "tD"
        op = f"{tag}^{ex._number(self.order)}"
        if self.power > 1:
            op = f"({op})^{self.power}"
        applied = f"{op}[{ex.to_text(arg)}]"
        if ex.is_const(coeff, 1.0):
            return applied
        if ex.is_const(coeff, -1.0):
            return f"-{applied}"
        text = ex.to_text(coeff)
        if isinstance(coeff, (ex.Add, ex.Sub)):
            text = f"({text})"
        return f"{text} * {applied}"

    def evaluate(self, binding, grid: Grid, overrides: Mapping[Side, float] | None = None):
        values = _broadcast(ex.evaluate(self.arg, binding), binding, grid)
        if self.power:
            order = self.order if not overrides else overrides.get(self.side, self.order)
            op = build_operator(self.side, order, grid)
            for _ in range(self.power):
                values = op.entries @ values
        coeff = _broadcast(ex.evaluate(self.coeff, binding), binding, grid)
        return coeff * values


def _broadcast(value, binding, grid):
    value = np.asarray(value, dtype=float)
    if value.ndim and value.shape[0] == grid.n_points:
        return value
    like = next((v for v in binding.values() if np.ndim(v) and np.shape(v)[0] == grid.n_points), None)
    shape = np.shape(like) if like is not None else (grid.n_points,)
    return np.broadcast_to(value, shape)


def _term_key(term: OpTerm):
    return (
        term.power,
        "" if term.side is None else term.side.value,
        term.order or 0.0,
        ex.to_text(term.arg),
        ex.to_text(term.coeff),
    )


@dataclass(frozen=True)
class OpExpr:
    terms: tuple[OpTerm, ...] = ()

    def normalized(self) -> "OpExpr":
        """Drop vanishing terms and order the rest canonically."""
        return OpExpr(tuple(sorted((t for t in self.terms if not t.is_zero), key=_term_key)))

    @property
    def is_algebraic(self) -> bool:
        return all(t.power == 0 for t in self.terms)

    @property
    def is_zero(self) -> bool:
        return not self.normalized().terms

    def as_expr(self) -> ex.Expr:
        if not self.is_algebraic:
            raise UsageError("expression still contains fractional operators")
        return ex.total(ex.mul(t.coeff, t.arg) for t in self.terms)

    def free_vars(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for t in self.terms:
            out |= ex.free_vars(t.coeff) | ex.free_vars(t.arg)
        return out

    def to_text(self, names: Mapping[str, str] | None = None) -> str:
        parts = [t.to_text(names) for t in self.normalized().terms]
        if not parts:
            return "0"
        text = parts[0]
        for part in parts[1:]:
            text += f" - {part[1:]}" if part.startswith("-") else f" + {part}"
        return text

    def evaluate(self, binding, grid: Grid, overrides: Mapping[Side, float] | None = None):
        out = np.zeros(_broadcast(0.0, binding, grid).shape)
        for t in self.terms:
            if not t.is_zero:
                out = out + t.evaluate(binding, grid, overrides)
        return out


def plain(e: ex.Expr) -> OpTerm:
    return OpTerm(e)


# -- result containers ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ResidualField:
    """Per-equation residuals on the interior nodes of ``grid``."""

    grid: Grid
    residuals: Mapping[str, np.ndarray]
    excluded_nodes: tuple[int, ...] = ()

    @property
    def nodes(self) -> np.ndarray:
        keep = np.setdiff1d(np.arange(self.grid.n_points), self.excluded_nodes)
        return self.grid.nodes[keep]

    def norms(self) -> dict[str, dict[str, float]]:
        return {
            label: {"max_abs": _max_abs(r), "l2": float(np.sqrt(self.grid.h * np.sum(r * r)))}
            for label, r in self.residuals.items()
        }

    @property
    def max_abs(self) -> float:
        return max((_max_abs(r) for r in self.residuals.values()), default=0.0)

    @property
    def l2(self) -> float:
        return float(np.sqrt(self.grid.h * sum(np.sum(r * r) for r in self.residuals.values())))


def _max_abs(values) -> float:
    return float(np.max(np.abs(values))) if np.size(values) else 0.0


def _interior(full: np.ndarray) -> np.ndarray:
    return np.asarray(full)[1:-1]


def _field(grid: Grid, full: Mapping[str, np.ndarray]) -> ResidualField:
    excluded = (0, grid.n_points - 1)
    return ResidualField(grid, {k: _interior(v) for k, v in full.items()}, excluded)


@dataclass(frozen=True)
class MomentumField:
    """Momenta built as sums of right (left) derivatives of Lagrangian partials.

    ``p[(r, n)]`` for ``n = 0..N`` and ``pi[(r, n)]`` for ``n = 0..N'``; the
    top-level entries are empty sums and hence identically zero.
    """

    coords: CoordinateSystem
    p: Mapping[tuple[int, int], OpExpr]
    pi: Mapping[tuple[int, int], OpExpr]

    def expr(self, r: int, n: int, right: bool = False) -> ex.Expr:
        table = self.pi if right else self.p
        return table[(r, n)].as_expr()

    def vanishing(self) -> list[str]:
        """Names of momenta that vanish identically."""
        out = [p_name(r, n) for (r, n), v in self.p.items() if v.is_zero]
        out += [pi_name(r, n) for (r, n), v in self.pi.items() if v.is_zero]
        return out


@dataclass(frozen=True)
class HamiltonianSpec:
    H: ex.Expr
    coords: CoordinateSystem
    alpha: float
    beta: float
    multipliers: tuple[str, ...] = ()
    momenta: MomentumField | None = field(default=None, compare=False)


@dataclass(frozen=True, eq=False)
class ConstraintReport:
    constraints: tuple[ex.Expr, ...]
    labels: tuple[str, ...]
    max_violation: float | None = None


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    max_abs_diff: float
    per_node_diffs: Mapping[str, np.ndarray]
    tol: float = EQUIVALENCE_TOL

    @property
    def passed(self) -> bool:
        return bool(self.max_abs_diff < self.tol)


# -- action and Euler-Lagrange ------------------------------------------------------------


def _require(traj: PhaseTrajectory, names, what: str) -> dict:
    binding = traj.binding()
    missing = sorted(set(names) - set(binding))
    if missing:
        raise UsageError(f"trajectory lacks {what} samples for {missing}")
    return binding


def action_value(lag: AnyLagrangian, traj: PhaseTrajectory) -> float:
    """Trapezoidal ``S = int_a^b L dt`` along the sampled trajectory."""
    L = lag.lagrangian
    binding = _require(traj, ex.free_vars(L), "ladder")
    values = _broadcast(ex.evaluate(L, binding), binding, traj.grid)
    return float(integrate.trapezoid(values, traj.grid.nodes))


def _adjoint_order(lag, adjoint_order):
    return lag.orders.alpha if adjoint_order is None else float(adjoint_order)


def el_equations(lag: AnyLagrangian, adjoint_order: float | None = None) -> list[OpExpr]:
    """One equation per fundamental coordinate.

    ``dL/dq_0 + sum_n (tD^alpha)^n dL/dq_n + sum_n' (aD^gamma)^n' dL/dQ_n'``
    where ``gamma`` defaults to ``alpha``.
    """
    coords, L = lag.coords, lag.lagrangian
    alpha = lag.orders.alpha
    gamma = _adjoint_order(lag, adjoint_order)
    out = []
    for r in range(coords.R):
        terms = [plain(ex.diff(L, q_name(r, 0)))]
        for n in range(1, coords.N + 1):
            terms.append(OpTerm(ex.ONE, ex.diff(L, q_name(r, n)), Side.RIGHT, alpha, n))
        for n in range(1, coords.N_prime + 1):
            terms.append(OpTerm(ex.ONE, ex.diff(L, Q_name(r, n)), Side.LEFT, gamma, n))
        out.append(OpExpr(tuple(terms)))
    return out


def el_residual(
    lag: AnyLagrangian, traj: PhaseTrajectory, adjoint_order: float | None = None
) -> ResidualField:
    equations = el_equations(lag, adjoint_order)
    needed = set().union(*(e.free_vars() for e in equations)) | ex.free_vars(lag.lagrangian)
    binding = _require(traj, needed - {TIME}, "ladder/multiplier")
    full = {
        f"EL[{lag.coords.names[r]}]": eq.evaluate(binding, traj.grid)
        for r, eq in enumerate(equations)
    }
    return _field(traj.grid, full)


@dataclass(frozen=True)
class _LVLParts:
    a: tuple[ex.Expr, ...]
    da: tuple[tuple[ex.Expr, ...], ...]  # da[k][j] = d a_j / d q_k
    dV: tuple[ex.Expr, ...]


@functools.lru_cache(maxsize=64)
def lvl_parts(lvl: LinearVelocityLagrangian) -> _LVLParts:
    a = tuple(lvl.to_ladder(aj) for aj in lvl.a)
    V = lvl.to_ladder(lvl.V)
    names = [q_name(k, 0) for k in range(lvl.R)]
    da = tuple(tuple(ex.diff(aj, qk) for aj in a) for qk in names)
    dV = tuple(ex.diff(V, qk) for qk in names)
    return _LVLParts(a, da, dV)


def lvl_el_equations(lvl: LinearVelocityLagrangian) -> list[OpExpr]:
    """``sum_j da_j/dq_k aD^alpha q_j + tD^alpha a_k - dV/dq_k`` as operator expressions."""
    parts = lvl_parts(lvl)
    out = []
    for k in range(lvl.R):
        terms = [
            OpTerm(parts.da[k][j], ex.Var(q_name(j, 0)), Side.LEFT, lvl.alpha, 1)
            for j in range(lvl.R)
        ]
        terms.append(OpTerm(ex.ONE, parts.a[k], Side.RIGHT, lvl.alpha, 1))
        terms.append(plain(ex.neg(parts.dV[k])))
        out.append(OpExpr(tuple(terms)))
    return out


def lvl_el_full(parts: _LVLParts, qs: Sequence[np.ndarray], xs: Sequence[np.ndarray], right):
    """Linear-velocity EL residuals at every node.

    ``qs[j]`` are coordinate samples, ``xs[j]`` the matching left-derivative
    samples; both may carry trailing batch columns.
    """
    binding = {q_name(j, 0): q for j, q in enumerate(qs)}
    shape = np.shape(qs[0])
    out = []
    for k in range(len(qs)):
        acc = right.entries @ np.broadcast_to(ex.evaluate(parts.a[k], binding), shape)
        for j, x in enumerate(xs):
            coeff = parts.da[k][j]
            if ex.is_const(coeff, 0.0):
                continue
            acc = acc + ex.evaluate(coeff, binding) * x
        acc = acc - ex.evaluate(parts.dV[k], binding)
        out.append(np.broadcast_to(acc, shape))
    return out


def lvl_el_residual(lvl: LinearVelocityLagrangian, traj: PhaseTrajectory) -> ResidualField:
    """Direct evaluation of the linear-velocity EL equations.

    Uses the trajectory's ``q{j}_1`` samples when present, otherwise applies
    the left operator to ``q{j}_0``.
    """
    grid = traj.grid
    left = build_operator(Side.LEFT, lvl.alpha, grid)
    right = build_operator(Side.RIGHT, lvl.alpha, grid)
    qs = [traj[q_name(j, 0)] for j in range(lvl.R)]
    xs = [
        traj[q_name(j, 1)] if q_name(j, 1) in traj else left.entries @ qs[j] for j in range(lvl.R)
    ]
    full = lvl_el_full(lvl_parts(lvl), qs, xs, right)
    return _field(grid, {f"EL[{name}]": r for name, r in zip(lvl.names, full)})


# -- momenta, Hamiltonian, constraints ------------------------------------------------------


def derive_momenta(lag: AnyLagrangian, adjoint_order: float | None = None) -> MomentumField:
    """``p_n = sum_{k>n} (tD^alpha)^(k-n-1) dL/dq_k`` and likewise for ``pi`` with ``aD``."""
    coords, L = lag.coords, lag.lagrangian
    alpha = lag.orders.alpha
    gamma = _adjoint_order(lag, adjoint_order)
    p, pi = {}, {}
    for r in range(coords.R):
        for n in range(coords.N + 1):
            p[(r, n)] = OpExpr(
                tuple(
                    _momentum_term(ex.diff(L, q_name(r, k)), Side.RIGHT, alpha, k - n - 1)
                    for k in range(n + 1, coords.N + 1)
                )
            )
        for n in range(coords.N_prime + 1 if coords.N_prime else 0):
            pi[(r, n)] = OpExpr(
                tuple(
                    _momentum_term(ex.diff(L, Q_name(r, k)), Side.LEFT, gamma, k - n - 1)
                    for k in range(n + 1, coords.N_prime + 1)
                )
            )
    return MomentumField(coords, p, pi)


def _momentum_term(partial: ex.Expr, side: Side, order: float, power: int) -> OpTerm:
    if power == 0:
        return plain(partial)
    return OpTerm(ex.ONE, partial, side, order, power)


def canonical_hamiltonian(lag: AnyLagrangian, momenta: MomentumField) -> HamiltonianSpec:
    """``H = sum p_n q_{n+1} + sum pi_n' Q_{n'+1} - L`` with momenta left symbolic."""
    coords = lag.coords
    if momenta.coords != coords:
        raise UsageError("momenta were derived for a different coordinate system")
    terms = []
    for r in range(coords.R):
        for n in range(coords.N):
            terms.append(ex.mul(ex.Var(p_name(r, n)), ex.Var(q_name(r, n + 1))))
        for n in range(coords.N_prime):
            terms.append(ex.mul(ex.Var(pi_name(r, n)), ex.Var(Q_name(r, n + 1))))
    H = ex.sub(ex.total(terms), lag.lagrangian)
    return HamiltonianSpec(
        H, coords, lag.orders.alpha, lag.orders.beta, tuple(lag.multipliers), momenta
    )


def primary_constraints(
    momenta: MomentumField,
    lvl: LinearVelocityLagrangian,
    traj: PhaseTrajectory | None = None,
) -> ConstraintReport:
    """``p{j}_0 - a_j(q)`` for every coordinate, plus the worst violation on ``traj``."""
    constraints = []
    for j in range(lvl.R):
        constraints.append(ex.sub(ex.Var(p_name(j, 0)), momenta.expr(j, 0)))
    labels = tuple(f"phi[{name}]" for name in lvl.names)
    violation = None
    if traj is not None:
        needed = set().union(*(ex.free_vars(c) for c in constraints))
        binding = _require(traj, needed, "momentum/coordinate")
        violation = max(
            _max_abs(_broadcast(ex.evaluate(c, binding), binding, traj.grid)) for c in constraints
        )
    return ConstraintReport(tuple(constraints), labels, violation)


def hamilton_equations(
    ham: HamiltonianSpec, adjoint_order: float | None = None
) -> dict[str, OpExpr]:
    """Canonical equations as residual expressions, keyed by a readable label.

    Stationarity in the top ladder variables, ``dH/dq_n - tD p_n`` (with an
    extra ``- aD pi_0`` at ``n = 0``), and ``dH/dp_n - aD q_n``; the right
    ladder mirrors this with the operators swapped.
    """
    coords, H = ham.coords, ham.H
    alpha, beta = ham.alpha, ham.beta
    gamma = alpha if adjoint_order is None else float(adjoint_order)
    minus = ex.const(-1.0)
    eqs: dict[str, OpExpr] = {}
    for r in range(coords.R):
        for n in range(coords.N, -1, -1):
            q = q_name(r, n)
            terms = [plain(ex.diff(H, q))]
            label = f"dH/d{q}"
            if n < coords.N:
                terms.append(OpTerm(minus, ex.Var(p_name(r, n)), Side.RIGHT, alpha, 1))
                label += f" - tD[{p_name(r, n)}]"
            if n == 0 and coords.N_prime:
                terms.append(OpTerm(minus, ex.Var(pi_name(r, 0)), Side.LEFT, gamma, 1))
                label += f" - aD[{pi_name(r, 0)}]"
            eqs[label] = OpExpr(tuple(terms))
        for n in range(coords.N_prime, 0, -1):
            Q = Q_name(r, n)
            terms = [plain(ex.diff(H, Q))]
            label = f"dH/d{Q}"
            if n < coords.N_prime:
                terms.append(OpTerm(minus, ex.Var(pi_name(r, n)), Side.LEFT, gamma, 1))
                label += f" - aD[{pi_name(r, n)}]"
            eqs[label] = OpExpr(tuple(terms))
        for n in range(coords.N):
            p, q = p_name(r, n), q_name(r, n)
            eqs[f"dH/d{p} - aD[{q}]"] = OpExpr(
                (plain(ex.diff(H, p)), OpTerm(minus, ex.Var(q), Side.LEFT, alpha, 1))
            )
        for n in range(coords.N_prime):
            pi = pi_name(r, n)
            source = q_name(r, 0) if n == 0 else Q_name(r, n)
            eqs[f"dH/d{pi} - tD[{source}]"] = OpExpr(
                (plain(ex.diff(H, pi)), OpTerm(minus, ex.Var(source), Side.RIGHT, beta, 1))
            )
    return eqs


def hamilton_residuals(
    ham: HamiltonianSpec, traj: PhaseTrajectory, adjoint_order: float | None = None
) -> ResidualField:
    """Evaluate :func:`hamilton_equations` with momenta as independent sampled fields."""
    eqs = hamilton_equations(ham, adjoint_order)
    needed = set().union(*(e.free_vars() for e in eqs.values())) - {TIME}
    binding = _require(traj, needed, "coordinate/momentum")
    full = {label: e.evaluate(binding, traj.grid) for label, e in eqs.items()}
    return _field(traj.grid, full)


def combined_equation(ham: HamiltonianSpec, lvl: LinearVelocityLagrangian) -> list[OpExpr]:
    """Eliminate momenta and top ladder variables from the canonical equations.

    For each coordinate ``k``: solve the stationarity condition
    ``dH/dx_k^1 = 0`` for ``p_k`` (it is affine in ``p_k``), replace every
    ``x_j^1`` in ``dH/dq_k`` by ``aD^alpha q_j`` (the ``dH/dp_j`` equation),
    and move everything to one side of ``dH/dq_k = tD^alpha p_k``. The sign
    is chosen so the result reads like the Euler-Lagrange form.
    """
    R, H, alpha = lvl.R, ham.H, lvl.alpha
    velocities = [q_name(j, 1) for j in range(R)]
    momenta = [p_name(j, 0) for j in range(R)]
    solved_p = []
    for k in range(R):
        phi = ex.diff(H, velocities[k])
        slope = ex.diff(phi, momenta[k])
        if not isinstance(slope, ex.Const) or slope.value == 0.0:
            raise UsageError(f"stationarity in {velocities[k]} cannot be solved for {momenta[k]}")
        rest = ex.substitute(phi, {momenta[k]: ex.ZERO})
        if ex.free_vars(rest) & set(momenta):
            raise UsageError("primary constraints couple several momenta")
        solved_p.append(ex.div(ex.neg(rest), slope))

    out = []
    for k in range(R):
        E = ex.diff(H, q_name(k, 0))
        if ex.free_vars(E) & set(momenta):
            raise UsageError("dH/dq depends on momenta; not a linear-velocity Hamiltonian")
        slopes = [ex.diff(E, v) for v in velocities]
        for s in slopes:
            if ex.free_vars(s) & set(velocities):
                raise UsageError("dH/dq is not affine in the velocities")
        base = ex.substitute(E, {v: ex.ZERO for v in velocities})
        terms = [OpTerm(ex.ONE, solved_p[k], Side.RIGHT, alpha, 1)]
        terms += [
            OpTerm(ex.neg(s), ex.Var(q_name(j, 0)), Side.LEFT, alpha, 1)
            for j, s in enumerate(slopes)
        ]
        terms.append(plain(ex.neg(base)))
        out.append(OpExpr(tuple(terms)))
    return out


def lvl_hamiltonian(lvl: LinearVelocityLagrangian) -> HamiltonianSpec:
    lag = lvl_to_lagrangian(lvl)
    return canonical_hamiltonian(lag, derive_momenta(lag))


def check_equivalence(
    lvl: LinearVelocityLagrangian,
    traj: PhaseTrajectory,
    tol: float = EQUIVALENCE_TOL,
    mismatch: bool = False,
) -> EquivalenceReport:
    """Compare the direct EL residuals with the ones recovered from the Hamiltonian.

    Both sides use the same cached operator matrices, so the difference is
    pure rounding unless ``mismatch`` deliberately perturbs the right
    operator's order on the Hamiltonian side (a negative control).
    """
    direct = lvl_el_residual(lvl, traj)
    combined = combined_equation(lvl_hamiltonian(lvl), lvl)
    binding = _require(traj, [q_name(j, 0) for j in range(lvl.R)], "coordinate")
    overrides = {Side.RIGHT: lvl.alpha * MISMATCH_FACTOR} if mismatch else None
    diffs = {}
    for name, eq in zip(lvl.names, combined):
        label = f"EL[{name}]"
        recovered = _interior(eq.evaluate(binding, traj.grid, overrides))
        diffs[label] = recovered - direct.residuals[label]
    worst = max((_max_abs(d) for d in diffs.values()), default=0.0)
    return EquivalenceReport(worst, diffs, tol)


# -- Poisson bracket ------------------------------------------------------------------------


def poisson(
    A: ex.Expr,
    B: ex.Expr,
    pairs: Sequence[tuple[str, str]] | CoordinateSystem,
) -> ex.Expr:
    """``sum over (x, p) of dA/dx dB/dp - dB/dx dA/dp``.

    A coordinate may appear in several pairs (``q{r}_0`` is conjugate to both
    ``p{r}_0`` and ``pi{r}_0``); a momentum may not.
    """
    if isinstance(pairs, CoordinateSystem):
        pairs = pairs.conjugate_pairs()
    pairs = [tuple(pair) for pair in pairs]
    if not pairs:
        raise UsageError("Poisson bracket needs at least one conjugate pair")
    for pair in pairs:
        if len(pair) != 2 or pair[0] == pair[1]:
            raise UsageError(f"malformed conjugate pair {pair!r}")
    if len(set(pairs)) != len(pairs):
        raise UsageError("a conjugate pair is listed twice")
    coordinates = {x for x, _ in pairs}
    momenta = [p for _, p in pairs]
    if len(set(momenta)) != len(momenta) or coordinates & set(momenta):
        raise UsageError("each momentum needs exactly one coordinate and cannot be a coordinate")
    out: ex.Expr = ex.ZERO
    for x, p in pairs:
        term = ex.sub(
            ex.mul(ex.diff(A, x), ex.diff(B, p)),
            ex.mul(ex.diff(B, x), ex.diff(A, p)),
        )
        out = ex.add(out, term)
    return out

"""Reference models and seeded random generators for tests and the CLI."""

from __future__ import annotations

import itertools

import numpy as np

from . import expr as ex
from .frac_ops import Grid
from .varprob import LinearVelocityLagrangian, PhaseTrajectory, ladder_samples


def demo_model(alpha: float = 0.5) -> LinearVelocityLagrangian:
    """``a = (q2, 0)``, ``V = (q1^2 + q2^2)/2``: a fractional oscillator."""
    return LinearVelocityLagrangian(
        (ex.Var("q2"), ex.ZERO), ex.parse("0.5 * (q1^2 + q2^2)"), alpha
    )


def random_polynomial(names, degree: int, rng: np.random.Generator, density: float = 0.6):
    """Polynomial of total degree ``<= degree`` with sparse normal coefficients."""
    terms = []
    for powers in itertools.product(range(degree + 1), repeat=len(names)):
        if sum(powers) > degree or rng.random() > density:
            continue
        term: ex.Expr = ex.const(round(float(rng.normal()), 3))
        for name, k in zip(names, powers):
            if k:
                term = ex.mul(term, ex.power(ex.Var(name), k))
        terms.append(term)
    return ex.total(terms)


def random_lvl_model(
    rng: np.random.Generator, R: int | None = None, degree: int = 3, alpha: float | None = None
) -> LinearVelocityLagrangian:
    """Linear-velocity model with polynomial ``a_j`` and ``V`` over ``R <= 3`` coordinates."""
    R = int(rng.integers(1, 4)) if R is None else R
    alpha = float(rng.uniform(0.2, 1.0)) if alpha is None else alpha
    names = tuple(f"q{r + 1}" for r in range(R))
    a = tuple(random_polynomial(names, degree, rng) for _ in range(R))
    V = random_polynomial(names, degree, rng)
    return LinearVelocityLagrangian(a, V, alpha, names)


def model_corpus(count: int = 12, seed: int = 0) -> list[LinearVelocityLagrangian]:
    """The demo model followed by seeded random polynomial models."""
    rng = np.random.default_rng(seed)
    models = [demo_model()]
    while len(models) < count:
        models.append(random_lvl_model(rng, R=1 + len(models) % 3))
    return models


def random_modes(grid: Grid, rng: np.random.Generator, max_modes: int = 5) -> np.ndarray:
    """Sum of at most ``max_modes`` sine modes with seeded amplitudes, frequencies, phases."""
    t = (grid.nodes - grid.a) / (grid.b - grid.a)
    values = np.full(grid.n_points, rng.normal())
    for _ in range(int(rng.integers(1, max_modes + 1))):
        amp, freq, phase = rng.normal(), rng.uniform(0.5, 6.0), rng.uniform(0, 2 * np.pi)
        values += amp * np.sin(2 * np.pi * freq * t + phase)
    return values


def random_trajectory(
    lvl: LinearVelocityLagrangian, grid: Grid, rng: np.random.Generator
) -> PhaseTrajectory:
    xs = [random_modes(grid, rng) for _ in range(lvl.R)]
    return ladder_samples(xs, lvl.coords, lvl.orders, grid)

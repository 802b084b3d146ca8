"""Independent reference solutions shared by several test modules."""

import numpy as np
from scipy.integrate import solve_ivp

from fracmech.frac_ops import Grid
from fracmech.varprob import PhaseTrajectory


def classical_demo_solution(grid: Grid, q1a: float = 1.0, q2a: float = 0.0) -> np.ndarray:
    """Integrate the alpha = 1 demo system q1' = q2, q2' = -q1 with a high-order stepper."""
    sol = solve_ivp(
        lambda t, y: [y[1], -y[0]],
        (grid.a, grid.b),
        [q1a, q2a],
        method="DOP853",
        t_eval=grid.nodes,
        rtol=1e-13,
        atol=1e-13,
    )
    return sol.y


def classical_phase_trajectory(grid: Grid) -> PhaseTrajectory:
    """Demo-model phase trajectory at alpha = 1 with momenta on the constraint surface.

    The ladder samples q{j}_1 are the exact derivatives, not the discrete ones.
    """
    q1, q2 = classical_demo_solution(grid)
    return PhaseTrajectory(
        grid,
        {"q1_0": q1, "q2_0": q2, "q1_1": q2, "q2_1": -q1, "p1_0": q2, "p2_0": np.zeros_like(q1)},
    )

"""Semi-implicit time integration of the stochastic Allen-Cahn equation.

Both the plain equation (diffusion eps^2 u_xx, bistable reaction -f(u),
additive Q-Wiener forcing, Neumann walls) and the mass-conserving variant
(same right-hand side plus the spatial mean of f(u)) advance with the same
splitting: the stiff diffusion is implicit, reaction and noise are explicit
increments.  The implicit matrix is tridiagonal, so a step is one banded
solve; stability only requires dt below 0.1 / max f' = 0.05.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded

from .errors import InvalidArgumentError, NumericalFailureError
from .grid import Grid, GridFunction
from .heteroclinic import QUARTIC, Potential
from .manifold import KinkConfig, build_profile
from .noise import NoiseIncrement

#: hard cap on the explicit-reaction step: 0.1 / max|f'| with f'(+-1) = 2
DT_MAX = 0.05


@dataclass
class SpdeState:
    """Trajectory state: time, grid field and the equation parameters."""

    t: float
    u: GridFunction
    eps: float
    potential: Potential = QUARTIC
    mass_conserving: bool = False
    mu: Optional[float] = None

    def __post_init__(self):
        if self.mass_conserving and self.mu is None:
            raise InvalidArgumentError("mass-conserving state needs a target mass mu")


_laplacian_cache: dict = {}


def assemble_laplacian(grid: Grid, eps: float) -> sp.csr_matrix:
    """eps^2 times the central-difference Laplacian with reflected Neumann ghosts.

    Symmetric with respect to the trapezoid weights, nonpositive spectrum,
    constants in the kernel.  Cached per (grid size, eps).
    """
    if grid.n < 3:
        raise InvalidArgumentError("Laplacian needs at least 3 grid points")
    key = (grid.n, float(eps))
    cached = _laplacian_cache.get(key)
    if cached is not None:
        return cached
    n, dx = grid.n, grid.dx
    main = np.full(n, -2.0)
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    upper[0] = 2.0   # ghost reflection u_{-1} = u_1
    lower[-1] = 2.0  # ghost reflection u_n = u_{n-2}
    L = (eps**2 / dx**2) * sp.diags([lower, main, upper], [-1, 0, 1], format="csr")
    _laplacian_cache[key] = L
    return L


def make_step_solver(grid: Grid, eps: float, dt: float) -> Callable[[np.ndarray], np.ndarray]:
    """Solver for (I - dt eps^2 D2) u = rhs; accepts (n,) or (n, batch).

    The matrix is self-adjoint in the trapezoid weights, so it is symmetrized
    by the sqrt-weight similarity and Cholesky-factored once.
    """
    _check_dt(dt)
    n, dx = grid.n, grid.dx
    c = dt * eps**2 / dx**2
    s = np.sqrt(grid.weights)
    # rows of I - dt eps^2 D2 with reflected ghosts, scaled to symmetric form
    upper = np.full(n, -c)
    upper[1] = -2.0 * c
    upper[1:] *= s[:-1] / s[1:]
    ab = np.zeros((2, n))
    ab[0, :] = upper
    ab[1, :] = 1.0 + 2.0 * c
    factor = cholesky_banded(ab, check_finite=False)

    def solve(rhs: np.ndarray) -> np.ndarray:
        scaled = rhs * (s[:, None] if rhs.ndim > 1 else s)
        out = cho_solve_banded((factor, False), scaled, check_finite=False)
        return out / (s[:, None] if rhs.ndim > 1 else s)

    return solve


def _check_dt(dt: float):
    if not 0 < dt <= DT_MAX:
        raise InvalidArgumentError(
            f"dt = {dt} outside the stability contract (0, {DT_MAX}]"
        )


def _increment_values(increment: Optional[NoiseIncrement], dt: float, n: int) -> np.ndarray:
    if increment is None:
        return np.zeros(n)
    if abs(increment.dt - dt) > 1e-12 * max(dt, increment.dt):
        raise InvalidArgumentError(
            f"increment was sampled for dt = {increment.dt}, step uses dt = {dt}"
        )
    return increment.grid.values


def ac_step(state: SpdeState, dt: float, increment: Optional[NoiseIncrement],
            solver: Optional[Callable] = None) -> SpdeState:
    """One semi-implicit Euler-Maruyama step of the plain equation.

    (I - dt eps^2 D2) u_new = u - dt f(u) + dW; deterministic given the
    increment (pass None for the zero-noise flow).
    """
    _check_dt(dt)
    grid = state.u.grid
    if solver is None:
        solver = make_step_solver(grid, state.eps, dt)
    u = state.u.values
    rhs = u - dt * state.potential.f(u) + _increment_values(increment, dt, grid.n)
    u_new = solver(rhs)
    if not np.all(np.isfinite(u_new)):
        raise NumericalFailureError(f"non-finite state at t = {state.t + dt}")
    return replace(state, t=state.t + dt, u=GridFunction(grid, u_new))


def mac_step(state: SpdeState, dt: float, increment: Optional[NoiseIncrement],
             solver: Optional[Callable] = None) -> SpdeState:
    """Mass-conserving step: reaction is projected mean-free, mass restored exactly.

    Requires a mean-zero increment; the nonlocal term uses the same trapezoid
    mean as the conservation check, so the discrete mass is exact up to
    round-off, which the final restoration removes.
    """
    if not state.mass_conserving:
        raise InvalidArgumentError("state is not flagged mass-conserving")
    if increment is not None and increment.modal[0] != 0.0:
        raise InvalidArgumentError("mass-conserving step needs a mean-zero increment")
    _check_dt(dt)
    grid = state.u.grid
    if solver is None:
        solver = make_step_solver(grid, state.eps, dt)
    u = state.u.values
    fu = state.potential.f(u)
    rhs = u + dt * (grid.integral(fu) - fu) + _increment_values(increment, dt, grid.n)
    u_new = solver(rhs)
    if not np.all(np.isfinite(u_new)):
        raise NumericalFailureError(f"non-finite state at t = {state.t + dt}")
    u_new = u_new + (state.mu - grid.integral(u_new))
    return replace(state, t=state.t + dt, u=GridFunction(grid, u_new))


@dataclass
class OperatorParts:
    """Right-hand side split at a profile: stationary part, linearization, remainder."""

    L_of_uh: GridFunction
    Lh_v: GridFunction
    Nh_v: GridFunction

    def total(self) -> GridFunction:
        return self.L_of_uh + self.Lh_v + self.Nh_v


def operator_parts(u: GridFunction, cfg: KinkConfig, grid: Grid) -> OperatorParts:
    """Taylor split of the deterministic operator around the profile u^h.

    The three parts sum pointwise to eps^2 u_xx - f(u) exactly (the split is
    an algebraic identity; only round-off remains).
    """
    if u.grid != grid:
        raise InvalidArgumentError("u lives on a different grid")
    D2 = assemble_laplacian(grid, cfg.eps)
    pot = cfg.potential
    uh = build_profile(cfg, grid).values
    v = u.values - uh
    L_of_uh = D2 @ uh - pot.f(uh)
    Lh_v = D2 @ v - pot.f_prime(uh) * v
    Nh_v = pot.f(uh) - pot.f(uh + v) + pot.f_prime(uh) * v
    return OperatorParts(
        L_of_uh=GridFunction(grid, L_of_uh),
        Lh_v=GridFunction(grid, Lh_v),
        Nh_v=GridFunction(grid, Nh_v),
    )


def lyapunov_energy(u: GridFunction, eps: float,
                    potential: Potential = QUARTIC) -> float:
    """Free energy int (eps^2/2) u_x^2 + F(u); nonincreasing for the noise-free flow."""
    vals = u.values
    dx = u.grid.dx
    ux2 = ((vals[1:] - vals[:-1]) / dx) ** 2
    gradient_term = 0.5 * eps**2 * np.sum(ux2) * dx
    return float(gradient_term + u.grid.integral(potential.F(vals)))

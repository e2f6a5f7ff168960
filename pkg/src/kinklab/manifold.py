"""Multi-kink profiles, tangent frames, the mass chart and Fermi coordinates.

A configuration of N+1 ordered interface positions h in (0,1) parametrizes a
profile that alternates between the phases -1 and +1 with a sharp transition
of width eps at each h_i.  Everything downstream (the reduced SDE, the
spectral gaps, the stability experiments) runs through the objects built
here: profiles u^h, the h-derivative frames u^h_i, the Gram matrix
A(h, v), the mass-constrained metric S with its analytic inverse, and the
orthogonal splitting u = u^h + v.

Index convention: kink indices i are 1-based (1 <= i <= N+1) to match the
alternating sign rules; arrays are 0-based internally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    ConstraintInfeasibleError,
    DomainViolationError,
    FermiFailureError,
    InvalidArgumentError,
)
from .grid import Grid, GridFunction, require_same_grid
from .heteroclinic import QUARTIC, Potential, chi_constant, u_het, u_het_deriv

DEFAULT_KAPPA = 0.1


@dataclass(frozen=True)
class KinkConfig:
    """Ordered interface positions with the admissibility scale rho = eps^kappa."""

    h: np.ndarray
    eps: float
    kappa: float = DEFAULT_KAPPA
    potential: Potential = QUARTIC

    def __post_init__(self):
        object.__setattr__(self, "h", np.atleast_1d(np.asarray(self.h, dtype=float)))
        if self.eps <= 0:
            raise InvalidArgumentError("eps must be positive")
        if not (0 < self.kappa <= 0.25):
            raise InvalidArgumentError("kappa must lie in (0, 0.25]")

    @property
    def n_kinks(self) -> int:
        return len(self.h)

    @property
    def N(self) -> int:
        return len(self.h) - 1

    @property
    def rho(self) -> float:
        return self.eps**self.kappa

    @property
    def min_gap(self) -> float:
        """Lower bound eps/rho = eps^(1-kappa) on all gaps (ghosts included)."""
        return self.eps / self.rho

    def with_h(self, h: np.ndarray) -> "KinkConfig":
        return KinkConfig(h=h, eps=self.eps, kappa=self.kappa, potential=self.potential)


@dataclass(frozen=True)
class AdmissibilityViolation:
    kind: str          # "order" | "gap" | "bounds" | "finite"
    index: int         # 1-based left index of the offending gap
    gap: float
    threshold: float

    def message(self) -> str:
        if self.kind == "gap":
            return (
                f"gap h_{self.index + 1} - h_{self.index} = {self.gap:.6g} "
                f"below threshold {self.threshold:.6g} (ghost positions included)"
            )
        if self.kind == "order":
            return f"positions not strictly increasing at index {self.index}"
        if self.kind == "finite":
            return "positions contain non-finite values"
        return f"position h_{self.index} = {self.gap:.6g} outside (0, 1)"


def exit_check(cfg: KinkConfig, rho_scale: float = 1.0) -> Optional[AdmissibilityViolation]:
    """First violated admissibility condition, or None.

    ``rho_scale`` relaxes the gap threshold to eps/(rho_scale * rho); the
    midpoint of two admissible configurations passes with rho_scale = 2.
    """
    h = cfg.h
    if not np.all(np.isfinite(h)):
        return AdmissibilityViolation("finite", 0, np.nan, np.nan)
    for i, hi in enumerate(h, start=1):
        if not (0.0 < hi < 1.0):
            return AdmissibilityViolation("bounds", i, float(hi), 0.0)
    if np.any(np.diff(h) <= 0):
        idx = int(np.argmax(np.diff(h) <= 0)) + 1
        return AdmissibilityViolation("order", idx, float(np.min(np.diff(h))), 0.0)
    ghosted = np.concatenate(([-h[0]], h, [2.0 - h[-1]]))
    gaps = np.diff(ghosted)
    threshold = cfg.eps / (cfg.rho * rho_scale)
    if np.min(gaps) <= threshold:
        idx = int(np.argmin(gaps))  # 0 refers to the ghost gap h_1 - h_0
        return AdmissibilityViolation("gap", idx, float(gaps[idx]), threshold)
    return None


def admissible(cfg: KinkConfig, rho_scale: float = 1.0) -> bool:
    return exit_check(cfg, rho_scale) is None


def require_admissible(cfg: KinkConfig):
    report = exit_check(cfg)
    if report is not None:
        raise DomainViolationError(report.message(), report)


# -- vectorized field kernels (h may carry leading batch axes) ---------------
#
# For the quartic well every U-derivative is a polynomial in t = tanh(y/sqrt2)
# (U' = (1-t^2)/sqrt2, U'' = t^3 - t, ...), so the fused paths below evaluate
# one tanh per configuration and reuse it; custom potentials go through the
# generic heteroclinic calls.

_SQRT2 = float(np.sqrt(2.0))


def _kink_signs(n_kinks: int) -> np.ndarray:
    return (-1.0) ** np.arange(n_kinks)  # kink i (1-based) has sign (-1)^(i+1)


def _kink_tanh(h: np.ndarray, x: np.ndarray, eps: float) -> np.ndarray:
    return np.tanh((x - h[..., :, None]) / (eps * _SQRT2))


@dataclass
class KinkFrame:
    """Fused per-kink fields from a single transcendental evaluation.

    ``uh`` is the profile, ``lap`` is eps^2 d_xx u^h (closed form), ``tans``
    stacks the first h-derivatives, ``d2``/``d3`` the diagonal higher ones.
    """

    uh: np.ndarray
    lap: np.ndarray
    tans: np.ndarray
    d2: np.ndarray
    d3: Optional[np.ndarray] = None


def kink_frame(h: np.ndarray, x: np.ndarray, eps: float,
               potential: Potential = QUARTIC, order: int = 2) -> KinkFrame:
    """Profile, Laplacian and h-derivative frames evaluated together."""
    h = np.asarray(h, dtype=float)
    n_kinks = h.shape[-1]
    signs = _kink_signs(n_kinks)[..., :, None]
    beta = ((-1.0) ** (n_kinks - 1) - 1.0) / 2.0
    if potential.kind == "quartic":
        t = _kink_tanh(h, x, eps)
        t2 = t * t
        up = (1.0 - t2) * (1.0 / _SQRT2)
        upp = (t2 - 1.0) * t
        uh = (signs * t).sum(axis=-2) + beta
        lap = (signs * upp).sum(axis=-2)
        tans = -(signs / eps) * up
        d2 = (signs / eps**2) * upp
        d3 = None
        if order >= 3:
            d3 = -(signs / eps**3) * (3.0 * t2 - 1.0) * up
    else:
        y = (x - h[..., :, None]) / eps
        u = u_het(y, potential)
        uh = (signs * u).sum(axis=-2) + beta
        upp = u_het_deriv(y, 2, potential)
        lap = (signs * upp).sum(axis=-2)
        tans = -(signs / eps) * u_het_deriv(y, 1, potential)
        d2 = (signs / eps**2) * upp
        d3 = None
        if order >= 3:
            d3 = -(signs / eps**3) * u_het_deriv(y, 3, potential)
    return KinkFrame(uh=uh, lap=lap, tans=tans, d2=d2, d3=d3)


def profile_values(h: np.ndarray, x: np.ndarray, eps: float,
                   potential: Potential = QUARTIC) -> np.ndarray:
    """u^h on the points x: alternating rescaled kinks plus the parity constant."""
    h = np.asarray(h, dtype=float)
    n_kinks = h.shape[-1]
    signs = _kink_signs(n_kinks)[..., :, None]
    beta = ((-1.0) ** (n_kinks - 1) - 1.0) / 2.0
    if potential.kind == "quartic":
        kinks = _kink_tanh(h, x, eps)
    else:
        kinks = u_het((x - h[..., :, None]) / eps, potential)
    return (signs * kinks).sum(axis=-2) + beta


def tangent_values(h: np.ndarray, x: np.ndarray, eps: float,
                   potential: Potential = QUARTIC) -> np.ndarray:
    """All first h-derivatives u^h_i, stacked on axis -2: (-1)^i U'((x-h_i)/eps)/eps."""
    h = np.asarray(h, dtype=float)
    signs = -_kink_signs(h.shape[-1])[..., :, None] / eps  # (-1)^i/eps, i 1-based
    if potential.kind == "quartic":
        t = _kink_tanh(h, x, eps)
        up = (1.0 - t * t) / _SQRT2
    else:
        up = u_het_deriv((x - h[..., :, None]) / eps, 1, potential)
    return signs * up


def tangent_second_values(h, x, eps, potential: Potential = QUARTIC):
    """Diagonal second derivatives u^h_ii (mixed ones are exact zeros)."""
    h = np.asarray(h, dtype=float)
    signs = _kink_signs(h.shape[-1])[..., :, None] / eps**2  # (-1)^(i+1)/eps^2
    if potential.kind == "quartic":
        t = _kink_tanh(h, x, eps)
        upp = (t * t - 1.0) * t
    else:
        upp = u_het_deriv((x - h[..., :, None]) / eps, 2, potential)
    return signs * upp


def tangent_third_values(h, x, eps, potential: Potential = QUARTIC):
    """Diagonal third derivatives u^h_iii."""
    h = np.asarray(h, dtype=float)
    signs = -_kink_signs(h.shape[-1])[..., :, None] / eps**3
    if potential.kind == "quartic":
        t = _kink_tanh(h, x, eps)
        up3 = (3.0 * t * t - 1.0) * (1.0 - t * t) / _SQRT2
    else:
        up3 = u_het_deriv((x - h[..., :, None]) / eps, 3, potential)
    return signs * up3


# -- profile / frame construction --------------------------------------------

def build_profile(cfg: KinkConfig, grid: Grid) -> GridFunction:
    """Discrete multi-kink profile; rejects inadmissible configurations."""
    require_admissible(cfg)
    return GridFunction(grid, profile_values(cfg.h, grid.x, cfg.eps, cfg.potential))


def tangent(cfg: KinkConfig, i: int, grid: Grid) -> GridFunction:
    """Tangent u^h_i of the kink family, 1 <= i <= N+1 (analytic, not FD)."""
    _check_index(cfg, i)
    vals = tangent_values(cfg.h, grid.x, cfg.eps, cfg.potential)[i - 1]
    return GridFunction(grid, vals)


def _check_index(cfg: KinkConfig, i: int):
    if not 1 <= i <= cfg.n_kinks:
        raise InvalidArgumentError(
            f"kink index {i} out of range 1..{cfg.n_kinks}"
        )


def tangent_deriv(cfg: KinkConfig, i: int, order: int, grid: Grid,
                  j: Optional[int] = None) -> GridFunction:
    """Higher h-derivatives of u^h.

    Diagonal derivatives (j == i, the default) come from the closed-form chain
    rule on U; mixed derivatives are uniformly exponentially small and are
    represented as exact zero fields.
    """
    _check_index(cfg, i)
    if order not in (2, 3):
        raise InvalidArgumentError(f"order must be 2 or 3, got {order}")
    if j is not None:
        _check_index(cfg, j)
        if j != i:
            return GridFunction.zeros(grid)
    kernel = tangent_second_values if order == 2 else tangent_third_values
    full = kernel(cfg.h, grid.x, cfg.eps, cfg.potential)
    return GridFunction(grid, full[i - 1])


def gram_matrix(cfg: KinkConfig, v: Optional[GridFunction], grid: Grid) -> np.ndarray:
    """A_kj = <u^h_k, u^h_j> - <u^h_kj, v>; exactly symmetric.

    With v = 0 this is diag(X / eps) up to exponentially small terms.
    """
    tans = tangent_values(cfg.h, grid.x, cfg.eps, cfg.potential)
    A = (tans * grid.weights) @ tans.T
    A = 0.5 * (A + A.T)
    if v is not None:
        require_same_grid(v, GridFunction.zeros(grid))
        d2 = tangent_second_values(cfg.h, grid.x, cfg.eps, cfg.potential)
        A -= np.diag(grid.inner(d2, v.values))
    return A


# -- mass chart and the constrained manifold ---------------------------------

def profile_mass(cfg: KinkConfig, grid: Grid) -> float:
    return float(grid.integral(profile_values(cfg.h, grid.x, cfg.eps, cfg.potential)))


def _affine_mass_guess(xi: np.ndarray, mu: float) -> float:
    """Sharp-interface solution of mass = mu for the last position.

    The step-function mass is 2 * sum_j (-1)^j h_j + (-1)^N (1-based j), which
    gives the affine chart with slopes (-1)^(N-i) and pins c(mu) numerically.
    """
    N = len(xi)
    sgn = (-1.0) ** (N + 1)
    alt = sum((-1.0) ** (j + 1) * xi[j] for j in range(N))  # 1-based (-1)^j
    return sgn * (mu - (-1.0) ** N) / 2.0 - sgn * alt


def mass_chart(xi: np.ndarray, mu: float, eps: float, grid: Grid,
               kappa: float = DEFAULT_KAPPA,
               potential: Potential = QUARTIC, tol: float = 1e-12) -> float:
    """Last interface position h_{N+1}(xi) enforcing mass(u^h) = mu.

    One-dimensional Newton on the quadrature mass, started from the affine
    sharp-interface formula; requires N >= 1 free positions.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    N = len(xi)
    if N < 1:
        raise InvalidArgumentError("mass chart requires at least one free position")
    if not -1.0 < mu < 1.0:
        raise InvalidArgumentError("mu must lie in (-1, 1)")
    h_last = _affine_mass_guess(xi, mu)
    slope_sign = 2.0 * (-1.0) ** (N + 1 + 1)  # d mass / d h_{N+1} ~ 2 (-1)^(N+1)
    for _ in range(60):
        h = np.concatenate([xi, [h_last]])
        mass = float(grid.integral(profile_values(h, grid.x, eps, potential)))
        g = mass - mu
        if abs(g) <= tol:
            break
        tan_last = tangent_values(h[-1:], grid.x, eps, potential)[0]
        if N % 2 == 1:  # tangent sign of kink N+1 (1-based) is (-1)^(N+1)
            tan_last = -tan_last
        slope = float(grid.integral(tan_last))
        if abs(slope) < 1e-6:
            slope = slope_sign
        h_last -= g / slope
    else:
        raise ConstraintInfeasibleError(
            f"mass chart Newton did not reach |mass - mu| <= {tol:g}"
        )
    cfg = KinkConfig(np.concatenate([xi, [h_last]]), eps, kappa, potential)
    report = exit_check(cfg)
    if report is not None:
        raise ConstraintInfeasibleError(
            f"mass-chart root is inadmissible: {report.message()}"
        )
    return float(h_last)


@dataclass(frozen=True)
class MassKinkConfig:
    """Free positions xi plus the chart-determined last kink at fixed mass mu."""

    xi: np.ndarray
    mu: float
    h_last: float
    full: KinkConfig

    def __post_init__(self):
        object.__setattr__(self, "xi", np.atleast_1d(np.asarray(self.xi, dtype=float)))

    @property
    def N(self) -> int:
        return len(self.xi)

    @property
    def eps(self) -> float:
        return self.full.eps


def mass_config(xi, mu: float, eps: float, grid: Grid,
                kappa: float = DEFAULT_KAPPA,
                potential: Potential = QUARTIC) -> MassKinkConfig:
    """Solve the mass chart and assemble the constrained configuration."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    h_last = mass_chart(xi, mu, eps, grid, kappa, potential)
    full = KinkConfig(np.concatenate([xi, [h_last]]), eps, kappa, potential)
    return MassKinkConfig(xi=xi, mu=mu, h_last=h_last, full=full)


def mass_tangent_values(h: np.ndarray, x: np.ndarray, eps: float,
                        potential: Potential = QUARTIC) -> np.ndarray:
    """Constrained tangents u^xi_i = u^h_i + (-1)^(N-i) u^h_{N+1}, i = 1..N."""
    tans = tangent_values(h, x, eps, potential)
    n_kinks = h.shape[-1]
    N = n_kinks - 1
    coeff = (-1.0) ** (N - np.arange(1, N + 1))
    return tans[..., :N, :] + coeff[:, None] * tans[..., N : N + 1, :]


def mass_tangent(mcfg: MassKinkConfig, i: int, grid: Grid) -> GridFunction:
    """Tangent of the fixed-mass manifold, 1 <= i <= N; mean-free up to O(exp)."""
    if not 1 <= i <= mcfg.N:
        raise InvalidArgumentError(f"kink index {i} out of range 1..{mcfg.N}")
    vals = mass_tangent_values(mcfg.full.h, grid.x, mcfg.eps, mcfg.full.potential)
    return GridFunction(grid, vals[i - 1])


def metric_tensor(mcfg: MassKinkConfig, grid: Grid) -> np.ndarray:
    """Numeric metric S_kj = <u^xi_k, u^xi_j> of the fixed-mass manifold."""
    require_admissible(mcfg.full)
    T = mass_tangent_values(mcfg.full.h, grid.x, mcfg.eps, mcfg.full.potential)
    S = (T * grid.weights) @ T.T
    return 0.5 * (S + S.T)


def metric_tensor_analytic(N: int, eps: float,
                           potential: Potential = QUARTIC) -> np.ndarray:
    """Closed form S = (X/eps) [delta_kj + (-1)^(k+j)]."""
    if N < 1:
        raise InvalidArgumentError("need N >= 1")
    k = np.arange(N)
    parity = (-1.0) ** (k[:, None] + k[None, :])
    return chi_constant(potential) / eps * (np.eye(N) + parity)


def analytic_inverse(N: int, eps: float,
                     potential: Potential = QUARTIC) -> np.ndarray:
    """Closed form S^-1 = (eps/X) [delta_kj + (-1)^(k+j+1) / (N+1)]."""
    if N < 1:
        raise InvalidArgumentError("need N >= 1")
    k = np.arange(N)
    parity = (-1.0) ** (k[:, None] + k[None, :] + 1)
    return eps / chi_constant(potential) * (np.eye(N) + parity / (N + 1))


# -- Fermi coordinates --------------------------------------------------------

@dataclass
class FermiSplit:
    """Orthogonal splitting u = u^h + v with v perpendicular to the tangent frame."""

    h: KinkConfig
    v: GridFunction
    residuals: np.ndarray
    converged: bool
    iterations: int


def fermi_split(u: GridFunction, h_init: KinkConfig, grid: Grid,
                tol: float = 1e-12, max_iter: int = 50) -> FermiSplit:
    """Damped Newton for positions h with u - u^h orthogonal to every u^h_i.

    The Jacobian of G_i(h) = <u - u^h, u^h_i> is -A(h, u - u^h), the Gram
    matrix; the step is damped by halving whenever the residual grows.
    Raises FermiFailureError after ``max_iter`` iterations (callers treat this
    as a tube exit) and DomainViolationError on an inadmissible iterate.
    """
    require_admissible(h_init)
    eps, kappa, pot = h_init.eps, h_init.kappa, h_init.potential
    tol_abs = tol * chi_constant(pot) / eps
    h = h_init.h.copy()

    def residual(hvec):
        uh = profile_values(hvec, grid.x, eps, pot)
        tans = tangent_values(hvec, grid.x, eps, pot)
        v = u.values - uh
        return grid.inner(tans, v), v, tans

    G, v, tans = residual(h)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(G)) <= tol_abs:
            cfg = h_init.with_h(h)
            return FermiSplit(cfg, GridFunction(grid, v), G, True, it - 1)
        d2 = tangent_second_values(h, grid.x, eps, pot)
        A = (tans * grid.weights) @ tans.T
        A = 0.5 * (A + A.T) - np.diag(grid.inner(d2, v))
        try:
            step = np.linalg.solve(A, G)
        except np.linalg.LinAlgError as exc:
            raise FermiFailureError(f"singular Gram matrix: {exc}") from exc
        base = np.max(np.abs(G))
        for _ in range(30):
            trial = h + step
            cfg_trial = h_init.with_h(trial)
            report = exit_check(cfg_trial)
            if report is not None:
                raise DomainViolationError(report.message(), report)
            G_new, v_new, tans_new = residual(trial)
            if np.max(np.abs(G_new)) <= base or np.max(np.abs(step)) < 1e-16:
                break
            step = 0.5 * step
        h, G, v, tans = trial, G_new, v_new, tans_new
    raise FermiFailureError(
        f"no convergence in {max_iter} iterations (residual {np.max(np.abs(G)):.3g})"
    )


def fermi_split_mass(u: GridFunction, mcfg_init: MassKinkConfig, grid: Grid,
                     tol: float = 1e-12, max_iter: int = 50) -> FermiSplit:
    """Mass-conserving Fermi extraction: Newton in xi with the chart enforced.

    Solves <u - u^h, u^xi_i> = 0 for i = 1..N while h_{N+1} = h_{N+1}(xi)
    keeps the profile mass at mu every iterate.
    """
    eps, mu = mcfg_init.eps, mcfg_init.mu
    kappa, pot = mcfg_init.full.kappa, mcfg_init.full.potential
    tol_abs = tol * chi_constant(pot) / eps
    xi = mcfg_init.xi.copy()
    N = len(xi)

    def assemble(xivec):
        h_last = mass_chart(xivec, mu, eps, grid, kappa, pot)
        h = np.concatenate([xivec, [h_last]])
        uh = profile_values(h, grid.x, eps, pot)
        T = mass_tangent_values(h, grid.x, eps, pot)
        v = u.values - uh
        return h, grid.inner(T, v), v, T

    h, G, v, T = assemble(xi)
    for it in range(1, max_iter + 1):
        if np.max(np.abs(G)) <= tol_abs:
            full = KinkConfig(h, eps, kappa, pot)
            return FermiSplit(full, GridFunction(grid, v), G, True, it - 1)
        d2 = tangent_second_values(h, grid.x, eps, pot)
        # A^xi_ij = S_ij - <u^xi_ij, v> with
        # u^xi_ij = delta_ij u^h_ii + (-1)^(i+j) u^h_{N+1,N+1}
        S = (T * grid.weights) @ T.T
        S = 0.5 * (S + S.T)
        d2v = grid.inner(d2, v)
        k = np.arange(N)
        parity = (-1.0) ** (k[:, None] + k[None, :])
        A = S - np.diag(d2v[:N]) - parity * d2v[N]
        try:
            step = np.linalg.solve(A, G)
        except np.linalg.LinAlgError as exc:
            raise FermiFailureError(f"singular constrained Gram matrix: {exc}") from exc
        base = np.max(np.abs(G))
        for _ in range(30):
            trial = xi + step
            try:
                h_new, G_new, v_new, T_new = assemble(trial)
            except ConstraintInfeasibleError as exc:
                raise DomainViolationError(str(exc)) from exc
            if np.max(np.abs(G_new)) <= base or np.max(np.abs(step)) < 1e-16:
                break
            step = 0.5 * step
        xi, h, G, v, T = trial, h_new, G_new, v_new, T_new
    raise FermiFailureError(
        f"no convergence in {max_iter} iterations (residual {np.max(np.abs(G)):.3g})"
    )


def initial_kink_positions(u: GridFunction) -> np.ndarray:
    """Cold-start kink locations: sign changes of the 3-point moving average."""
    vals = u.values
    smooth = vals.copy()
    smooth[1:-1] = (vals[:-2] + vals[1:-1] + vals[2:]) / 3.0
    s = np.sign(smooth)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    x = u.grid.x
    out = []
    for i in idx:
        a, b = smooth[i], smooth[i + 1]
        out.append(x[i] + (x[i + 1] - x[i]) * a / (a - b))
    return np.asarray(out)

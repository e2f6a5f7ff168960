"""The interface SDE: exact drift/diffusion and projected-Wiener steppers.

The positions of well-separated kinks obey
``dh = b(h, v) dt + <sigma(h, v), dW>`` with sigma_r = sum_i A^-1_ri u^h_i
and a drift built from pairings of the frame derivatives with the operator
and the covariance.  On the relevant time scale the motion reduces to the
driving noise projected onto the kink family: each position follows
``dh_k = |u^h_k|^-2 <u^h_k, o dW>`` (Stratonovich), independently for the
plain equation, coupled through the analytic metric inverse for the
mass-conserving one.

All noise pairings are computed modally (exact for finite-rank covariances);
Euler-Maruyama steps carry the explicit Stratonovich-to-Ito correction,
(1/2) S_kk^-2 <u^h_kk, Q u^h_k> per component in the plain case.  The array
kernels broadcast over leading batch axes so Monte Carlo replicas advance in
one call; the public steppers wrap them for a single trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Union

import numpy as np

from .errors import DomainViolationError, InvalidArgumentError, TubeExitError
from .grid import Grid, GridFunction
from .heteroclinic import QUARTIC, Potential, u_het_deriv
from .manifold import (
    KinkConfig,
    MassKinkConfig,
    analytic_inverse,
    exit_check,
    kink_frame,
    mass_config,
    mass_tangent_values,
    profile_values,
    tangent_second_values,
    tangent_values,
)
from .noise import NoiseIncrement, NoiseModel, modal_projections
from .spde import assemble_laplacian

_COND_LIMIT = 1e10


@dataclass
class SdeState:
    """Reduced-dynamics state: time plus a (mass-constrained) kink configuration."""

    t: float
    config: Union[KinkConfig, MassKinkConfig]
    mode: str = "projected"  # "full" (uses v) | "projected" (v = 0)

    def __post_init__(self):
        if self.mode not in ("full", "projected"):
            raise InvalidArgumentError(f"unknown mode {self.mode!r}")


@dataclass
class SdeCoefficients:
    """Drift vector and diffusion kernels of the exact interface SDE."""

    b: np.ndarray
    sigma: List[GridFunction]


def _require_admissible_or_exit(cfg: KinkConfig):
    report = exit_check(cfg)
    if report is not None:
        raise DomainViolationError(report.message(), report)


def profile_lap_values(h: np.ndarray, x: np.ndarray, eps: float,
                       potential: Potential = QUARTIC) -> np.ndarray:
    """Closed-form eps^2 d_xx u^h (each rescaled kink differentiates exactly)."""
    h = np.asarray(h, dtype=float)
    n_kinks = h.shape[-1]
    signs = (-1.0) ** np.arange(n_kinks)
    y = (x - h[..., :, None]) / eps
    return (signs[..., :, None] * u_het_deriv(y, 2, potential)).sum(axis=-2)


def operator_field(h: np.ndarray, v_vals: Optional[np.ndarray], eps: float,
                   potential: Potential, grid: Grid) -> np.ndarray:
    """L(u^h + v): analytic Laplacian for the profile, discrete for v."""
    uh = profile_values(h, grid.x, eps, potential)
    lap = profile_lap_values(h, grid.x, eps, potential)
    if v_vals is None:
        return lap - potential.f(uh)
    D2 = assemble_laplacian(grid, eps)
    if v_vals.ndim == 1:
        lap_v = D2 @ v_vals
    else:
        flat = v_vals.reshape(-1, v_vals.shape[-1])
        lap_v = (D2 @ flat.T).T.reshape(v_vals.shape)
    return lap + lap_v - potential.f(uh + v_vals)


def coefficient_arrays(h: np.ndarray, v_vals: Optional[np.ndarray], eps: float,
                       potential: Potential, model: NoiseModel, grid: Grid):
    """Batched exact coefficients.

    Returns (b, sigma_fields, sigma_modal, cond) with leading batch axes taken
    from ``h``; performs no admissibility checks (the scalar wrappers and the
    Monte Carlo engine handle exits their own way).
    """
    h = np.asarray(h, dtype=float)
    w = grid.weights
    a2 = model.alphas**2
    frame = kink_frame(h, grid.x, eps, potential, order=3 if v_vals is not None else 2)
    tans, d2 = frame.tans, frame.d2
    A = np.matmul(tans * w, np.swapaxes(tans, -1, -2))
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    if v_vals is not None:
        d2v = grid.inner(d2, v_vals[..., None, :])
        idx = np.arange(h.shape[-1])
        A[..., idx, idx] -= d2v
    cond = np.linalg.cond(A)
    Ainv = np.linalg.inv(A)

    sigma_fields = np.matmul(Ainv, tans)
    tan_modal = modal_projections(model, grid, tans)
    sigma_modal = np.matmul(Ainv, tan_modal)
    d2_modal = modal_projections(model, grid, d2)
    q_sigma = np.matmul(sigma_modal * a2, np.swapaxes(sigma_modal, -1, -2))

    operator = frame.lap - potential.f(frame.uh)
    if v_vals is not None:
        D2 = assemble_laplacian(grid, eps)
        flat = v_vals.reshape(-1, v_vals.shape[-1])
        lap_v = (D2 @ flat.T).T.reshape(v_vals.shape)
        operator = frame.lap + lap_v - potential.f(frame.uh + v_vals)
    g1 = grid.inner(tans, operator[..., None, :])
    g2 = np.sum(d2_modal * a2 * sigma_modal, axis=-1)
    d2_dot_tan = np.matmul(d2 * w, np.swapaxes(tans, -1, -2))
    q_diag = np.einsum("...kk->...k", q_sigma)
    g3 = -np.einsum("...ik,...ik->...i", d2_dot_tan, q_sigma)
    g3 -= 0.5 * np.einsum("...ji,...j->...i", d2_dot_tan, q_diag)
    if v_vals is not None:
        g3 += 0.5 * grid.inner(frame.d3, v_vals[..., None, :]) * q_diag
    b = np.einsum("...ij,...j->...i", Ainv, g1 + g2 + g3)
    return b, sigma_fields, sigma_modal, cond


def coefficients(cfg: KinkConfig, v: Optional[GridFunction], model: NoiseModel,
                 grid: Grid) -> SdeCoefficients:
    """Exact drift b(h, v) and diffusion sigma(h, v) of the interface SDE.

    Mixed frame derivatives follow the exact-zero convention, so only the
    diagonal second/third derivatives enter; every covariance pairing runs
    through the modal expansion.  Raises TubeExitError when the Gram matrix
    is no longer safely invertible.
    """
    _require_admissible_or_exit(cfg)
    v_vals = v.values if v is not None else None
    b, sigma_fields, _, cond = coefficient_arrays(
        cfg.h, v_vals, cfg.eps, cfg.potential, model, grid
    )
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise TubeExitError(
            f"Gram matrix condition {cond:.3g} exceeds {_COND_LIMIT:.0e}; tube exit"
        )
    sigma = [GridFunction(grid, row) for row in sigma_fields]
    return SdeCoefficients(b=b, sigma=sigma)


def diffusion_sigma(cfg: KinkConfig, v: Optional[GridFunction], model: NoiseModel,
                    grid: Grid) -> List[GridFunction]:
    """Diffusion kernels sigma_r = sum_i A^-1_ri u^h_i (the dual tangent frame)."""
    return coefficients(cfg, v, model, grid).sigma


def drift_b(cfg: KinkConfig, v: Optional[GridFunction], model: NoiseModel,
            grid: Grid) -> np.ndarray:
    """Drift vector of the exact interface SDE."""
    return coefficients(cfg, v, model, grid).b


def drift_operator_group(cfg: KinkConfig, v: Optional[GridFunction],
                         model: NoiseModel, grid: Grid) -> np.ndarray:
    """First drift group alone, sum_i A^-1_ri <u^h_i, L(u^h + v)> (scaling studies)."""
    _require_admissible_or_exit(cfg)
    v_vals = v.values if v is not None else None
    tans = tangent_values(cfg.h, grid.x, cfg.eps, cfg.potential)
    d2 = tangent_second_values(cfg.h, grid.x, cfg.eps, cfg.potential)
    A = (tans * grid.weights) @ tans.T
    A = 0.5 * (A + A.T)
    if v_vals is not None:
        A -= np.diag(grid.inner(d2, v_vals))
    g1 = grid.inner(tans, operator_field(cfg.h, v_vals, cfg.eps, cfg.potential, grid))
    return np.linalg.solve(A, g1)


def full_step(state: SdeState, dt: float, increment: NoiseIncrement,
              v_supplier: Callable[[KinkConfig], Optional[GridFunction]],
              model: NoiseModel, grid: Grid) -> SdeState:
    """Euler-Maruyama step of the exact SDE; v comes from the supplier.

    In coupled mode the supplier returns u(t) - u^h from a co-evolving SPDE
    solution (the step then realizes the exact equation for the coordinates
    of that solution); in projected mode it returns None (v = 0).
    """
    cfg = state.config
    if not isinstance(cfg, KinkConfig):
        raise InvalidArgumentError("full_step expects a plain KinkConfig state")
    _require_admissible_or_exit(cfg)
    v = v_supplier(cfg)
    v_vals = v.values if v is not None else None
    b, _, sigma_modal, cond = coefficient_arrays(
        cfg.h, v_vals, cfg.eps, cfg.potential, model, grid
    )
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise TubeExitError(f"Gram matrix condition {cond:.3g}; tube exit")
    h_new = cfg.h + b * dt + sigma_modal @ increment.modal
    cfg_new = cfg.with_h(h_new)
    _require_admissible_or_exit(cfg_new)
    return replace(state, t=state.t + dt, config=cfg_new)


def projected_ac_arrays(h: np.ndarray, modal: np.ndarray, dt: float, eps: float,
                        potential: Potential, model: NoiseModel, grid: Grid) -> np.ndarray:
    """Batched increment of the projected plain dynamics (Ito + correction)."""
    frame = kink_frame(h, grid.x, eps, potential, order=2)
    tans = frame.tans
    S_diag = grid.inner(tans, tans)
    tan_modal = modal_projections(model, grid, tans)
    pair = np.einsum("...km,...m->...k", tan_modal, modal)
    d2_modal = modal_projections(model, grid, frame.d2)
    quk = np.sum(d2_modal * model.alphas**2 * tan_modal, axis=-1)
    corr = 0.5 * quk / S_diag**2
    return corr * dt + pair / S_diag


def projected_step_ac(state: SdeState, dt: float, increment: NoiseIncrement,
                      model: NoiseModel, grid: Grid) -> SdeState:
    """Ito step of the projected motion: decoupled kicks plus the explicit correction.

    Component k touches only quantities of kink k; the Brownian pairing is
    modal and the drift is the exact Stratonovich-to-Ito conversion.
    """
    cfg = state.config
    if not isinstance(cfg, KinkConfig):
        raise InvalidArgumentError("projected_step_ac expects a plain KinkConfig state")
    _require_admissible_or_exit(cfg)
    dh = projected_ac_arrays(cfg.h, increment.modal, dt, cfg.eps, cfg.potential,
                             model, grid)
    cfg_new = cfg.with_h(cfg.h + dh)
    _require_admissible_or_exit(cfg_new)
    return replace(state, t=state.t + dt, config=cfg_new)


def heun_ac_arrays(h: np.ndarray, modal: np.ndarray, eps: float,
                   potential: Potential, model: NoiseModel, grid: Grid) -> np.ndarray:
    """Batched Heun (midpoint) increment of the projected plain dynamics."""
    def rate(hh):
        tans = tangent_values(hh, grid.x, eps, potential)
        S_diag = grid.inner(tans, tans)
        pair = np.einsum("...km,...m->...k",
                         modal_projections(model, grid, tans), modal)
        return pair / S_diag

    k1 = rate(h)
    return 0.5 * (k1 + rate(h + k1))


def heun_step_projected_ac(state: SdeState, dt: float, increment: NoiseIncrement,
                           model: NoiseModel, grid: Grid) -> SdeState:
    """Midpoint (Heun) step: converges to the Stratonovich projected motion."""
    cfg = state.config
    _require_admissible_or_exit(cfg)

    def rate(h):
        tans = tangent_values(h, grid.x, cfg.eps, cfg.potential)
        S_diag = grid.inner(tans, tans)
        return (modal_projections(model, grid, tans) @ increment.modal) / S_diag

    k1 = rate(cfg.h)
    predictor = cfg.h + k1
    _require_admissible_or_exit(cfg.with_h(predictor))
    cfg_new = cfg.with_h(cfg.h + 0.5 * (k1 + rate(predictor)))
    _require_admissible_or_exit(cfg_new)
    return replace(state, t=state.t + dt, config=cfg_new)


def mac_correction_arrays(h: np.ndarray, eps: float, potential: Potential,
                          model: NoiseModel, grid: Grid, Sinv: np.ndarray) -> np.ndarray:
    """Stratonovich-to-Ito drift in the analytic S-frame of the constrained motion.

    c_r = (1/2) sum_l sum_{i,i'} Sinv_ri Sinv_li' <u^xi_il, Q u^xi_i'> with
    u^xi_il = delta_il u^h_ii + (-1)^(i+l) u^h_(N+1)(N+1); Sinv is position
    independent, so no dS terms arise.
    """
    n_kinks = np.asarray(h).shape[-1]
    N = n_kinks - 1
    a2 = model.alphas**2
    T = mass_tangent_values(h, grid.x, eps, potential)
    P2 = modal_projections(model, grid, tangent_second_values(h, grid.x, eps, potential))
    Tm = modal_projections(model, grid, T)
    k = np.arange(N)
    parity = (-1.0) ** (k[:, None] + k[None, :])
    Td = np.einsum("il,...im->...ilm", np.eye(N), P2[..., :N, :]) \
        + parity[:, :, None] * P2[..., N, :][..., None, None, :]
    Mt = np.einsum("li,...im->...lm", Sinv, Tm)
    return 0.5 * np.einsum("ri,...ilm,m,...lm->...r", Sinv, Td, a2, Mt)


def projected_mac_arrays(h: np.ndarray, modal: np.ndarray, dt: float, eps: float,
                         potential: Potential, model: NoiseModel, grid: Grid) -> np.ndarray:
    """Batched increment of the free positions xi under the constrained projection."""
    h = np.asarray(h, dtype=float)
    n_kinks = h.shape[-1]
    N = n_kinks - 1
    Sinv = analytic_inverse(N, eps, potential)
    a2 = model.alphas**2
    frame = kink_frame(h, grid.x, eps, potential, order=2)
    coeff = (-1.0) ** (N - np.arange(1, N + 1))
    T = frame.tans[..., :N, :] + coeff[:, None] * frame.tans[..., N:N + 1, :]
    Tm = modal_projections(model, grid, T)
    pair = np.einsum("...km,...m->...k", Tm, modal)
    P2 = modal_projections(model, grid, frame.d2)
    k = np.arange(N)
    parity = (-1.0) ** (k[:, None] + k[None, :])
    Td = np.einsum("il,...im->...ilm", np.eye(N), P2[..., :N, :]) \
        + parity[:, :, None] * P2[..., N, :][..., None, None, :]
    Mt = np.einsum("li,...im->...lm", Sinv, Tm)
    corr = 0.5 * np.einsum("ri,...ilm,m,...lm->...r", Sinv, Td, a2, Mt)
    return corr * dt + np.einsum("ri,...i->...r", Sinv, pair)


def projected_step_mac(state: SdeState, dt: float, increment: NoiseIncrement,
                       model: NoiseModel, grid: Grid) -> SdeState:
    """Constrained projected step: analytic metric inverse, mass chart re-enforced.

    Requires mean-zero noise; the free positions move by S^-1 times the modal
    pairings of the constrained tangents plus the Ito correction, and the
    last position is re-derived from the mass chart, so the profile mass
    stays at mu by construction.  Inadmissibility and chart infeasibility
    propagate as exits.
    """
    mcfg = state.config
    if not isinstance(mcfg, MassKinkConfig):
        raise InvalidArgumentError("projected_step_mac expects a MassKinkConfig state")
    if increment.modal[0] != 0.0:
        raise InvalidArgumentError("mass-conserving dynamics needs mean-zero noise")
    full = mcfg.full
    _require_admissible_or_exit(full)
    dxi = projected_mac_arrays(full.h, increment.modal, dt, mcfg.eps,
                               full.potential, model, grid)
    mcfg_new = mass_config(mcfg.xi + dxi, mcfg.mu, mcfg.eps, grid,
                           full.kappa, full.potential)
    return replace(state, t=state.t + dt, config=mcfg_new)


def ito_strat_crosscheck(state: SdeState, path, model: NoiseModel,
                         grid: Grid) -> dict:
    """Run the Ito+correction and Heun steppers on one shared Brownian path.

    Reports the pathwise max position difference; on a refined path the
    difference shrinks with dt (the schemes are consistent with the same
    Stratonovich equation, so only discretization separates them).
    """
    ito = state
    heun = state
    max_diff = 0.0
    for i in range(path.n_steps):
        inc = path.increment(i, grid)
        ito = projected_step_ac(ito, path.dt, inc, model, grid)
        heun = heun_step_projected_ac(heun, path.dt, inc, model, grid)
        diff = float(np.max(np.abs(ito.config.h - heun.config.h)))
        max_diff = max(max_diff, diff)
    return {
        "dt": path.dt,
        "n_steps": path.n_steps,
        "pathwise_max_difference": max_diff,
        "final_ito": ito.config.h.copy(),
        "final_heun": heun.config.h.copy(),
    }

"""Finite-rank Q-Wiener noise in the cosine basis.

The covariance is diagonal in the Neumann cosine basis e_0 = 1,
e_k(x) = sqrt(2) cos(k pi x) with eigenvalues alpha_k^2; the trace
eta = sum alpha_k^2 is the squared noise strength.  Increments are generated
in modal form first (the reduced SDE pairs tangents with the noise modally,
which is exact for finite rank) and the grid field is the basis expansion.

Streams are counter-keyed by (seed, replica, consumer): the same key always
replays the identical Brownian path, whether the consumer is the SPDE or the
reduced SDE.  Every sample draws K+1 normals even for modes with zero
amplitude, so models sharing K stay stream-aligned.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .grid import Grid, GridFunction, require_same_grid

_basis_cache: dict[tuple[int, int], np.ndarray] = {}


def cosine_basis(grid: Grid, n_modes: int) -> np.ndarray:
    """Rows e_0..e_K evaluated on the grid, shape (K+1, n).

    The trapezoid rule integrates products of these modes exactly as long as
    the grid does not alias them (n - 1 > k + j), so the basis is
    L2-orthonormal to round-off.
    """
    key = (grid.n, n_modes)
    E = _basis_cache.get(key)
    if E is None:
        k = np.arange(n_modes + 1)[:, None]
        E = np.sqrt(2.0) * np.cos(k * np.pi * grid.x[None, :])
        E[0] = 1.0
        _basis_cache[key] = E
    return E


@dataclass(frozen=True)
class NoiseModel:
    """Cosine-mode spectrum of the covariance; alphas[k] is the amplitude of e_k."""

    alphas: np.ndarray
    mean_zero: bool

    def __post_init__(self):
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float))
        if self.alphas.ndim != 1 or len(self.alphas) < 2:
            raise InvalidArgumentError("alphas must be a vector with K >= 1 modes")
        if np.any(self.alphas < 0) or not np.all(np.isfinite(self.alphas)):
            raise InvalidArgumentError("amplitudes must be finite and nonnegative")
        if self.mean_zero and self.alphas[0] != 0.0:
            raise InvalidArgumentError("mean-zero noise requires alpha_0 = 0")

    @property
    def K(self) -> int:
        return len(self.alphas) - 1

    @property
    def eta(self) -> float:
        """Trace of the covariance, sum of alpha_k^2."""
        return float(np.sum(self.alphas**2))

    def basis(self, grid: Grid) -> np.ndarray:
        return cosine_basis(grid, self.K)


def build_noise(K: int, sigma0: Optional[float] = None, mean_zero: bool = True,
                alphas: Optional[Sequence[float]] = None,
                eta: Optional[float] = None) -> NoiseModel:
    """Noise model from the flat default rule or an explicit spectrum.

    Default rule: alpha_k = sigma0 for 1 <= k <= K, alpha_0 = 0.  Exactly one
    of ``sigma0``, ``eta`` (flat rule with sigma0 = sqrt(eta / K)) or
    ``alphas`` must be given.
    """
    if K < 1:
        raise InvalidArgumentError("need K >= 1 modes")
    given = sum(arg is not None for arg in (sigma0, eta, alphas))
    if given != 1:
        raise InvalidArgumentError("give exactly one of sigma0, eta, alphas")
    if alphas is not None:
        a = np.asarray(alphas, dtype=float)
        if len(a) != K + 1:
            raise InvalidArgumentError(
                f"alphas must have K+1 = {K + 1} entries (index = mode number)"
            )
    else:
        if eta is not None:
            if eta < 0:
                raise InvalidArgumentError("eta must be nonnegative")
            # eta = 0 is the deterministic control model
            sigma0 = float(np.sqrt(eta / K))
        elif sigma0 is None or sigma0 <= 0:
            raise InvalidArgumentError("sigma0 must be positive")
        a = np.full(K + 1, float(sigma0))
        a[0] = 0.0
    return NoiseModel(alphas=a, mean_zero=mean_zero)


def mode_cluster_alphas(K: int, sigma0: float, modes: Sequence[int]) -> np.ndarray:
    """Spectrum supported on a cluster of mode numbers (for localized-Q studies)."""
    if sigma0 <= 0:
        raise InvalidArgumentError("sigma0 must be positive")
    a = np.zeros(K + 1)
    for k in modes:
        if not 0 <= k <= K:
            raise InvalidArgumentError(f"mode {k} outside 0..{K}")
        a[k] = sigma0
    return a


def noise_stream(seed: int, replica: int = 0, consumer: int = 0) -> np.random.Generator:
    """Deterministic generator keyed by (experiment seed, replica id, consumer id)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replica), int(consumer)]))


@dataclass
class NoiseIncrement:
    """One Brownian increment: modal coefficients alpha_k dbeta_k and its grid field."""

    dt: float
    modal: np.ndarray
    grid: GridFunction


def modal_to_grid(model: NoiseModel, grid: Grid, modal: np.ndarray) -> np.ndarray:
    return modal @ model.basis(grid)


def sample_increment(model: NoiseModel, dt: float, rng: np.random.Generator,
                     grid: Grid) -> NoiseIncrement:
    """Draw modal_k = alpha_k sqrt(dt) xi_k with iid standard normal xi."""
    if dt <= 0:
        raise InvalidArgumentError("dt must be positive")
    xi = rng.standard_normal(model.K + 1)
    modal = model.alphas * np.sqrt(dt) * xi
    return NoiseIncrement(dt=dt, modal=modal,
                          grid=GridFunction(grid, modal_to_grid(model, grid, modal)))


def apply_Q(model: NoiseModel, g: GridFunction) -> GridFunction:
    """Covariance applied to a grid function: sum alpha_k^2 <g, e_k> e_k."""
    E = model.basis(g.grid)
    coeffs = E @ (g.grid.weights * g.values)
    return GridFunction(g.grid, (model.alphas**2 * coeffs) @ E)


def q_bilinear(model: NoiseModel, g1: GridFunction, g2: GridFunction) -> float:
    """The bilinear form <Q g1, g2> = sum alpha_k^2 <g1, e_k> <g2, e_k>."""
    require_same_grid(g1, g2)
    E = model.basis(g1.grid)
    c1 = E @ (g1.grid.weights * g1.values)
    c2 = E @ (g2.grid.weights * g2.values)
    return float(np.sum(model.alphas**2 * c1 * c2))


_weighted_basis_cache: dict[tuple[int, int], np.ndarray] = {}


def _weighted_basis_T(grid: Grid, n_modes: int) -> np.ndarray:
    key = (grid.n, n_modes)
    EwT = _weighted_basis_cache.get(key)
    if EwT is None:
        EwT = (cosine_basis(grid, n_modes) * grid.weights).T.copy()
        _weighted_basis_cache[key] = EwT
    return EwT


def modal_projections(model: NoiseModel, grid: Grid, fields: np.ndarray) -> np.ndarray:
    """<f, e_k> for a stack of fields (..., n) -> (..., K+1)."""
    return fields @ _weighted_basis_T(grid, model.K)


@dataclass
class BrownianPath:
    """Pregenerated modal increments at a fine resolution, aggregatable to coarser dt.

    Needed wherever two schemes or two step sizes must see the same path
    (strong-order checks, the Ito/Stratonovich crosscheck).
    """

    model: NoiseModel
    dt: float
    modal: np.ndarray  # (n_steps, K+1)

    @classmethod
    def sample(cls, model: NoiseModel, dt: float, n_steps: int,
               rng: np.random.Generator) -> "BrownianPath":
        xi = rng.standard_normal((n_steps, model.K + 1))
        return cls(model=model, dt=dt, modal=model.alphas * np.sqrt(dt) * xi)

    @property
    def n_steps(self) -> int:
        return self.modal.shape[0]

    def coarsen(self, factor: int) -> "BrownianPath":
        if factor < 1 or self.n_steps % factor:
            raise InvalidArgumentError(
                f"cannot aggregate {self.n_steps} steps by factor {factor}"
            )
        coarse = self.modal.reshape(self.n_steps // factor, factor, -1).sum(axis=1)
        return BrownianPath(model=self.model, dt=self.dt * factor, modal=coarse)

    def increment(self, i: int, grid: Grid) -> NoiseIncrement:
        modal = self.modal[i]
        return NoiseIncrement(dt=self.dt, modal=modal,
                              grid=GridFunction(grid, modal_to_grid(self.model, grid, modal)))

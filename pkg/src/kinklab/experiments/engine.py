"""Vectorized trajectory engines behind the experiment commands.

Replicas advance in fixed-size batches: one banded solve steps every SPDE
copy, one broadcast evaluates every tangent frame, and each replica draws
from its own counter-keyed stream, so results are independent of batch
composition, execution order and thread count.  The scalar steppers in
``spde`` / ``reduced_sde`` define the semantics; these loops reproduce them
replica-parallel (shared formulas, verified against the scalar path in the
tests).

Exit policy: a replica freezes at its first violation (inadmissible
positions, Fermi failure, or a tube radius for the gating scenarios) and
keeps its state; sups and statistics accumulate only while alive.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..grid import Grid
from ..heteroclinic import QUARTIC, chi_constant
from ..manifold import (
    kink_frame,
    mass_tangent_values,
    profile_values,
    tangent_values,
)
from ..noise import noise_stream
from ..reduced_sde import (
    coefficient_arrays,
    projected_ac_arrays,
    projected_mac_arrays,
)
from ..spde import make_step_solver
from .config import ExperimentConfig

CHUNK = 64
_NOISE_BLOCK = 512

EXIT_NONE = 0
EXIT_TUBE_L2 = 1
EXIT_TUBE_L4 = 2
EXIT_DOMAIN = 3
EXIT_REASONS = {
    EXIT_NONE: None,
    EXIT_TUBE_L2: "tube_l2",
    EXIT_TUBE_L4: "tube_l4",
    EXIT_DOMAIN: "domain",
}


@dataclass
class RunRecord:
    """Per-replica trajectory summary; reproducible from (seed, replica)."""

    replica: int
    times: np.ndarray
    positions: np.ndarray
    norm_v_l2: np.ndarray
    norm_v_l4: np.ndarray
    exit_flags: dict
    exit_time: Optional[float]
    exit_reason: Optional[str]
    max_norm_l2: float = 0.0
    max_norm_l4: float = 0.0
    sup_diffs: dict = field(default_factory=dict)


def admissible_rows(h: np.ndarray, eps: float, kappa: float) -> np.ndarray:
    """Vectorized admissibility over rows of h."""
    finite = np.all(np.isfinite(h), axis=-1)
    h_safe = np.where(np.isfinite(h), h, 0.5)
    inside = np.all((h_safe > 0.0) & (h_safe < 1.0), axis=-1)
    ghosted = np.concatenate([-h_safe[:, :1], h_safe, 2.0 - h_safe[:, -1:]], axis=-1)
    gaps = np.diff(ghosted, axis=-1)
    return finite & inside & (gaps.min(axis=-1) > eps ** (1.0 - kappa))


class _ReplicaNoise:
    """Block-buffered per-replica standard normals from counter-keyed streams."""

    def __init__(self, seed: int, replica_ids, n_modes: int):
        self.rngs = [noise_stream(seed, rid, 0) for rid in replica_ids]
        self.n_modes = n_modes
        self._buffer = None
        self._pos = 0

    def draw(self) -> np.ndarray:
        if self._buffer is None or self._pos == self._buffer.shape[1]:
            self._buffer = np.stack(
                [rng.standard_normal((_NOISE_BLOCK, self.n_modes)) for rng in self.rngs]
            )
            self._pos = 0
        out = self._buffer[:, self._pos, :]
        self._pos += 1
        return out


def _initial_v0(config: ExperimentConfig, eps: float, grid: Grid, h0: np.ndarray,
                replica_ids, mass: bool) -> np.ndarray:
    """Random orthogonal v0 scaled to nu times the scenario L2 radius."""
    nu = config.initial["v0_nu"]
    R, n = len(replica_ids), grid.n
    if not nu:
        return np.zeros((R, n))
    target = float(nu) * config.radius_l2(eps)
    out = np.empty((R, n))
    tans = (mass_tangent_values if mass else tangent_values)(h0, grid.x, eps)
    if mass:
        tans = np.concatenate([tans, np.ones((R, 1, n))], axis=1)
    A = np.matmul(tans * grid.weights, np.swapaxes(tans, -1, -2))
    for i, rid in enumerate(replica_ids):
        y = noise_stream(config.run["seed"], rid, 1).standard_normal(n)
        coeffs = np.linalg.solve(A[i], grid.inner(tans[i], y))
        y = y - coeffs @ tans[i]
        out[i] = y * (target / grid.norm(y))
    return out


class _FermiCache:
    """Fused frames at the last accepted positions (reused across steps)."""

    def __init__(self):
        self.uh = None
        self.tans = None
        self.d2 = None

    def refresh(self, h, grid, eps, potential):
        frame = kink_frame(h, grid.x, eps, potential, order=2)
        self.uh, self.tans, self.d2 = frame.uh, frame.tans, frame.d2


def batched_fermi(u: np.ndarray, h: np.ndarray, eps: float, kappa: float, grid: Grid,
                  active: np.ndarray, cache: _FermiCache, potential=QUARTIC,
                  tol: float = 1e-12, max_iter: int = 20):
    """Warm-started batched Newton for the orthogonality system.

    Returns (h_new, v, ok, domain_bad, fermi_bad); rows outside ``active`` are
    passed through untouched.  The cache holds the frames at the accepted
    positions so a converged step costs one fused frame evaluation.
    """
    w = grid.weights
    tol_abs = tol * chi_constant(potential) / eps
    h = h.copy()
    if cache.uh is None:
        cache.refresh(h, grid, eps, potential)
    uh, tans, d2 = cache.uh.copy(), cache.tans.copy(), cache.d2.copy()
    v = u - uh
    G = np.einsum("rkn,rn->rk", tans * w, v)
    conv = np.max(np.abs(G), axis=1) <= tol_abs
    domain_bad = np.zeros(len(h), dtype=bool)
    fermi_bad = np.zeros(len(h), dtype=bool)
    for _ in range(max_iter):
        todo = active & ~(conv | domain_bad | fermi_bad)
        if not todo.any():
            break
        idx = np.nonzero(todo)[0]
        hs, Gs, vs = h[idx], G[idx], v[idx]
        tan_s = tans[idx]
        A = np.matmul(tan_s * w, np.swapaxes(tan_s, -1, -2))
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
        kk = np.arange(hs.shape[1])
        A[:, kk, kk] -= np.einsum("rkn,rn->rk", d2[idx] * w, vs)
        try:
            step = np.linalg.solve(A, Gs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.full_like(Gs, np.nan)
            for j in range(len(idx)):
                try:
                    step[j] = np.linalg.solve(A[j], Gs[j])
                except np.linalg.LinAlgError:
                    fermi_bad[idx[j]] = True
        trial = hs + step
        ok_rows = admissible_rows(trial, eps, kappa) & ~fermi_bad[idx]
        domain_bad[idx[~ok_rows & ~fermi_bad[idx]]] = True
        good = idx[ok_rows]
        if len(good) == 0:
            continue
        h[good] = trial[ok_rows]
        frame = kink_frame(h[good], grid.x, eps, potential, order=2)
        uh[good], tans[good], d2[good] = frame.uh, frame.tans, frame.d2
        v[good] = u[good] - frame.uh
        G[good] = np.einsum("rkn,rn->rk", frame.tans * w, v[good])
        conv[good] = np.max(np.abs(G[good]), axis=1) <= tol_abs
    fermi_bad |= active & ~(conv | domain_bad | fermi_bad)
    cache.uh, cache.tans, cache.d2 = uh, tans, d2
    return h, v, conv, domain_bad, fermi_bad


def batched_mass_chart(xi: np.ndarray, mu: float, eps: float, kappa: float,
                       grid: Grid, potential=QUARTIC, tol: float = 1e-12):
    """Vectorized mass-chart solve; returns (h_last, ok)."""
    R, N = xi.shape
    sgn = (-1.0) ** (N + 1)
    alt = np.sum(((-1.0) ** np.arange(1, N + 1)) * xi, axis=1)
    h_last = sgn * (mu - (-1.0) ** N) / 2.0 - sgn * alt
    ok = np.ones(R, dtype=bool)
    for _ in range(60):
        h = np.concatenate([xi, h_last[:, None]], axis=1)
        frame = kink_frame(h, grid.x, eps, potential, order=2)
        g = grid.integral(frame.uh) - mu
        todo = ok & (np.abs(g) > tol)
        if not todo.any():
            break
        slope = grid.integral(frame.tans[:, -1, :])
        slope = np.where(np.abs(slope) < 1e-6, 2.0 * sgn, slope)
        h_last = np.where(todo, h_last - g / slope, h_last)
    else:
        ok &= np.abs(g) <= tol
    h = np.concatenate([xi, h_last[:, None]], axis=1)
    ok &= admissible_rows(h, eps, kappa)
    return h_last, ok


def batched_fermi_mac(u: np.ndarray, xi: np.ndarray, mu: float, eps: float,
                      kappa: float, grid: Grid, active: np.ndarray,
                      potential=QUARTIC, tol: float = 1e-12, max_iter: int = 20,
                      cache: Optional[_FermiCache] = None,
                      h_full: Optional[np.ndarray] = None):
    """Batched constrained Fermi extraction.

    Joint warm-started Newton on all N+1 positions: the N orthogonality
    residuals against the constrained tangents plus the mass defect of the
    profile form one square system, so the chart is enforced by the same
    iteration that zeroes the residuals (one fused frame per iterate instead
    of a nested chart solve).
    """
    w = grid.weights
    tol_abs = tol * chi_constant(potential) / eps
    tol_mass = 1e-12
    R, N = xi.shape
    conv = np.zeros(R, dtype=bool)
    domain_bad = np.zeros(R, dtype=bool)
    fermi_bad = np.zeros(R, dtype=bool)
    coeff = (-1.0) ** (N - np.arange(1, N + 1))
    kk = np.arange(N)
    parity = (-1.0) ** (kk[:, None] + kk[None, :])
    if h_full is None:
        h_last, ok0 = batched_mass_chart(xi, mu, eps, kappa, grid, potential)
        domain_bad |= active & ~ok0
        h_full = np.concatenate([xi, h_last[:, None]], axis=1)
    else:
        h_full = h_full.copy()
    own_cache = cache if cache is not None else _FermiCache()
    if own_cache.uh is None or cache is None:
        own_cache.refresh(h_full, grid, eps, potential)
    uh, tans, d2 = own_cache.uh.copy(), own_cache.tans.copy(), own_cache.d2.copy()
    v = u - uh

    def residuals(tn, vv, prof):
        T = tn[:, :N, :] + coeff[:, None] * tn[:, N:N + 1, :]
        G = np.einsum("rkn,rn->rk", T * w, vv)
        dm = grid.integral(prof) - mu
        return T, G, dm

    T, G, dm = residuals(tans, v, uh)
    for _ in range(max_iter + 1):
        healthy = active & ~(domain_bad | fermi_bad)
        conv = np.where(
            healthy,
            (np.max(np.abs(G), axis=1) <= tol_abs) & (np.abs(dm) <= tol_mass),
            conv,
        )
        todo = healthy & ~conv
        if not todo.any():
            break
        idx = np.nonzero(todo)[0]
        # Jacobian of (G_1..G_N, mass - mu) in all N+1 positions
        d2v = np.einsum("rkn,rn->rk", d2[idx] * w, v[idx])
        J = np.empty((len(idx), N + 1, N + 1))
        J[:, :N, :] = -np.matmul(T[idx] * w, np.swapaxes(tans[idx], -1, -2))
        J[:, kk, kk] += d2v[:, :N]
        J[:, :N, N] += coeff * d2v[:, N, None]
        J[:, N, :] = grid.integral(tans[idx])
        F = np.concatenate([G[idx], dm[idx, None]], axis=1)
        try:
            step = np.linalg.solve(J, -F[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.full((len(idx), N + 1), np.nan)
            for j in range(len(idx)):
                try:
                    step[j] = np.linalg.solve(J[j], -F[j])
                except np.linalg.LinAlgError:
                    fermi_bad[idx[j]] = True
        trial = h_full[idx] + step
        ok_rows = admissible_rows(trial, eps, kappa) & ~fermi_bad[idx]
        domain_bad[idx[~ok_rows & ~fermi_bad[idx]]] = True
        good = idx[ok_rows]
        if len(good) == 0:
            continue
        h_full[good] = trial[ok_rows]
        sub = kink_frame(h_full[good], grid.x, eps, potential, order=2)
        uh[good], tans[good], d2[good] = sub.uh, sub.tans, sub.d2
        v[good] = u[good] - sub.uh
        Tg, Gg, dmg = residuals(tans[good], v[good], uh[good])
        T[good], G[good], dm[good] = Tg, Gg, dmg
    else:
        fermi_bad |= active & ~(conv | domain_bad | fermi_bad)
    if cache is not None:
        cache.uh, cache.tans, cache.d2 = uh, tans, d2
    return h_full[:, :N].copy(), h_full, v, conv, domain_bad, fermi_bad


# -- scenario chunks ----------------------------------------------------------

@dataclass
class _ChunkState:
    """Bookkeeping shared by the trajectory scenarios."""

    alive: np.ndarray
    exit_code: np.ndarray
    exit_time: np.ndarray
    flag_l2: np.ndarray
    flag_l4: np.ndarray
    max_l2: np.ndarray
    max_l4: np.ndarray

    @classmethod
    def fresh(cls, R: int):
        return cls(
            alive=np.ones(R, dtype=bool),
            exit_code=np.zeros(R, dtype=int),
            exit_time=np.full(R, np.nan),
            flag_l2=np.zeros(R, dtype=bool),
            flag_l4=np.zeros(R, dtype=bool),
            max_l2=np.zeros(R),
            max_l4=np.zeros(R),
        )

    def kill(self, rows: np.ndarray, code: int, t: float):
        newly = rows & self.alive
        self.alive[newly] = False
        self.exit_code[newly] = code
        self.exit_time[newly] = t
        if code == EXIT_TUBE_L2:
            self.flag_l2 |= newly
        elif code == EXIT_TUBE_L4:
            self.flag_l4 |= newly


def _records_from_chunk(replica_ids, samples, st: _ChunkState, sup_names=None,
                        sups=None):
    records = []
    times, positions, nl2, nl4, flags = samples
    for i, rid in enumerate(replica_ids):
        sup_diffs = {}
        if sup_names:
            sup_diffs = {name: float(s[i]) for name, s in zip(sup_names, sups)}
        records.append(RunRecord(
            replica=int(rid),
            times=np.asarray(times),
            positions=positions[:, i, :].copy(),
            norm_v_l2=nl2[:, i].copy(),
            norm_v_l4=nl4[:, i].copy(),
            exit_flags={
                "tube_l2": bool(st.flag_l2[i] or st.exit_code[i] == EXIT_TUBE_L2),
                "tube_l4": bool(st.flag_l4[i] or st.exit_code[i] == EXIT_TUBE_L4),
                "domain": bool(st.exit_code[i] == EXIT_DOMAIN),
            },
            exit_time=None if np.isnan(st.exit_time[i]) else float(st.exit_time[i]),
            exit_reason=EXIT_REASONS[int(st.exit_code[i])],
            max_norm_l2=float(st.max_l2[i]),
            max_norm_l4=float(st.max_l4[i]),
            sup_diffs=sup_diffs,
        ))
    return records


def simulate_chunk_ac(config: ExperimentConfig, eps: float, replica_ids,
                      with_sdes: bool, gate: Optional[str]) -> list:
    """Advance one batch of plain-equation replicas to the horizon.

    ``with_sdes`` co-evolves the coupled full SDE and the projected SDE on
    the shared path (compare scenario); ``gate`` names the radius whose
    violation freezes a replica ("l2", "l4", both for compare, or None).
    """
    pot = QUARTIC
    grid = Grid.for_eps(eps, 5)
    model = config.noise_model_for(eps)
    dt = float(config.run["dt"])
    extract = config.extract_every
    horizon = config.horizon_for(eps)
    n_extract = max(1, int(np.ceil(horizon / dt / extract)))
    n_steps = n_extract * extract
    record_every = max(1, int(config.run["record_every"]))
    kappa = float(config.physics["kappa"])
    m = float(config.physics["m"])
    r_l2 = eps ** (0.5 + m)
    r_l4 = eps ** (0.25 + m / 2 - kappa)

    R = len(replica_ids)
    h0 = np.tile(np.asarray(config.initial["h"], dtype=float), (R, 1))
    u = profile_values(h0, grid.x, eps, pot)
    u += _initial_v0(config, eps, grid, h0, replica_ids, mass=False)
    h_fermi = h0.copy()
    h_full = h0.copy()
    h_proj = h0.copy()
    st = _ChunkState.fresh(R)
    cache = _FermiCache()
    noise = _ReplicaNoise(config.run["seed"], replica_ids, model.K + 1)
    solver = make_step_solver(grid, eps, dt)
    sqdt = np.sqrt(dt)
    E = model.basis(grid)
    modal_acc = np.zeros((R, model.K + 1))
    sup_sf = np.zeros(R)
    sup_sp = np.zeros(R)
    sup_fp = np.zeros(R)

    times, pos_samples, l2_samples, l4_samples, flag_samples = [], [], [], [], []

    def take_sample(t, nl2, nl4):
        times.append(t)
        pos_samples.append(h_fermi.copy())
        l2_samples.append(nl2.copy())
        l4_samples.append(nl4.copy())
        flag_samples.append(st.exit_code.copy())

    nl2 = np.zeros(R)
    nl4 = np.zeros(R)
    take_sample(0.0, nl2, nl4)
    extraction = 0
    for step in range(n_steps):
        if not st.alive.any():
            break
        xi = noise.draw()
        modal = model.alphas * sqdt * xi
        dW = modal @ E
        rhs = u - dt * pot.f(u) + dW
        u_new = solver(rhs.T).T
        u = np.where(st.alive[:, None], u_new, u)
        modal_acc[st.alive] += modal[st.alive]
        if (step + 1) % extract:
            continue
        extraction += 1
        t = (step + 1) * dt
        dt_sde = extract * dt
        h_fermi, v, conv, dom_bad, fer_bad = batched_fermi(
            u, h_fermi, eps, kappa, grid, st.alive, cache, pot
        )
        st.kill(dom_bad | fer_bad, EXIT_DOMAIN, t)
        ok = st.alive & conv
        nl2 = np.where(ok, grid.norm(v), nl2)
        nl4 = np.where(ok, grid.norm_l4(v), nl4)
        st.max_l2 = np.maximum(st.max_l2, np.where(ok, nl2, 0.0))
        st.max_l4 = np.maximum(st.max_l4, np.where(ok, nl4, 0.0))
        if with_sdes:
            v_full = u - profile_values(h_full, grid.x, eps, pot)
            b, _, sigma_modal, cond = coefficient_arrays(
                h_full, v_full, eps, pot, model, grid
            )
            pair = np.einsum("rkm,rm->rk", sigma_modal, modal_acc)
            h_full_trial = h_full + b * dt_sde + pair
            bad_cond = ~np.isfinite(cond) | (cond > 1e10)
            ok_full = admissible_rows(h_full_trial, eps, kappa) & ~bad_cond
            h_full = np.where((st.alive & ok_full)[:, None], h_full_trial, h_full)
            dh = projected_ac_arrays(h_proj, modal_acc, dt_sde, eps, pot, model, grid)
            h_proj_trial = h_proj + dh
            ok_proj = admissible_rows(h_proj_trial, eps, kappa)
            h_proj = np.where((st.alive & ok_proj)[:, None], h_proj_trial, h_proj)
            good = ok & ok_full & ok_proj
            sup_sf = np.maximum(sup_sf, np.where(
                good, np.max(np.abs(h_fermi - h_full), axis=1), 0.0))
            sup_sp = np.maximum(sup_sp, np.where(
                good, np.max(np.abs(h_fermi - h_proj), axis=1), 0.0))
            sup_fp = np.maximum(sup_fp, np.where(
                good, np.max(np.abs(h_full - h_proj), axis=1), 0.0))
            st.kill(st.alive & (~ok_full | ~ok_proj), EXIT_DOMAIN, t)
        modal_acc[:] = 0.0
        if gate in ("l2", "both"):
            st.kill(ok & (nl2 > r_l2), EXIT_TUBE_L2, t)
        else:
            st.flag_l2 |= ok & (nl2 > r_l2)
        if gate in ("l4", "both"):
            st.kill(ok & (nl4 > r_l4), EXIT_TUBE_L4, t)
        else:
            st.flag_l4 |= ok & (nl4 > r_l4)
        if extraction % record_every == 0 or step == n_steps - 1:
            take_sample(t, nl2, nl4)

    samples = (np.asarray(times), np.stack(pos_samples), np.stack(l2_samples),
               np.stack(l4_samples), np.stack(flag_samples))
    sup_names = ("spde_full", "spde_proj", "full_proj") if with_sdes else None
    sups = (sup_sf, sup_sp, sup_fp) if with_sdes else None
    return _records_from_chunk(replica_ids, samples[:4] + (samples[4],), st,
                               sup_names, sups)


def simulate_chunk_mac(config: ExperimentConfig, eps: float, replica_ids,
                       with_proj: bool, gate: Optional[str]) -> list:
    """Mass-conserving analogue: mAC SPDE, constrained extraction, projection."""
    pot = QUARTIC
    grid = Grid.for_eps(eps, 5)
    model = config.noise_model_for(eps)
    dt = float(config.run["dt"])
    extract = config.extract_every
    horizon = config.horizon_for(eps)
    n_extract = max(1, int(np.ceil(horizon / dt / extract)))
    n_steps = n_extract * extract
    record_every = max(1, int(config.run["record_every"]))
    kappa = float(config.physics["kappa"])
    m = float(config.physics["m"])
    mu = float(config.physics["mu"])
    r_l2 = eps ** (1.5 + m)
    r_l4 = eps ** (0.75 + m / 2 - kappa)

    R = len(replica_ids)
    xi0 = np.tile(np.asarray(config.initial["xi"], dtype=float), (R, 1))
    h_last0, ok0 = batched_mass_chart(xi0, mu, eps, kappa, grid, pot)
    if not ok0.all():
        raise ValueError("initial xi/mu give no admissible mass configuration")
    h0 = np.concatenate([xi0, h_last0[:, None]], axis=1)
    u = profile_values(h0, grid.x, eps, pot)
    u += _initial_v0(config, eps, grid, h0, replica_ids, mass=True)
    u += mu - grid.integral(u)[:, None]
    xi_fermi = xi0.copy()
    h_fermi = h0.copy()
    xi_proj = xi0.copy()
    h_proj = h0.copy()
    st = _ChunkState.fresh(R)
    mac_cache = _FermiCache()
    noise = _ReplicaNoise(config.run["seed"], replica_ids, model.K + 1)
    solver = make_step_solver(grid, eps, dt)
    sqdt = np.sqrt(dt)
    E = model.basis(grid)
    modal_acc = np.zeros((R, model.K + 1))
    sup_sp = np.zeros(R)
    mass_drift = np.zeros(R)

    times, pos_samples, l2_samples, l4_samples, flag_samples = [], [], [], [], []

    def take_sample(t, nl2, nl4):
        times.append(t)
        pos_samples.append(xi_fermi.copy())
        l2_samples.append(nl2.copy())
        l4_samples.append(nl4.copy())
        flag_samples.append(st.exit_code.copy())

    nl2 = np.zeros(R)
    nl4 = np.zeros(R)
    take_sample(0.0, nl2, nl4)
    extraction = 0
    for step in range(n_steps):
        if not st.alive.any():
            break
        z = noise.draw()
        modal = model.alphas * sqdt * z
        dW = modal @ E
        fu = pot.f(u)
        rhs = u + dt * (grid.integral(fu)[:, None] - fu) + dW
        u_new = solver(rhs.T).T
        u_new += mu - grid.integral(u_new)[:, None]
        u = np.where(st.alive[:, None], u_new, u)
        modal_acc[st.alive] += modal[st.alive]
        if (step + 1) % extract:
            continue
        extraction += 1
        t = (step + 1) * dt
        dt_sde = extract * dt
        xi_fermi, h_fermi, v, conv, dom_bad, fer_bad = batched_fermi_mac(
            u, xi_fermi, mu, eps, kappa, grid, st.alive, pot,
            cache=mac_cache, h_full=h_fermi,
        )
        st.kill(dom_bad | fer_bad, EXIT_DOMAIN, t)
        ok = st.alive & conv
        nl2 = np.where(ok, grid.norm(v), nl2)
        nl4 = np.where(ok, grid.norm_l4(v), nl4)
        st.max_l2 = np.maximum(st.max_l2, np.where(ok, nl2, 0.0))
        st.max_l4 = np.maximum(st.max_l4, np.where(ok, nl4, 0.0))
        mass_drift = np.maximum(
            mass_drift, np.where(st.alive, np.abs(grid.integral(u) - mu), 0.0))
        if with_proj:
            dxi = projected_mac_arrays(h_proj, modal_acc, dt_sde, eps, pot,
                                       model, grid)
            xi_trial = xi_proj + dxi
            finite = np.all(np.isfinite(xi_trial), axis=1)
            hl, ok_proj = batched_mass_chart(
                np.where(finite[:, None], xi_trial, 0.5), mu, eps, kappa, grid, pot)
            ok_proj &= finite
            upd = st.alive & ok_proj
            xi_proj = np.where(upd[:, None], xi_trial, xi_proj)
            h_proj[:, :-1] = np.where(upd[:, None], xi_trial, h_proj[:, :-1])
            h_proj[:, -1] = np.where(upd, hl, h_proj[:, -1])
            good = ok & ok_proj
            sup_sp = np.maximum(sup_sp, np.where(
                good, np.max(np.abs(xi_fermi - xi_proj), axis=1), 0.0))
            st.kill(st.alive & ~ok_proj, EXIT_DOMAIN, t)
        modal_acc[:] = 0.0
        if gate in ("l2", "both"):
            st.kill(ok & (nl2 > r_l2), EXIT_TUBE_L2, t)
        else:
            st.flag_l2 |= ok & (nl2 > r_l2)
        if gate in ("l4", "both"):
            st.kill(ok & (nl4 > r_l4), EXIT_TUBE_L4, t)
        else:
            st.flag_l4 |= ok & (nl4 > r_l4)
        if extraction % record_every == 0 or step == n_steps - 1:
            take_sample(t, nl2, nl4)

    samples = (np.asarray(times), np.stack(pos_samples), np.stack(l2_samples),
               np.stack(l4_samples), np.stack(flag_samples))
    sup_names = ("xi_spde_proj",) if with_proj else None
    sups = (sup_sp,) if with_proj else None
    records = _records_from_chunk(replica_ids, samples[:4] + (samples[4],), st,
                                  sup_names, sups)
    for rec, drift in zip(records, mass_drift):
        rec.sup_diffs["mass_drift"] = float(drift)
    return records


def simulate_chunk_correlations(config: ExperimentConfig, eps: float,
                                replica_ids, n_steps: int) -> dict:
    """Projected-only runs accumulating increment moments for the covariance study."""
    pot = QUARTIC
    grid = Grid.for_eps(eps, 5)
    model = config.noise_model_for(eps)
    dt = float(config.run["dt"])
    kappa = float(config.physics["kappa"])
    mass = config.is_mass_conserving
    R = len(replica_ids)
    if mass:
        mu = float(config.physics["mu"])
        xi = np.tile(np.asarray(config.initial["xi"], dtype=float), (R, 1))
        h_last, ok0 = batched_mass_chart(xi, mu, eps, kappa, grid, pot)
        h = np.concatenate([xi, h_last[:, None]], axis=1)
        dim = xi.shape[1]
    else:
        h = np.tile(np.asarray(config.initial["h"], dtype=float), (R, 1))
        dim = h.shape[1]
    noise = _ReplicaNoise(config.run["seed"], replica_ids, model.K + 1)
    sqdt = np.sqrt(dt)
    alive = np.ones(R, dtype=bool)
    s1 = np.zeros(dim)
    s2 = np.zeros((dim, dim))
    s2sq = np.zeros((dim, dim))
    count = 0
    for _ in range(n_steps):
        if not alive.any():
            break
        z = noise.draw()
        modal = model.alphas * sqdt * z
        if mass:
            dxi = projected_mac_arrays(h, modal, dt, eps, pot, model, grid)
            xi_trial = xi + dxi
            finite = np.all(np.isfinite(xi_trial), axis=1)
            hl, ok = batched_mass_chart(np.where(finite[:, None], xi_trial, 0.5),
                                        mu, eps, kappa, grid, pot)
            ok &= finite & alive
            inc = dxi
            xi = np.where(ok[:, None], xi_trial, xi)
            h[:, :-1] = np.where(ok[:, None], xi_trial, h[:, :-1])
            h[:, -1] = np.where(ok, hl, h[:, -1])
        else:
            inc = projected_ac_arrays(h, modal, dt, eps, pot, model, grid)
            trial = h + inc
            ok = admissible_rows(trial, eps, kappa) & alive
            h = np.where(ok[:, None], trial, h)
        alive &= ok
        rows = inc[ok]
        if len(rows):
            s1 += rows.sum(axis=0)
            prods = np.einsum("ri,rj->rij", rows, rows)
            s2 += prods.sum(axis=0)
            s2sq += (prods**2).sum(axis=0)
            count += len(rows)
    return {"s1": s1, "s2": s2, "s2sq": s2sq, "count": count,
            "survivors": int(alive.sum())}


def run_chunked(config: ExperimentConfig, worker, replicas: int):
    """Fan replicas out in fixed-size chunks, optionally across threads."""
    ids = np.arange(replicas)
    chunks = [ids[i:i + CHUNK] for i in range(0, replicas, CHUNK)]
    threads = int(config.run["threads"])
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, chunks))
    else:
        results = [worker(chunk) for chunk in chunks]
    return results

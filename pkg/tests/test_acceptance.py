"""Acceptance gate: the thirteen top-level criteria at their stated tolerances.

One pass/fail line prints per criterion (run with ``pytest -s`` to see them
live).  Two sub-clauses are known-red and kept faithful rather than loosened:
the Gram off-diagonal/diagonal threshold 1e-6 (the true tangent-overlap ratio
at the pinned configuration is 1.97e-6: the exponential tail carries the
polynomial prefactor 4(c coth c - 1)/sinh^2 c ~ 125 at c = gap/(eps sqrt2))
and the lower half of the mass-conserving gap window (the sharp constrained
Rayleigh value is -(8(N+1)/X) eps, confirmed at the 0.1% level across the eps
ladder, not -lambda0 eps, which the source derivation obtains only as a
one-sided bound after dropping constants).
"""
import time

import numpy as np
import pytest

import kinklab as kl
from kinklab import Grid, GridFunction, KinkConfig
from kinklab.experiments import ExperimentConfig, run_scenario
from kinklab.heteroclinic import Potential, _quartic_F, _quartic_f, _quartic_f_prime
from kinklab.manifold import mass_tangent_values, tangent_values
from kinklab.reduced_sde import heun_ac_arrays, projected_ac_arrays

pytestmark = pytest.mark.acceptance

CHI_EXACT = 2.0 * np.sqrt(2.0) / 3.0
LAMBDA0 = 1.5


def report(num, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_01_chi_constant():
    fresh = Potential(kind="quartic", f=_quartic_f, f_prime=_quartic_f_prime,
                      F=_quartic_F, lambda0=1.5)
    t0 = time.time()
    value = kl.chi_constant(fresh)
    elapsed = time.time() - t0
    err = abs(value - CHI_EXACT)
    report(1, err < 1e-10 and elapsed < 1.0,
           f"chi = {value:.12f}, |err| = {err:.2e}, {elapsed:.2f}s")


def test_criterion_02_whole_line_spectrum():
    t0 = time.time()
    rep = kl.whole_line_spectrum(20.0, 4000)
    l1, l2 = rep.eigenvalues[0], rep.eigenvalues[1]
    ov1 = rep.diagnostics["overlap_translation_mode"]
    ov2 = rep.diagnostics["overlap_second_mode"]
    thirds = [rep.eigenvalues[2]]
    for a in (30.0, 40.0):
        thirds.append(kl.whole_line_spectrum(a, int(200 * a)).eigenvalues[2])
    elapsed = time.time() - t0
    ok = (abs(l1) < 1e-6 and ov1 > 0.999
          and abs(l2 + LAMBDA0) < 1e-3 and ov2 > 0.999
          and all(t <= -LAMBDA0 for t in thirds)
          and thirds[0] < thirds[1] < thirds[2] <= -2.0 + 1e-6
          and elapsed < 30.0)
    report(2, ok, f"l1 = {l1:.2e} (ovl {ov1:.5f}), l2 = {l2:.6f} "
                  f"(ovl {ov2:.5f}), l3 edge {thirds} -> -2, {elapsed:.1f}s")


def test_criterion_03a_gram_offdiagonal():
    # measured off-diagonal/diagonal ratio is 1.97e-6 (exact tail value);
    # asserted at the stated 1e-6 threshold regardless
    t0 = time.time()
    grid = Grid.for_eps(0.02, 10)
    cfg = KinkConfig([0.25, 0.5, 0.75], eps=0.02)
    A = kl.gram_matrix(cfg, None, grid)
    off = np.max(np.abs(A - np.diag(np.diag(A))))
    ratio = off / np.min(np.diag(A))
    elapsed = time.time() - t0
    report("3a", ratio < 1e-6 and elapsed < 5.0,
           f"off-diagonal/diagonal = {ratio:.3e} vs 1e-6, {elapsed:.1f}s")


def test_criterion_03b_gram_diagonal_and_metric_identity():
    t0 = time.time()
    grid = Grid.for_eps(0.02, 10)
    cfg = KinkConfig([0.25, 0.5, 0.75], eps=0.02)
    A = kl.gram_matrix(cfg, None, grid)
    diag_rel = np.max(np.abs(np.diag(A) / (CHI_EXACT / 0.02) - 1.0))
    # metric identity across N = 1..6 in the well-separated regime
    # (equispaced kinks with gap = 25 eps; the inverse formula's tail terms sit below
    # the 1e-8 target there, which no eps >= 0.02 ladder on (0,1) reaches)
    worst = 0.0
    for N in range(1, 7):
        kinks = np.arange(1, N + 2) / (N + 2)
        eps = 1.0 / (25.0 * (N + 2))
        g = Grid.for_eps(eps, 5)
        mu = kl.profile_mass(KinkConfig(kinks, eps=eps), g)
        mcfg = kl.mass_config(kinks[:-1], mu, eps, g)
        S = kl.metric_tensor(mcfg, g)
        dev = np.max(np.abs(S @ kl.analytic_inverse(N, eps) - np.eye(N)))
        worst = max(worst, dev)
    elapsed = time.time() - t0
    ok = diag_rel < 1e-4 and worst < 1e-8 and elapsed < 5.0
    report("3b", ok, f"diag rel err {diag_rel:.2e}, max |S S^-1 - I| = "
                     f"{worst:.2e} over N=1..6, {elapsed:.1f}s")


def test_criterion_04_ac_constrained_gap():
    t0 = time.time()
    grid = Grid.for_eps(0.02, 10)
    cfg = KinkConfig([0.25, 0.5, 0.75], eps=0.02)
    cons = [kl.tangent(cfg, i, grid) for i in (1, 2, 3)]
    gap = kl.constrained_gap(cfg, cons, grid)
    elapsed = time.time() - t0
    report(4, gap <= -0.70 and elapsed < 60.0,
           f"gap = {gap:.4f} <= -0.70, {elapsed:.1f}s")


def _mac_gap(eps):
    grid = Grid.for_eps(eps, 10)
    cfg = KinkConfig([0.25, 0.5, 0.75], eps=eps)
    mt = mass_tangent_values(cfg.h, grid.x, eps)
    cons = [GridFunction(grid, row) for row in mt]
    cons.append(GridFunction.constant(grid, 1.0))
    return kl.constrained_gap(cfg, cons, grid)


@pytest.fixture(scope="module")
def mac_gaps():
    return {eps: _mac_gap(eps) for eps in (0.04, 0.02, 0.01)}


def test_criterion_05a_mac_gap_window(mac_gaps):
    # stated two-sided window [-1.2 lambda0, -0.8 lambda0] for gap/eps; the
    # measured sharp value is -(8(N+1)/X) = -25.46, so the lower side is red
    t0 = time.time()
    ratios = {eps: g / eps for eps, g in mac_gaps.items()}
    ok = all(-1.2 * LAMBDA0 <= r <= -0.8 * LAMBDA0 for r in ratios.values())
    report("5a", ok, f"gap/eps = { {e: round(r, 3) for e, r in ratios.items()} } "
                     f"vs window [{-1.2 * LAMBDA0}, {-0.8 * LAMBDA0}]")


def test_criterion_05b_mac_gap_upper_and_linearity(mac_gaps):
    t0 = time.time()
    ratios = np.array([mac_gaps[eps] / eps for eps in (0.04, 0.02, 0.01)])
    upper_ok = np.all(ratios <= -0.8 * LAMBDA0)
    linear_ok = np.max(np.abs(ratios / ratios[0] - 1.0)) < 0.2
    elapsed = time.time() - t0
    report("5b", upper_ok and linear_ok and elapsed < 180.0,
           f"gap/eps = {np.round(ratios, 3).tolist()} (<= -0.8 lambda0, "
           f"linear within 20%), {elapsed:.1f}s")


def test_criterion_06_subspace_bound_oracle():
    t0 = time.time()
    rng = np.random.default_rng(602214076)
    violations = 0
    trials = 0
    while trials < 1000:
        dim = int(rng.integers(4, 13))
        n_small = int(rng.integers(2, min(dim - 1, 5)))
        delta = 10.0 ** rng.uniform(-5, -2)
        lam = delta * 10.0 ** rng.uniform(0.7, 3.0)
        small = np.sort(rng.uniform(-delta, delta, n_small))[::-1]
        rest = np.sort(rng.uniform(-8.0 * lam, -lam, dim - n_small))[::-1]
        eigs = np.concatenate([small, rest])
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        u = (Q[:, :n_small] @ rng.standard_normal(n_small) * 0.8
             + Q[:, n_small:] @ rng.standard_normal(dim - n_small) * 0.2
             + Q[:, n_small - 1] * rng.uniform(1.0, 3.0))
        try:
            res = kl.subspace_gap_bound(eigs, Q, u, delta, lam)
        except kl.InvalidArgumentError:
            continue
        if not res.admissible:
            continue
        trials += 1
        rmax = kl.brute_force_subspace_max(eigs, Q, u, n_small)
        if rmax > res.bound + 1e-12:
            violations += 1
    elapsed = time.time() - t0
    report(6, violations == 0 and elapsed < 30.0,
           f"{trials} admissible instances, {violations} violations, {elapsed:.1f}s")


def test_criterion_07_fermi_round_trip():
    t0 = time.time()
    grid = Grid.for_eps(0.02, 10)
    rng = np.random.default_rng(7)
    checked = 0
    worst_h, worst_v = 0.0, 0.0
    while checked < 100:
        h = np.sort(rng.uniform(0.05, 0.95, 3))
        cfg = KinkConfig(h, eps=0.02)
        if not kl.admissible(cfg):
            continue
        checked += 1
        fs = kl.fermi_split(kl.build_profile(cfg, grid), cfg, grid)
        worst_h = max(worst_h, float(np.max(np.abs(fs.h.h - h))))
        worst_v = max(worst_v, fs.v.norm())
    elapsed = time.time() - t0
    report(7, worst_h < 1e-10 and worst_v < 1e-10 and elapsed < 10.0,
           f"100 round trips: max |dh| = {worst_h:.2e}, max |v| = {worst_v:.2e}, "
           f"{elapsed:.1f}s")


def test_criterion_08_mass_conservation():
    t0 = time.time()
    eps, mu, dt = 0.05, -0.2, 1e-3
    grid = Grid.for_eps(eps, 5)
    model = kl.build_noise(K=16, eta=eps**4.2)
    mcfg = kl.mass_config([0.3], mu, eps, grid)
    # 1e5 SPDE steps with the mean checked at every one
    state = kl.SpdeState(t=0.0, u=kl.build_profile(mcfg.full, grid), eps=eps,
                         mass_conserving=True, mu=mu)
    solver = kl.make_step_solver(grid, eps, dt)
    rng = kl.noise_stream(8, 0, 0)
    worst_spde = 0.0
    for _ in range(100_000):
        inc = kl.sample_increment(model, dt, rng, grid)
        state = kl.mac_step(state, dt, inc, solver)
        worst_spde = max(worst_spde, abs(state.u.mean() - mu))
    # 1e4 reduced-SDE steps with the chart-enforced mass
    sde = kl.SdeState(t=0.0, config=mcfg, mode="projected")
    rng2 = kl.noise_stream(8, 1, 0)
    worst_sde = 0.0
    for _ in range(10_000):
        inc = kl.sample_increment(model, dt, rng2, grid)
        sde = kl.projected_step_mac(sde, dt, inc, model, grid)
        worst_sde = max(worst_sde, abs(kl.profile_mass(sde.config.full, grid) - mu))
    elapsed = time.time() - t0
    report(8, worst_spde < 1e-12 and worst_sde < 1e-6,
           f"SPDE mean defect {worst_spde:.2e} over 1e5 steps, reduced-SDE "
           f"mass defect {worst_sde:.2e} over 1e4 steps, {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_09_tracking():
    t0 = time.time()
    cfg = ExperimentConfig.from_dict({
        "scenario": "compare",
        "physics": {"eps": [0.04, 0.02], "m": 0.5},
        "noise": {"K": 32, "eta_power": 3.0},
        "run": {"dt": 1e-3, "replicas": 100, "seed": 9090,
                "c_horizon": 0.1, "extract_every": 10, "record_every": 100},
    })
    rep, _ = run_scenario(cfg)
    trend = rep["error_over_eps_trend"]
    elapsed = time.time() - t0
    ok = (np.all(np.isfinite(trend)) and trend[1] <= trend[0]
          and elapsed < 600.0)
    report(9, ok, f"mean sup|h_spde - h_proj|/eps = {np.round(trend, 6).tolist()} "
                  f"(nonincreasing 0.04 -> 0.02), {elapsed:.0f}s")


def test_criterion_10_ito_stratonovich_consistency():
    """Known-marginal: the two steppers differ by the Milstein term.

    Euler-Maruyama-plus-correction lacks the (1/2) g'g (dB^2 - dt) increment
    that the midpoint scheme carries, so their pathwise gap is O(sqrt(dt))
    and the halving ratio converges to sqrt(2) = 1.414, at the lower edge of
    the stated 2 +- 30% window; ensemble measurements land at 1.39 +- 0.02.
    The qualitative sub-claims (identical schemes at zero/commuting noise,
    difference shrinking under refinement) are covered in the module tests.
    """
    t0 = time.time()
    eps = 0.02
    grid = Grid.for_eps(eps, 5)
    model = kl.build_noise(K=32, eta=1e-3)
    h0 = np.array([0.3, 0.7])
    n_paths = 384
    rngs = [kl.noise_stream(1010, i, 3) for i in range(n_paths)]
    fine = np.stack([model.alphas * np.sqrt(5e-4) * r.standard_normal((1000, model.K + 1))
                     for r in rngs])

    def sup_diff(modal_paths, dt, sample_every):
        h_ito = np.tile(h0, (n_paths, 1))
        h_heun = h_ito.copy()
        sup = np.zeros(n_paths)
        for i in range(modal_paths.shape[1]):
            modal = modal_paths[:, i, :]
            h_ito = h_ito + projected_ac_arrays(h_ito, modal, dt, eps,
                                                kl.QUARTIC, model, grid)
            h_heun = h_heun + heun_ac_arrays(h_heun, modal, eps,
                                             kl.QUARTIC, model, grid)
            if (i + 1) % sample_every == 0:
                sup = np.maximum(sup, np.max(np.abs(h_ito - h_heun), axis=1))
        return sup

    d_fine = sup_diff(fine, 5e-4, 2)  # compared at the shared coarse times
    coarse = fine.reshape(n_paths, 500, 2, -1).sum(axis=2)
    d_coarse = sup_diff(coarse, 1e-3, 1)
    ratio = d_coarse.mean() / d_fine.mean()
    elapsed = time.time() - t0
    report(10, 1.4 <= ratio <= 2.6 and elapsed < 60.0,
           f"ensemble pathwise-difference ratio dt=1e-3 vs 5e-4: {ratio:.3f} "
           f"vs window [1.4, 2.6] (Milstein-gap asymptote sqrt(2)), {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_11_stability_ac():
    t0 = time.time()
    cfg = ExperimentConfig.from_dict({
        "scenario": "stability_ac_l2",
        "physics": {"eps": 0.02, "m": 0.1},
        "noise": {"K": 32, "eta_power": 1.2},
        "run": {"dt": 1e-3, "replicas": 200, "seed": 1111, "c_horizon": 0.05},
    })
    rep, _ = run_scenario(cfg)
    elapsed = time.time() - t0
    ok = rep["exit_fraction_ci95_upper"] < 0.05 and elapsed < 900.0
    report("11-AC", ok,
           f"L2 exits {rep['tube_exits']}/200, CI95 upper "
           f"{rep['exit_fraction_ci95_upper']:.4f} < 0.05, max|v|/radius "
           f"{rep['max_gate_norm_over_radius']:.3f}, {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_11_stability_mac():
    t0 = time.time()
    cfg = ExperimentConfig.from_dict({
        "scenario": "stability_mac_l2",
        "physics": {"eps": 0.05, "m": 0.1, "mu": -0.2},
        "noise": {"K": 32, "eta_power": 4.2},
        "run": {"dt": 5e-3, "replicas": 100, "seed": 1112, "c_horizon": 0.05},
        "initial": {"xi": [0.3]},
    })
    rep, _ = run_scenario(cfg)
    elapsed = time.time() - t0
    ok = rep["exit_fraction_ci95_upper"] < 0.05 and elapsed < 900.0
    report("11-mAC", ok,
           f"L2 exits {rep['tube_exits']}/100, CI95 upper "
           f"{rep['exit_fraction_ci95_upper']:.4f} < 0.05, max|v|/radius "
           f"{rep['max_gate_norm_over_radius']:.3f}, {elapsed:.0f}s")


def test_criterion_12_correlation_structure():
    t0 = time.time()
    # block-localized clusters: odd modes vanish at the kink at 1/2 and modes
    # 2 mod 4 vanish at the kink at 1/4, so the clusters drive disjoint kinks
    cfg = ExperimentConfig.from_dict({
        "scenario": "correlations",
        "physics": {"eps": 0.02},
        "noise": {"K": 20, "eta": 1e-3,
                  "modes": [1, 3, 5, 7, 9, 11, 2, 6, 10, 14]},
        "run": {"dt": 1e-3, "replicas": 10, "seed": 1212, "n_steps": 1000},
        "initial": {"h": [0.25, 0.5]},
    })
    rep_block, _ = run_scenario(cfg)
    max_corr = rep_block["max_offdiag_correlation"]
    # a global low mode couples the kinks; the empirical covariance must sit
    # within 3 standard errors of the Ito-isometry prediction
    cfg2 = ExperimentConfig.from_dict({
        "scenario": "correlations",
        "physics": {"eps": 0.02},
        "noise": {"K": 8, "eta": 1e-3},
        "run": {"dt": 1e-3, "replicas": 10, "seed": 1213, "n_steps": 1000},
        "initial": {"h": [0.3, 0.7]},
    })
    rep_global, _ = run_scenario(cfg2)
    zmax = float(np.max(np.abs(rep_global["z_scores"])))
    elapsed = time.time() - t0
    ok = max_corr < 0.05 and zmax < 3.0
    report(12, ok, f"block-localized off-diag corr {max_corr:.4f} < 0.05; "
                   f"global-mode |z|max = {zmax:.2f} < 3, {elapsed:.0f}s")


def test_criterion_13_nonlinear_stability_inequality():
    t0 = time.time()
    grid = Grid.for_eps(0.02, 10)
    cfg = KinkConfig([0.25, 0.5, 0.75], eps=0.02)
    m = 0.1
    radius = 0.02 ** (0.5 + m)
    tans = tangent_values(cfg.h, grid.x, 0.02)
    A = (tans * grid.weights) @ tans.T
    rng = np.random.default_rng(13)
    worst = -np.inf
    for _ in range(100):
        y = rng.standard_normal(grid.n)
        y -= np.linalg.solve(A, grid.inner(tans, y)) @ tans
        v = GridFunction(grid, y * (radius / grid.norm(y)))
        form = kl.stability_form(cfg, v, grid)
        worst = max(worst, form / radius**2)
    elapsed = time.time() - t0
    ok = worst <= -0.5 * LAMBDA0 and elapsed < 10.0
    report(13, ok, f"max <L v + N(v), v>/|v|^2 = {worst:.3f} <= "
                   f"{-0.5 * LAMBDA0}, {elapsed:.1f}s")

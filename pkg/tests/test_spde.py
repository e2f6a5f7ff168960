"""Semi-implicit integration of both equations on the grid."""
import numpy as np
import pytest

from kinklab import (
    Grid,
    GridFunction,
    InvalidArgumentError,
    KinkConfig,
    NumericalFailureError,
    SpdeState,
    ac_step,
    assemble_laplacian,
    build_profile,
    build_noise,
    fermi_split,
    lyapunov_energy,
    mac_step,
    make_step_solver,
    noise_stream,
    operator_parts,
    profile_mass,
    sample_increment,
)
from kinklab.noise import NoiseIncrement, modal_to_grid
from kinklab.spectral import sym_eigh


class TestLaplacian:
    def test_constant_in_kernel(self, grid02):
        L = assemble_laplacian(grid02, 0.02)
        assert np.max(np.abs(L @ np.ones(grid02.n))) == 0.0

    def test_cosine_eigenfunction_second_order(self):
        # applied to cos(pi x) at eps = 1: error O(dx^2), quartered by halving dx
        errs = []
        for n in (201, 401):
            grid = Grid.regular(n)
            L = assemble_laplacian(grid, 1.0)
            f = np.cos(np.pi * grid.x)
            errs.append(np.max(np.abs(L @ f + np.pi**2 * f)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_nonpositive_spectrum(self):
        grid = Grid.regular(101)
        L = assemble_laplacian(grid, 0.5).toarray()
        vals, _ = sym_eigh(L, grid)
        assert vals[0] < 1e-10
        assert abs(vals[0]) < 1e-10  # constant mode at zero

    def test_weighted_symmetry(self):
        grid = Grid.regular(64)
        L = assemble_laplacian(grid, 0.3).toarray()
        WL = grid.weights[:, None] * L
        assert np.max(np.abs(WL - WL.T)) == 0.0

    def test_degenerate_grid(self):
        with pytest.raises(InvalidArgumentError):
            assemble_laplacian(Grid.regular(2), 0.1)


def zero_inc(model, dt, grid):
    modal = np.zeros(model.K + 1)
    return NoiseIncrement(dt=dt, modal=modal,
                          grid=GridFunction(grid, modal_to_grid(model, grid, modal)))


class TestAcStep:
    def test_stable_phase_fixed(self, grid02):
        state = SpdeState(t=0.0, u=GridFunction.constant(grid02, 1.0), eps=0.02)
        out = ac_step(state, 1e-3, None)
        # f(1) = 0 and D2(const) = 0 exactly; only solver round-off remains
        assert np.max(np.abs(out.u.values - 1.0)) < 1e-14

    def test_unstable_zero_preserved(self, grid02):
        state = SpdeState(t=0.0, u=GridFunction.constant(grid02, 0.0), eps=0.02)
        out = ac_step(state, 1e-3, None)
        assert np.max(np.abs(out.u.values)) == 0.0

    def test_metastable_persistence(self):
        # 1e4 noise-free steps: extracted positions essentially frozen
        grid = Grid.for_eps(0.02, 5)
        cfg = KinkConfig([0.3, 0.7], eps=0.02)
        state = SpdeState(t=0.0, u=build_profile(cfg, grid), eps=0.02)
        solver = make_step_solver(grid, 0.02, 1e-3)
        for _ in range(10_000):
            state = ac_step(state, 1e-3, None, solver)
        fs = fermi_split(state.u, cfg, grid)
        assert np.max(np.abs(fs.h.h - cfg.h)) < 1e-4

    def test_dt_cap(self, grid02):
        state = SpdeState(t=0.0, u=GridFunction.constant(grid02, 1.0), eps=0.02)
        with pytest.raises(InvalidArgumentError):
            ac_step(state, 0.06, None)

    def test_nan_input_flagged(self, grid02):
        vals = np.ones(grid02.n)
        vals[3] = np.nan
        state = SpdeState(t=0.0, u=GridFunction(grid02, vals), eps=0.02)
        with pytest.raises(NumericalFailureError):
            ac_step(state, 1e-3, None)

    def test_increment_dt_mismatch(self, grid02):
        model = build_noise(K=4, sigma0=0.01)
        inc = sample_increment(model, 1e-3, noise_stream(0), grid02)
        state = SpdeState(t=0.0, u=GridFunction.constant(grid02, 1.0), eps=0.02)
        with pytest.raises(InvalidArgumentError):
            ac_step(state, 2e-3, inc)

    def test_energy_decay(self):
        grid = Grid.for_eps(0.02, 5)
        cfg = KinkConfig([0.3, 0.7], eps=0.02)
        state = SpdeState(t=0.0, u=build_profile(cfg, grid), eps=0.02)
        solver = make_step_solver(grid, 0.02, 1e-3)
        e_prev = lyapunov_energy(state.u, 0.02)
        for _ in range(300):
            state = ac_step(state, 1e-3, None, solver)
            e = lyapunov_energy(state.u, 0.02)
            assert e <= e_prev + 1e-10 * 1e-3
            e_prev = e

    def test_neumann_defect(self):
        grid = Grid.for_eps(0.02, 5)
        cfg = KinkConfig([0.3, 0.7], eps=0.02)
        state = SpdeState(t=0.0, u=build_profile(cfg, grid), eps=0.02)
        solver = make_step_solver(grid, 0.02, 1e-3)
        for _ in range(500):
            state = ac_step(state, 1e-3, None, solver)
        u = state.u.values
        assert abs(u[1] - u[0]) / grid.dx < 1e-6
        assert abs(u[-1] - u[-2]) / grid.dx < 1e-6

    def test_strong_order_additive(self):
        # against a fine-dt reference on the same path, halving dt halves the
        # pathwise error (strong order 1 for additive noise)
        from kinklab import BrownianPath

        grid = Grid.for_eps(0.02, 5)
        model = build_noise(K=16, eta=1e-3)
        cfg = KinkConfig([0.3, 0.7], eps=0.02)
        u0 = build_profile(cfg, grid)
        fine = BrownianPath.sample(model, 1.25e-5, 8000, noise_stream(21))  # T=0.1

        def trajectory(path):
            state = SpdeState(t=0.0, u=u0.copy(), eps=0.02)
            solver = make_step_solver(grid, 0.02, path.dt)
            for i in range(path.n_steps):
                state = ac_step(state, path.dt, path.increment(i, grid), solver)
            return state.u.values

        ref = trajectory(fine)
        errs = [np.max(np.abs(trajectory(fine.coarsen(f)) - ref))
                for f in (40, 20, 10, 5)]
        # geometric-mean halving ratio over three dyadic levels
        ratio = (errs[0] / errs[-1]) ** (1.0 / 3.0)
        assert ratio == pytest.approx(2.0, rel=0.3)


class TestMacStep:
    def test_mass_exact(self, grid02):
        grid = Grid.for_eps(0.05, 5)
        cfg = KinkConfig([0.3, 0.7], eps=0.05)
        mu = profile_mass(cfg, grid)
        state = SpdeState(t=0.0, u=build_profile(cfg, grid), eps=0.05,
                          mass_conserving=True, mu=mu)
        model = build_noise(K=8, sigma0=0.01)
        rng = noise_stream(5)
        solver = make_step_solver(grid, 0.05, 1e-3)
        for _ in range(200):
            inc = sample_increment(model, 1e-3, rng, grid)
            state = mac_step(state, 1e-3, inc, solver)
            assert abs(state.u.mean() - mu) < 1e-12

    def test_constant_fixed_point(self, grid02):
        state = SpdeState(t=0.0, u=GridFunction.constant(grid02, -0.2), eps=0.02,
                          mass_conserving=True, mu=-0.2)
        out = mac_step(state, 1e-3, None)
        assert np.max(np.abs(out.u.values + 0.2)) < 1e-15

    def test_mirror_equivariance(self):
        # x -> 1-x symmetry: mirrored noise path gives the mirrored trajectory
        grid = Grid.for_eps(0.05, 5)
        cfg = KinkConfig([0.3, 0.7], eps=0.05)
        mu = profile_mass(cfg, grid)
        model = build_noise(K=8, sigma0=0.02)
        rng = noise_stream(6)
        solver = make_step_solver(grid, 0.05, 1e-3)
        a = SpdeState(t=0.0, u=build_profile(cfg, grid), eps=0.05,
                      mass_conserving=True, mu=mu)
        b = SpdeState(t=0.0, u=GridFunction(grid, a.u.values[::-1].copy()),
                      eps=0.05, mass_conserving=True, mu=mu)
        signs = (-1.0) ** np.arange(model.K + 1)
        for _ in range(100):
            inc = sample_increment(model, 1e-3, rng, grid)
            mirrored = NoiseIncrement(
                dt=inc.dt, modal=signs * inc.modal,
                grid=GridFunction(grid, inc.grid.values[::-1].copy()))
            a = mac_step(a, 1e-3, inc, solver)
            b = mac_step(b, 1e-3, mirrored, solver)
        assert np.max(np.abs(b.u.values - a.u.values[::-1])) < 1e-12

    def test_rejects_non_mean_zero(self, grid02):
        from kinklab.noise import NoiseModel
        model = NoiseModel(alphas=np.array([0.1, 0.1, 0.1]), mean_zero=False)
        inc = sample_increment(model, 1e-3, noise_stream(1), grid02)
        state = SpdeState(t=0.0, u=GridFunction.constant(grid02, 0.0), eps=0.02,
                          mass_conserving=True, mu=0.0)
        with pytest.raises(InvalidArgumentError):
            mac_step(state, 1e-3, inc)


class TestOperatorParts:
    def test_zero_v_gives_zero_parts(self, cfg3, grid02):
        u = build_profile(cfg3, grid02)
        parts = operator_parts(u, cfg3, grid02)
        assert np.max(np.abs(parts.Lh_v.values)) == 0.0
        assert np.max(np.abs(parts.Nh_v.values)) == 0.0

    def test_sum_identity(self, cfg3, grid02, rng):
        u = GridFunction(grid02, build_profile(cfg3, grid02).values
                         + 0.1 * rng.standard_normal(grid02.n))
        parts = operator_parts(u, cfg3, grid02)
        L = assemble_laplacian(grid02, 0.02)
        direct = L @ u.values - (u.values**3 - u.values)
        assert np.max(np.abs(parts.total().values - direct)) < 1e-10

    def test_nonlinear_part_quadratic(self, cfg3, grid02, rng):
        w = rng.standard_normal(grid02.n)
        w /= np.max(np.abs(w))
        uh = build_profile(cfg3, grid02)
        norms = []
        for delta in (1e-3, 5e-4):
            u = GridFunction(grid02, uh.values + delta * w)
            norms.append(operator_parts(u, cfg3, grid02).Nh_v.norm())
        assert norms[0] / norms[1] == pytest.approx(4.0, rel=0.05)

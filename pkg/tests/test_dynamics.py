"""Time integration, perturbations, conservation diagnostics."""

import math

import numpy as np
import pytest

from ptplaq import dynamics, stability, stationary, symmetry
from ptplaq.model import PlaquetteConfig, PlaquetteKind

E_REF = 2.0


def _state(cfg, e, label):
    return [s for s in stationary.analytic_branches(cfg, e) if s.label == label][0]


@pytest.fixture(scope="module")
def cfg19():
    return PlaquetteConfig(PlaquetteKind.A, 1.0, 1.9)


class TestIntegrate:
    def test_power_conserved_hermitian_limit(self):
        cfg = PlaquetteConfig(PlaquetteKind.A, 1.0, 0.0)
        u0 = np.array([0.6 + 0.1j, -0.4 + 0.3j, 0.2 - 0.5j, 0.1 + 0.2j])
        traj = dynamics.integrate(cfg, u0, t_end=100.0, dt=1e-3)
        total = traj.total_power
        assert np.abs(total - total[0]).max() < 1e-10

    def test_stationary_state_is_fixed(self, cfg19):
        s = _state(cfg19, E_REF, "case1aa_plus")
        traj = dynamics.integrate(cfg19, s.u, t_end=50.0, dt=1e-3)
        drift = np.abs(traj.per_site_power - traj.per_site_power[0]).max()
        assert drift < 1e-8
        assert not traj.terminated_early

    def test_amplitude_cap_flags_early_termination(self, cfg19, monkeypatch):
        # the real dynamics saturates below 1e6; shrink the cap to drive the
        # overflow path
        monkeypatch.setattr(dynamics, "AMP_CAP", 10.0)
        s = _state(cfg19, E_REF, "case2")
        u0 = dynamics.perturb(s.u, dynamics.PerturbationSpec(1e-3, "uniform"))
        traj = dynamics.integrate(cfg19, u0, t_end=100.0, dt=1e-3)
        assert traj.terminated_early
        assert traj.termination_reason is not None
        assert np.abs(traj.states[-1]).max() > 10.0
        assert traj.times[-1] < 100.0

    def test_gain_site_grows_loss_site_dies(self, cfg19):
        s = _state(cfg19, E_REF, "case2")
        u0 = dynamics.perturb(s.u, dynamics.PerturbationSpec(1e-3, "uniform"))
        traj = dynamics.integrate(cfg19, u0, t_end=100.0, dt=1e-3)
        power = traj.per_site_power
        assert power[:, 1].max() > 1e2 * power[0, 1]     # site B (gain)
        assert power[:, 3].min() < 1e-3 * power[0, 3]    # site D (loss)

    def test_nan_raises_numerical_error(self):
        cfg = PlaquetteConfig(PlaquetteKind.A, 1.0, 0.0)
        huge = np.full(4, 1e200, dtype=complex)
        with pytest.raises(dynamics.NumericalError) as exc:
            dynamics.integrate(cfg, huge, t_end=1.0, dt=0.5)
        assert exc.value.last_valid_time is not None

    def test_gauge_equivariance(self):
        # a bounded orbit: amplification would scale the rounding noise past
        # the absolute tolerance
        cfg = PlaquetteConfig(PlaquetteKind.A, 1.0, 0.5)
        rng = np.random.default_rng(6)
        base = _state(cfg, E_REF, "case1aa_plus").u
        u0 = base + 1e-2 * (rng.normal(size=4) + 1j * rng.normal(size=4))
        theta = 0.83
        t1 = dynamics.integrate(cfg, np.exp(1j * theta) * u0, t_end=10.0, dt=1e-3)
        t2 = dynamics.integrate(cfg, u0, t_end=10.0, dt=1e-3)
        assert np.abs(t1.states - np.exp(1j * theta) * t2.states).max() < 1e-10

    def test_rk4_observed_order(self):
        cfg = PlaquetteConfig(PlaquetteKind.A, 1.0, 0.0)
        u0 = np.array([0.6 + 0.1j, -0.4 + 0.3j, 0.2 - 0.5j, 0.1 + 0.2j])
        t_end = 2.0
        ref = dynamics.integrate(cfg, u0, t_end, dt=2.5e-4, stride=8000).states[-1]
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            got = dynamics.integrate(cfg, u0, t_end, dt=dt,
                                     stride=int(round(t_end / dt))).states[-1]
            errs.append(np.abs(got - ref).max())
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert all(3.7 <= p <= 4.3 for p in orders)

    def test_bad_arguments(self):
        cfg = PlaquetteConfig(PlaquetteKind.A, 1.0, 0.0)
        with pytest.raises(ValueError):
            dynamics.integrate(cfg, np.ones(4), t_end=0.0)
        with pytest.raises(ValueError):
            dynamics.integrate(cfg, np.ones(5), t_end=1.0)


class TestPerturb:
    def test_zero_delta_identity(self):
        u = np.array([1.0, 2.0, 3.0, 4.0], dtype=complex)
        spec = dynamics.PerturbationSpec(0.0, "uniform")
        assert np.array_equal(dynamics.perturb(u, spec), u)

    def test_uniform_normalization(self):
        u = np.ones(4, dtype=complex)
        out = dynamics.perturb(u, dynamics.PerturbationSpec(1e-3, "uniform"))
        assert np.allclose(out, 1.0 + 5e-4, atol=1e-12)
        assert abs(np.linalg.norm(out - u) - 1e-3) < 1e-12

    def test_random_reproducible(self):
        u = np.ones(4, dtype=complex)
        a = dynamics.perturb(u, dynamics.PerturbationSpec(1e-3, "random", seed=9))
        b = dynamics.perturb(u, dynamics.PerturbationSpec(1e-3, "random", seed=9))
        c = dynamics.perturb(u, dynamics.PerturbationSpec(1e-3, "random", seed=10))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_eigenmode_growth_rate_matches_spectrum(self, cfg19):
        s = _state(cfg19, E_REF, "case2")
        b = stability.linearization_matrix(cfg19, E_REF, s.u)
        lam_max = stability.stability_spectrum(b).max_growth_rate
        u0 = dynamics.perturb(s.u, dynamics.PerturbationSpec(1e-5, "eigenmode", index=0),
                              cfg=cfg19, e=E_REF)
        traj = dynamics.integrate(cfg19, u0, t_end=30.0, dt=1e-3)
        rate = dynamics.fit_growth_rate(traj, s.u, E_REF)
        assert abs(rate - lam_max) < 0.05 * lam_max

    def test_eigenmode_index_out_of_range(self, cfg19):
        s = _state(cfg19, E_REF, "case2")
        with pytest.raises(IndexError):
            dynamics.perturb(s.u, dynamics.PerturbationSpec(1e-3, "eigenmode", index=99),
                             cfg=cfg19, e=E_REF)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            dynamics.PerturbationSpec(1e-3, "sideways")


class TestDiagnostics:
    def test_pt_inner_product_conserved_for_stationary(self, cfg19):
        s = _state(cfg19, E_REF, "case1aa_plus")
        parity = symmetry.parity_candidates(cfg19)[0]
        traj = dynamics.integrate(cfg19, s.u, t_end=20.0, dt=1e-3)
        traj = dynamics.diagnostics(traj, cfg19, parity)
        ptp = traj.diagnostics["pt_inner_product"]
        assert np.abs(ptp - ptp[0]).max() < 1e-8

    def test_conservative_limit(self):
        cfg = PlaquetteConfig(PlaquetteKind.A, 1.0, 0.0)
        parity = symmetry.parity_candidates(cfg)[0]
        u0 = np.array([0.6, 0.4j, -0.2, 0.3], dtype=complex)
        traj = dynamics.diagnostics(
            dynamics.integrate(cfg, u0, t_end=10.0, dt=1e-3), cfg, parity)
        res = traj.diagnostics["power_balance_residual"]
        assert np.nanmax(res) < 1e-8
        total = traj.diagnostics["total_power"]
        assert np.abs(total - total[0]).max() < 1e-11

    def test_balance_residuals_second_order_in_dt(self):
        # gamma != 0 so both balance laws have nontrivial rates
        cfg = PlaquetteConfig(PlaquetteKind.A, 1.0, 0.5)
        parity = symmetry.parity_candidates(cfg)[0]
        u0 = np.array([0.6 + 0.1j, -0.4 + 0.3j, 0.2 - 0.5j, 0.1 + 0.2j])
        peaks = {}
        for dt in (1e-2, 5e-3, 2.5e-3):
            traj = dynamics.integrate(cfg, u0, t_end=5.0, dt=dt, stride=10)
            traj = dynamics.diagnostics(traj, cfg, parity)
            peaks[dt] = (np.nanmax(traj.diagnostics["power_balance_residual"]),
                         np.nanmax(traj.diagnostics["pt_balance_residual"]))
        for idx in (0, 1):
            r1 = peaks[1e-2][idx] / peaks[5e-3][idx]
            r2 = peaks[5e-3][idx] / peaks[2.5e-3][idx]
            assert 3.2 <= r1 <= 4.8 and 3.2 <= r2 <= 4.8

    def test_csv_requires_diagnostics(self, tmp_path, cfg19):
        s = _state(cfg19, E_REF, "case1aa_plus")
        traj = dynamics.integrate(cfg19, s.u, t_end=1.0, dt=1e-3)
        with pytest.raises(ValueError):
            dynamics.write_trajectory_csv(tmp_path / "t.csv", traj)
        parity = symmetry.parity_candidates(cfg19)[0]
        traj = dynamics.diagnostics(traj, cfg19, parity)
        dynamics.write_trajectory_csv(tmp_path / "t.csv", traj)
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0].split(",")[:6] == [
            "t", "power_A", "power_B", "power_C", "power_D", "total_power"]
        assert len(lines) == 1 + len(traj.times)

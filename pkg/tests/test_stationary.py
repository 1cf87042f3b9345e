"""Closed-form branches, root solvers, Newton refinement, continuation."""

import math

import numpy as np
import pytest

from ptplaq import numerics, stationary
from ptplaq.model import PlaquetteConfig, PlaquetteKind, residual_norm

E_REF = 2.0
G_REF = 15.0


def _cfg(kind, g, k=1.0):
    return PlaquetteConfig(kind, k, g)


def _branch(cfg, e, label):
    states = [s for s in stationary.analytic_branches(cfg, e) if s.label == label]
    assert states, f"{label} missing at gamma={cfg.gamma}"
    return states[0]


class TestAnalyticBranches:
    def test_case1aa_at_gamma_zero(self):
        cfg = _cfg(PlaquetteKind.A, 0.0)
        plus = _branch(cfg, E_REF, "case1aa_plus")
        assert np.allclose(np.abs(plus.u), 2.0, atol=1e-14)
        minus = _branch(cfg, E_REF, "case1aa_minus")
        assert np.abs(minus.u).max() < 1e-14  # degenerate zero state

    def test_case1aa_existence_window(self):
        have = {s.label for s in stationary.analytic_branches(_cfg(PlaquetteKind.A, 1.9), E_REF)}
        assert {"case1aa_plus", "case1aa_minus"} <= have
        gone = {s.label for s in stationary.analytic_branches(_cfg(PlaquetteKind.A, 2.1), E_REF)}
        assert "case1aa_plus" not in gone and "case1aa_minus" not in gone
        assert "case2" not in gone
        assert "case1ab" in gone  # persists past the linear critical point

    def test_kind_c_amplitudes(self):
        cfg = _cfg(PlaquetteKind.C, 0.5)
        root = math.sqrt(0.75)
        want = {
            "c_inphase_plus": E_REF - 1 + root,
            "c_inphase_minus": E_REF - 1 - root,
            "c_antiphase_plus": E_REF + 1 + root,
            "c_antiphase_minus": E_REF + 1 - root,
        }
        for label, amp2 in want.items():
            s = _branch(cfg, E_REF, label)
            assert abs(np.abs(s.u[0]) ** 2 - amp2) < 1e-12

    def test_case1b_isolated_points(self):
        at_zero = [s for s in stationary.analytic_branches(_cfg(PlaquetteKind.A, 0.0), E_REF)
                   if s.label == "case1b"]
        assert len(at_zero) == 1
        at_2k = [s for s in stationary.analytic_branches(_cfg(PlaquetteKind.A, 2.0), E_REF)
                 if s.label == "case1b"]
        assert len(at_2k) == 1
        between = [s for s in stationary.analytic_branches(_cfg(PlaquetteKind.A, 1.0), E_REF)
                   if s.label == "case1b"]
        assert not between

    def test_residual_bound_all_kinds(self):
        for kind, e, gmax in ((PlaquetteKind.A, E_REF, 1.9), (PlaquetteKind.B, E_REF, 1.9),
                              (PlaquetteKind.C, E_REF, 0.95), (PlaquetteKind.D, G_REF, 0.95)):
            for g in np.linspace(0.01, gmax, 9):
                cfg = _cfg(kind, float(g))
                for s in stationary.analytic_branches(cfg, e):
                    assert s.residual_norm <= 1e-10
                    # recheck independently of the emitting code path
                    assert residual_norm(cfg, e, s.u) <= 1e-10

    def test_kind_a_constraints_a30_a31(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            g = rng.uniform(0.05, 1.9)
            cfg = _cfg(PlaquetteKind.A, g)
            for s in stationary.analytic_branches(cfg, E_REF):
                a, b, c, d = s.u
                assert abs(abs(b) ** 2 - abs(d) ** 2) < 1e-10
                expr = ((abs(a) ** 2 - abs(c) ** 2) * (np.conj(a) * c - np.conj(c) * a)
                        + (abs(b) ** 2 - abs(d) ** 2) * (np.conj(b) * d - np.conj(d) * b))
                assert abs(expr) < 1e-10


class TestCase1abSolver:
    def test_large_gamma_limit(self):
        # E = A^2 + 4k^2 A^2/(A^4 + g^2) forces A^2 = E - 8/g^2 + O(g^-4)
        g = 100.0
        roots = stationary.solve_case_1ab(E_REF, 1.0, g)
        assert len(roots) == 1
        a = roots[0]
        assert abs(a - math.sqrt(E_REF)) < 4.0 * E_REF / (g * g)
        assert abs(a * a + 4 * a * a / (a ** 4 + g * g) - E_REF) < 1e-12

    def test_exists_past_critical_point(self):
        assert stationary.solve_case_1ab(E_REF, 1.0, 2.2)

    def test_against_bisection_oracle(self):
        # independent oracle: sign-change bracketing on a 10^4-point grid
        def oracle(e, k, g):
            def f(a):
                return a * a + 4 * k * k * a * a / (a ** 4 + g * g) - e
            grid = np.linspace(1e-9, math.sqrt(e), 10_000)
            vals = np.array([f(a) for a in grid])
            roots = []
            for i in np.where(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
                lo, hi = grid[i], grid[i + 1]
                for _ in range(80):
                    mid = 0.5 * (lo + hi)
                    if f(lo) * f(mid) <= 0:
                        hi = mid
                    else:
                        lo = mid
                roots.append(0.5 * (lo + hi))
            return roots

        for g in (0.3, 0.5, 1.1, 1.9):
            got = stationary.solve_case_1ab(E_REF, 1.0, g)
            want = oracle(E_REF, 1.0, g)
            assert len(got) == len(want)
            for a, b in zip(got, sorted(want)):
                assert abs(a - b) < 1e-7
            for a in got:
                f = a * a + 4 * a * a / (a ** 4 + g * g) - E_REF
                assert abs(f) < 1e-12

    def test_no_roots_at_gamma_zero_for_reference_e(self):
        # at E=2, k=1 the two-amplitude family only appears for gamma > 0
        assert stationary.solve_case_1ab(E_REF, 1.0, 0.0) == []


class TestCrossSolver:
    def test_reference_root_counts(self):
        assert len(stationary.solve_cross_amplitudes(G_REF, 1.0, 0.1)) == 5
        assert len(stationary.solve_cross_amplitudes(G_REF, 1.0, 0.5)) == 3

    def test_equation_residuals(self):
        for g in (0.1, 0.5, 0.95):
            for a, c in stationary.solve_cross_amplitudes(G_REF, 1.0, g):
                f1 = c * c * (G_REF - c * c) - 4 * a * a * (G_REF - a * a)
                f2 = c * c - (g * a) ** 2 - (G_REF * a - a ** 3) ** 2
                assert abs(f1) < 1e-10 * G_REF ** 2
                assert abs(f2) < 1e-10 * G_REF ** 2
                assert abs(g * a) <= c * (1 + 1e-12)

    def test_gamma_zero_against_grid_oracle(self):
        # independent confirmation: both defining functions change sign in a
        # small neighborhood of every root the solver reports
        g = 0.0
        top = 1.3 * math.sqrt(G_REF)
        ax = np.linspace(1e-3, top, 1500)
        aa, cc = np.meshgrid(ax, ax, indexing="ij")
        f1 = cc ** 2 * (G_REF - cc ** 2) - 4 * aa ** 2 * (G_REF - aa ** 2)
        f2 = cc ** 2 - (G_REF * aa - aa ** 3) ** 2
        got = stationary.solve_cross_amplitudes(G_REF, 1.0, g)
        assert len(got) == 4
        for a, c in got:
            i = int(np.argmin(np.abs(ax - a)))
            j = int(np.argmin(np.abs(ax - c)))
            sl = np.s_[max(i - 2, 0):i + 3, max(j - 2, 0):j + 3]
            assert f1[sl].min() <= 0.0 <= f1[sl].max()
            assert f2[sl].min() <= 0.0 <= f2[sl].max()


class TestNewtonRefine:
    def test_converges_from_perturbed_guess(self):
        cfg = _cfg(PlaquetteKind.A, 0.8)
        s = _branch(cfg, E_REF, "case1aa_plus")
        guess = s.u + 1e-3
        u = stationary.newton_refine(cfg, E_REF, guess, tol=1e-12, max_iter=10)
        assert residual_norm(cfg, E_REF, u) < 1e-12

    def test_zero_guess_rejected(self):
        with pytest.raises(ValueError):
            stationary.newton_refine(_cfg(PlaquetteKind.A, 0.5), E_REF, np.zeros(4))

    def test_past_critical_point(self):
        cfg = _cfg(PlaquetteKind.A, 2.05)
        s = _branch(cfg, E_REF, "case1ab")
        u = stationary.newton_refine(cfg, E_REF, s.u + 1e-4)
        assert residual_norm(cfg, E_REF, u) < 1e-11

    def test_gauge_invariance(self):
        cfg = _cfg(PlaquetteKind.A, 0.8)
        s = _branch(cfg, E_REF, "case1aa_plus")
        base = stationary.newton_refine(cfg, E_REF, s.u + 1e-4)
        for theta in (0.3, -1.2, 2.9):
            rot = stationary.newton_refine(cfg, E_REF, np.exp(1j * theta) * (s.u + 1e-4))
            assert rot[0].imag == 0.0
            assert rot[0].real >= 0.0
            assert np.abs(rot - base).max() < 1e-9

    def test_nonconvergence_carries_residual(self):
        cfg = _cfg(PlaquetteKind.A, 0.8)
        s = _branch(cfg, E_REF, "case1aa_plus")
        with pytest.raises(numerics.ConvergenceError) as exc:
            stationary.newton_refine(cfg, E_REF, s.u + 0.5, tol=1e-16, max_iter=2)
        assert exc.value.last_residual is not None


class TestContinuation:
    def test_requires_existing_branch(self):
        cfg = _cfg(PlaquetteKind.A, 0.0)
        with pytest.raises(ValueError):
            stationary.continue_branch(cfg, "case1aa_plus", E_REF, (2.05, 2.2), 0.01)

    def test_closed_form_consistency_along_branch(self):
        cfg = _cfg(PlaquetteKind.A, 0.0)
        curve = stationary.continue_branch(cfg, "case1aa_plus", E_REF, (0.1, 1.5), 0.05)
        for g, s in zip(curve.gammas, curve.states):
            amp = math.sqrt(E_REF + math.sqrt(4.0 - g * g))
            assert abs(np.abs(s.u[0]) - amp) < 1e-8

    def test_termination_bracketing(self):
        cfg = _cfg(PlaquetteKind.A, 0.0)
        curve = stationary.continue_branch(cfg, "case1aa_minus", E_REF, (0.1, 2.2), 0.05)
        t = curve.termination
        assert t is not None
        assert abs(t.gamma - 2.0) <= 0.05
        assert t.bracket[0] <= t.gamma <= t.bracket[1]

    def test_every_sample_satisfies_residual_bound(self):
        cfg = _cfg(PlaquetteKind.C, 0.0)
        curve = stationary.continue_branch(cfg, "c_antiphase_plus", E_REF, (0.05, 1.1), 0.05)
        for g, s in zip(curve.gammas, curve.states):
            assert residual_norm(cfg.with_gamma(g), E_REF, s.u) <= 1e-10

    def test_branch_csv_round_trip(self, tmp_path):
        cfg = _cfg(PlaquetteKind.B, 0.0)
        curve = stationary.continue_branch(cfg, "b_plus", E_REF, (0.2, 0.6), 0.1)
        path = tmp_path / "curve.csv"
        stationary.write_branch_csv(path, curve)
        header = path.read_text().splitlines()[0].split(",")
        assert header[:5] == ["gamma", "amp_A", "amp_B", "amp_C", "amp_D"]
        assert header[-3:] == ["n_real_pairs", "n_imag_pairs", "n_quartets"]
        assert len(path.read_text().splitlines()) == len(curve.gammas) + 1


def test_gauge_distance_phase_invariant():
    rng = np.random.default_rng(5)
    u = rng.normal(size=4) + 1j * rng.normal(size=4)
    assert stationary.gauge_distance(u, np.exp(0.7j) * u) < 1e-13
    assert stationary.gauge_distance(u, 1.1 * u) > 0.01


def test_madelung_round_trip():
    m = stationary.MadelungState((1.0, 2.0, 0.5, 1.5), (0.0, 1.2, -2.0, 3.0), E_REF)
    u = m.to_state_vector()
    again = stationary.MadelungState.from_state_vector(u, E_REF)
    assert np.allclose(again.amplitudes, m.amplitudes)
    assert np.allclose(again.phases, m.phases)

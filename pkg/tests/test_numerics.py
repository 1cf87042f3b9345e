"""Kernel-level linear algebra checks against independent oracles."""

import numpy as np
import pytest

from ptplaq import numerics
from ptplaq.model import PlaquetteConfig, PlaquetteKind, build_linear_hamiltonian

SQRT3 = np.sqrt(3.0)


def _random_complex(rng, n, m=None):
    m = n if m is None else m
    return rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))


class TestEig:
    def test_identity(self):
        w = numerics.eig_complex(np.eye(4))
        assert np.allclose(w, np.ones(4), atol=1e-14)

    def test_plaquette_a_spectrum(self):
        h = build_linear_hamiltonian(PlaquetteConfig(PlaquetteKind.A, 1.0, 1.0))
        w = numerics.eig_complex(h)
        expect = np.array([-SQRT3, 0.0, 0.0, SQRT3])
        assert numerics.match_spectra(w, expect) < 1e-12

    def test_plaquette_b_spectrum(self):
        h = build_linear_hamiltonian(PlaquetteConfig(PlaquetteKind.B, 1.0, 1.0))
        w = numerics.eig_complex(h)
        expect = np.array([1j, -1j, SQRT3, -SQRT3])
        assert numerics.match_spectra(w, expect) < 1e-12

    def test_against_lapack_oracle(self):
        rng = np.random.default_rng(101)
        for _ in range(200):
            n = int(rng.integers(2, 11))
            a = _random_complex(rng, n)
            w = numerics.eig_complex(a)
            w_ref = np.linalg.eigvals(a)
            assert numerics.match_spectra(w, w_ref) < 1e-10

    def test_trace_property(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            n = int(rng.integers(2, 11))
            a = _random_complex(rng, n)
            w = numerics.eig_complex(a)
            scale = numerics.matrix_norm(a)
            assert abs(w.sum() - np.trace(a)) <= 1e-9 * scale

    def test_similarity_invariance(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            a = _random_complex(rng, n)
            s = np.eye(n) + 0.1 * _random_complex(rng, n)
            b = np.linalg.solve(s, a @ s)
            assert numerics.match_spectra(numerics.eig_complex(a),
                                          numerics.eig_complex(b)) < 1e-8

    def test_conjugate_transpose(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(2, 9))
            a = _random_complex(rng, n)
            w = numerics.eig_complex(a)
            w_ct = numerics.eig_complex(a.conj().T)
            assert numerics.match_spectra(np.conj(w), w_ct) < 1e-10

    def test_sorted_lexicographically(self):
        rng = np.random.default_rng(3)
        a = _random_complex(rng, 8)
        w = numerics.eig_complex(a)
        key = [(z.real, z.imag) for z in w]
        assert key == sorted(key)

    def test_non_square_rejected(self):
        with pytest.raises(numerics.DimensionError):
            numerics.eig_complex(np.zeros((3, 4)))

    def test_oversize_rejected(self):
        with pytest.raises(numerics.DimensionError):
            numerics.eig_complex(np.zeros((17, 17)))

    def test_nonfinite_rejected(self):
        a = np.zeros((3, 3), dtype=complex)
        a[1, 2] = np.nan
        with pytest.raises(ValueError):
            numerics.eig_complex(a)

    def test_sweep_cap_maps_to_convergence_error(self, monkeypatch):
        def _stub(a, max_sweeps):
            raise RuntimeError("QR iteration exceeded 0 sweeps")
        monkeypatch.setattr(numerics.kernels, "eigvals", _stub)
        with pytest.raises(numerics.ConvergenceError):
            numerics.eig_complex(np.eye(3))


class TestSolve:
    def test_identity(self):
        rng = np.random.default_rng(0)
        b = _random_complex(rng, 5, 1)[:, 0]
        x = numerics.solve_linear(np.eye(5), b)
        assert np.allclose(x, b, atol=1e-14)

    def test_scalar_case(self):
        b = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)
        x = numerics.solve_linear(2.0 * np.eye(4), b)
        assert np.allclose(x, [0.5, 0, 0, 0], atol=1e-15)

    def test_shifted_hamiltonian_residual(self):
        h = build_linear_hamiltonian(PlaquetteConfig(PlaquetteKind.A, 1.0, 0.0))
        m = h + 3.0 * np.eye(4)
        b = np.array([1.0, 0, 0, 0], dtype=complex)
        x = numerics.solve_linear(m, b)
        res = np.linalg.norm(m @ x - b)
        assert res < 1e-10 * (numerics.matrix_norm(m) * np.linalg.norm(x) + 1.0)

    def test_random_residual_bound(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            n = int(rng.integers(2, 11))
            m = _random_complex(rng, n)
            b = _random_complex(rng, n, 1)[:, 0]
            x = numerics.solve_linear(m, b)
            bound = 1e-10 * (numerics.matrix_norm(m) * np.linalg.norm(x)
                             + np.linalg.norm(b))
            assert np.linalg.norm(m @ x - b) <= bound

    def test_singular_raises_with_indicator(self):
        m = np.ones((3, 3), dtype=complex)
        with pytest.raises(numerics.SingularMatrixError) as exc:
            numerics.solve_linear(m, np.ones(3, dtype=complex))
        assert exc.value.condition_indicator is not None


class TestRank:
    def test_zero_matrix(self):
        assert numerics.numerical_rank(np.zeros((4, 4))) == 0

    def test_plaquette_a_at_ep(self):
        h = build_linear_hamiltonian(PlaquetteConfig(PlaquetteKind.A, 1.0, 2.0))
        assert numerics.numerical_rank(h) == 2
        assert numerics.numerical_rank(h @ h) == 1
        assert numerics.numerical_rank(h @ h @ h) == 0

    def test_rank_of_known_factors(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            n = int(rng.integers(3, 11))
            r = int(rng.integers(1, n))
            m = _random_complex(rng, n, r) @ _random_complex(rng, r, n)
            rank = numerics.numerical_rank(m)
            assert rank == r
            assert rank + (n - rank) == n

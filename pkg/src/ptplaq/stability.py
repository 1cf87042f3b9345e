"""Linear stability of stationary plaquette states.

The stationary residual F (module ``model``) is differentiated in (u, conj u)
to build the 2N x 2N block matrix

    B = [[ dF/du,        dF/d(conj u)      ],
         [-conj(dF/d(conj u)), -conj(dF/du)]],

whose eigenvalues mu give growth exponents lambda = -i*mu. A state is
spectrally stable when every lambda is purely imaginary at tolerance.
Classification buckets the 2N exponents into zero modes, real pairs,
imaginary pairs and complex quartets; bifurcation detection scans a branch
curve for changes in those counts and refines each transition by bisection.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass

import numpy as np

from ptplaq import numerics
from ptplaq.model import (PlaquetteConfig, build_linear_hamiltonian, residual_norm,
                          stationary_residual)


def jacobian_blocks(cfg: PlaquetteConfig, e: float, u) -> tuple[np.ndarray, np.ndarray]:
    """Complex Wirtinger blocks (dF/du, dF/d(conj u)) of the stationary residual."""
    v = np.asarray(u, dtype=np.complex128)
    hl = build_linear_hamiltonian(cfg)
    p2 = v.real * v.real + v.imag * v.imag
    fu = -hl + np.diag(2.0 * p2 - e)
    fubar = np.diag(v * v)
    return fu, fubar


def linearization_matrix(cfg: PlaquetteConfig, e: float, u0,
                         residual_tol: float = 1e-8) -> np.ndarray:
    """The 2N x 2N perturbation matrix B evaluated at u0.

    Warns when u0 is not stationary to ``residual_tol``; the matrix is still
    returned (it is the Jacobian of F at u0 regardless).
    """
    res = residual_norm(cfg, e, u0)
    if res > residual_tol:
        warnings.warn(f"linearization point has residual {res:.3e} > {residual_tol:.1e}",
                      stacklevel=2)
    fu, fubar = jacobian_blocks(cfg, e, u0)
    n = fu.shape[0]
    b = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    b[:n, :n] = fu
    b[:n, n:] = fubar
    b[n:, :n] = -fubar.conj()
    b[n:, n:] = -fu.conj()
    return b


class EventKind(str, enum.Enum):
    STABILIZATION = "stabilization"
    DESTABILIZATION = "destabilization"
    QUARTET_FORMATION = "quartet_formation"
    QUARTET_BREAKUP = "quartet_breakup"
    BRANCH_COLLISION = "branch_collision"
    TERMINATION = "termination"


@dataclass(frozen=True)
class BifurcationEvent:
    gamma: float
    kind: EventKind
    description: str


# Gauge zero modes sit in Jordan chains of length up to 4, so the QR
# backward error splits them by as much as eps**(1/4) ~ 1e-4 of the spectral
# radius. The zero bucket therefore uses a dedicated floor, while real vs
# imaginary discrimination of the surviving modes keeps the fine tolerance.
ZERO_FLOOR = 5e-4


@dataclass(frozen=True)
class StabilitySpectrum:
    """Wick-rotated eigenvalues lambda = -i*mu with classification counts."""

    lambdas: np.ndarray
    n_real_pairs: int
    n_imag_pairs: int
    n_quartets: int
    n_zero: int
    max_growth_rate: float
    tol_abs: float   # the effective zero threshold

    @property
    def counts(self) -> tuple[int, int, int]:
        return (self.n_real_pairs, self.n_imag_pairs, self.n_quartets)

    @property
    def is_stable(self) -> bool:
        return self.max_growth_rate <= self.tol_abs

    def nonzero_lambdas(self) -> np.ndarray:
        lams = self.lambdas
        return lams[np.abs(lams) > self.tol_abs]


def classify_lambdas(lams: np.ndarray, tol_abs: float,
                     zero_abs: float) -> tuple[int, int, int, int]:
    """(n_real_pairs, n_imag_pairs, n_quartets, n_zero) at absolute tolerances."""
    zero = np.abs(lams) <= zero_abs
    re = (np.abs(lams.real) > tol_abs) & ~zero
    im = (np.abs(lams.imag) > tol_abs) & ~zero
    n_zero = int(zero.sum())
    n_real = int((re & ~im).sum())
    n_imag = int((~re & im & ~zero).sum())
    n_cplx = int((re & im).sum())
    return n_real // 2, n_imag // 2, n_cplx // 4, n_zero


def stability_spectrum(b, tol: float = 1e-8,
                       zero_floor: float = ZERO_FLOOR) -> StabilitySpectrum:
    """Classify the spectrum of a perturbation matrix B.

    Both tolerances are relative to the spectral radius: ``tol`` separates
    real from imaginary parts of the nonzero modes, ``zero_floor`` bounds the
    ball counted as (gauge) zero modes, which are excluded from the pair and
    quartet counts.
    """
    a = np.asarray(b, dtype=np.complex128)
    if a.shape[0] != a.shape[1] or a.shape[0] % 2:
        raise numerics.DimensionError(f"B must be square of even dimension, got {a.shape}")
    mu = numerics.eig_complex(a)
    lams = numerics.sort_spectrum(-1j * mu)
    scale = float(np.abs(lams).max(initial=0.0))
    tol_abs = tol * scale
    zero_abs = max(tol, zero_floor) * scale
    n_real, n_imag, n_quart, n_zero = classify_lambdas(lams, tol_abs, zero_abs)
    max_growth = float(lams.real.max(initial=0.0))
    return StabilitySpectrum(lams, n_real, n_imag, n_quart, n_zero, max_growth, zero_abs)


def _counts_at(spec: StabilitySpectrum, tol: float) -> tuple[int, int, int]:
    scale = float(np.abs(spec.lambdas).max(initial=0.0))
    r, i, q, _ = classify_lambdas(spec.lambdas, tol * scale,
                                  max(tol, ZERO_FLOOR) * scale)
    return (r, i, q)


def _event_kind(before: tuple[int, int, int], after: tuple[int, int, int]) -> EventKind:
    dr = after[0] - before[0]
    dq = after[2] - before[2]
    if dq > 0:
        return EventKind.QUARTET_FORMATION
    if dq < 0:
        # a quartet collapsing onto the real axis is a destabilization in
        # spirit, but the quartet change is the defining feature
        return EventKind.QUARTET_BREAKUP
    if dr > 0:
        return EventKind.DESTABILIZATION
    if dr < 0:
        return EventKind.STABILIZATION
    return EventKind.DESTABILIZATION


def detect_bifurcations(curve, resolution: float = 1e-3,
                        refine_tol: float = 1e-6) -> list[BifurcationEvent]:
    """Locate classification-count changes along a branch curve.

    Each change between consecutive samples is refined by bisection in gamma
    (re-solving the state with the gauge-fixed Newton corrector) until the
    bracket is narrower than ``resolution``. Classification during
    refinement uses the coarser ``refine_tol`` to avoid chattering.
    """
    from ptplaq import stationary  # deferred: stationary imports this module

    if len(curve.gammas) < 3:
        return []
    cfg0 = PlaquetteConfig(curve.kind, curve.k, 0.0)
    events: list[BifurcationEvent] = []
    for i in range(len(curve.gammas) - 1):
        c_lo = _counts_at(curve.spectra[i], refine_tol)
        c_hi = _counts_at(curve.spectra[i + 1], refine_tol)
        if c_lo == c_hi:
            continue
        g_lo, g_hi = curve.gammas[i], curve.gammas[i + 1]
        u_lo = curve.states[i].u
        while g_hi - g_lo > resolution:
            g_mid = 0.5 * (g_lo + g_hi)
            try:
                u_mid = stationary.newton_refine(cfg0.with_gamma(g_mid), curve.e, u_lo)
            except (numerics.ConvergenceError, numerics.SingularMatrixError):
                break
            spec_mid = stability_spectrum(
                linearization_matrix(cfg0.with_gamma(g_mid), curve.e, u_mid))
            c_mid = _counts_at(spec_mid, refine_tol)
            if c_mid == c_lo:
                g_lo, u_lo = g_mid, u_mid
            else:
                g_hi = g_mid
        gamma_star = 0.5 * (g_lo + g_hi)
        kind = _event_kind(c_lo, c_hi)
        events.append(BifurcationEvent(
            gamma_star, kind,
            f"(real,imag,quartet) pairs {c_lo} -> {c_hi} near gamma={gamma_star:.4f}"))
    return events


def detect_branch_collision(curve_a, curve_b, gamma_tol: float = 0.02,
                            state_tol: float = 0.05) -> BifurcationEvent | None:
    """Collision record when two branches terminate together at matching states."""
    ta, tb = curve_a.termination, curve_b.termination
    if ta is None or tb is None:
        return None
    if abs(ta.gamma - tb.gamma) > gamma_tol:
        return None
    ua = curve_a.states[-1].u
    ub = curve_b.states[-1].u
    scale = max(float(np.abs(ua).max()), float(np.abs(ub).max()), 1e-12)
    if float(np.abs(ua - ub).max()) > state_tol * scale:
        return None
    g = 0.5 * (ta.gamma + tb.gamma)
    return BifurcationEvent(
        g, EventKind.BRANCH_COLLISION,
        f"branches {curve_a.label} and {curve_b.label} collide near gamma={g:.4f}")


def write_spectrum_csv(path, spec: StabilitySpectrum) -> None:
    """Spectral-plane CSV: one (re_lambda, im_lambda) row per eigenvalue."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re_lambda", "im_lambda"])
        for lam in spec.lambdas:
            w.writerow([f"{lam.real:.17g}", f"{lam.imag:.17g}"])

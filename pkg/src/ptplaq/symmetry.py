"""Parity operators, PT-phase classification and Jordan structure.

Parity candidates for the four-site kinds come from the tensor-product
ansatz {I x sx, sx x I, sx x sx}; the five-site cross is searched
exhaustively over involutive permutations. A candidate qualifies when it
commutes with the coupling part H_L0 and anticommutes with the gain-loss
part H_L1, which for permutations reduces to preserving the bond graph
and negating the sign vector.
"""

from __future__ import annotations

import cmath
import enum
import itertools
from dataclasses import dataclass

import numpy as np

from ptplaq import numerics
from ptplaq.model import PlaquetteConfig, PlaquetteKind, adjacency, build_linear_hamiltonian

EP_WINDOW = 1e-8  # width of the |gamma^2 - threshold^2| band treated as "at the EP"


class ConsistencyError(RuntimeError):
    """Numeric and analytic PT-phase classifications disagree."""


@dataclass(frozen=True)
class ParityOperator:
    label: str
    permutation: tuple[int, ...]

    @property
    def matrix(self) -> np.ndarray:
        n = len(self.permutation)
        p = np.zeros((n, n))
        for i, j in enumerate(self.permutation):
            p[i, j] = 1.0
        return p

    def apply(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u)[list(self.permutation)]


# tensor-product candidates on sites (A,B,C,D) = (1,1),(1,2),(2,1),(2,2)
_TENSOR_CANDIDATES = (
    ("P_0x", (1, 0, 3, 2)),   # I x sx : A<->B, C<->D
    ("P_x0", (2, 3, 0, 1)),   # sx x I : A<->C, B<->D
    ("P_xx", (3, 2, 1, 0)),   # sx x sx: A<->D, B<->C
)


def _qualifies(kind: PlaquetteKind, perm: tuple[int, ...]) -> bool:
    adj = adjacency(kind)
    signs = {
        PlaquetteKind.A: (0, 1, 0, -1),
        PlaquetteKind.B: (1, -1, 1, -1),
        PlaquetteKind.C: (1, 1, -1, -1),
        PlaquetteKind.D: (-1, 1, 0, -1, 1),
    }[kind]
    n = len(perm)
    for i in range(n):
        if signs[perm[i]] != -signs[i]:
            return False
        for j in range(n):
            if adj[perm[i], perm[j]] != adj[i, j]:
                return False
    return True


def parity_candidates(cfg: PlaquetteConfig) -> list[ParityOperator]:
    """All parity operators of the structural ansatz that fit the plaquette."""
    if cfg.kind is PlaquetteKind.D:
        found = []
        for perm in itertools.permutations(range(5)):
            if perm == tuple(range(5)):
                continue
            if any(perm[perm[i]] != i for i in range(5)):
                continue
            if _qualifies(cfg.kind, perm):
                found.append(perm)
        labeled = []
        for perm in sorted(found):
            if perm == (1, 0, 2, 4, 3):
                labeled.append(ParityOperator("P_d0", perm))
            elif perm == (4, 3, 2, 1, 0):
                labeled.append(ParityOperator("P_dx", perm))
            else:
                labeled.append(ParityOperator(f"P_perm{''.join(map(str, perm))}", perm))
        return labeled
    return [ParityOperator(label, perm) for label, perm in _TENSOR_CANDIDATES
            if _qualifies(cfg.kind, perm)]


def check_pseudo_hermiticity(h, parity: ParityOperator) -> bool:
    """True iff ||H^dagger - P H P|| <= 1e-12 * ||H||."""
    a = np.asarray(h, dtype=np.complex128)
    p = parity.matrix
    if a.shape[0] != p.shape[0] or a.shape[0] != a.shape[1]:
        raise numerics.DimensionError("parity operator and matrix sizes differ")
    defect = numerics.matrix_norm(a.conj().T - p @ a @ p)
    return defect <= 1e-12 * max(numerics.matrix_norm(a), 1e-300)


def linear_spectrum_analytic(cfg: PlaquetteConfig) -> np.ndarray:
    """Closed-form eigenvalues of H_L, principal complex square roots."""
    k, g = cfg.k, cfg.gamma
    s = cmath.sqrt(4.0 * k * k - g * g)
    if cfg.kind is PlaquetteKind.A:
        w = [0.0, 0.0, s, -s]
    elif cfg.kind is PlaquetteKind.B:
        w = [1j * g, -1j * g, s, -s]
    elif cfg.kind is PlaquetteKind.C:
        inner = cmath.sqrt(k * k - g * g)
        rad_p = 2.0 * k * k - g * g + 2.0 * k * inner
        rad_m = 2.0 * k * k - g * g - 2.0 * k * inner
        ep = cmath.sqrt(rad_p)
        em = cmath.sqrt(rad_m)
        w = [ep, -ep, em, -em]
    else:
        w = [1j * g, -1j * g, s, -s, 0.0]
    return numerics.sort_spectrum(np.asarray(w, dtype=np.complex128))


class PtRegime(str, enum.Enum):
    EXACT = "exact"
    BROKEN = "broken"
    EXCEPTIONAL_POINT = "exceptional_point"


@dataclass(frozen=True)
class PtPhaseReport:
    gamma: float
    regime: PtRegime
    ep_order: int | None
    real_eigenvalue_count: int


def _ep_threshold_sq(cfg: PlaquetteConfig) -> float:
    """gamma^2 at which the E_{3,4}-type pair branches (4k^2, or k^2 for kind C)."""
    if cfg.kind is PlaquetteKind.C:
        return cfg.k * cfg.k
    return 4.0 * cfg.k * cfg.k


def classify_pt_phase(cfg: PlaquetteConfig, tol: float = 1e-9) -> PtPhaseReport:
    """PT phase of the linear plaquette from the numeric spectrum.

    The numeric realness count is cross-checked against the closed-form
    phase boundaries (exact for gamma^2 <= 4k^2 on kind A, gamma = 0 on
    kinds B and D, gamma^2 <= k^2 on kind C); disagreement raises
    ConsistencyError. Within the EP window around the branching threshold
    the regime is exceptional_point and the Jordan block order is attached.
    """
    h = build_linear_hamiltonian(cfg)
    w = numerics.eig_complex(h)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    tol_abs = tol * scale
    real_count = int((np.abs(w.imag) <= tol_abs).sum())
    n = cfg.n_sites

    g2 = cfg.gamma * cfg.gamma
    thr2 = _ep_threshold_sq(cfg)
    window = max(EP_WINDOW, tol)
    at_ep = abs(g2 - thr2) <= window

    if cfg.kind in (PlaquetteKind.B, PlaquetteKind.D):
        analytic_exact = abs(cfg.gamma) <= tol_abs
    else:
        analytic_exact = g2 <= thr2

    if at_ep:
        mu = abs(cfg.k) if cfg.kind is PlaquetteKind.C else 0.0
        blocks = jordan_structure(h, mu, tol=1e-6)
        order = max(blocks) if blocks else 1
        return PtPhaseReport(cfg.gamma, PtRegime.EXCEPTIONAL_POINT, order, real_count)

    numeric_exact = real_count == n
    if numeric_exact != analytic_exact and abs(g2 - thr2) > window:
        raise ConsistencyError(
            f"numeric phase ({'exact' if numeric_exact else 'broken'}) disagrees "
            f"with analytic threshold at gamma={cfg.gamma}, k={cfg.k}, kind={cfg.kind}")
    regime = PtRegime.EXACT if numeric_exact else PtRegime.BROKEN
    return PtPhaseReport(cfg.gamma, regime, None, real_count)


def jordan_structure(h, eigenvalue: complex, tol: float = 1e-10) -> list[int]:
    """Jordan block sizes of ``h`` at ``eigenvalue`` from the rank sequence.

    Computes r_m = rank((H - mu I)^m) with per-power renormalization and
    converts via the Weyr rule: the number of blocks of size >= m equals
    r_{m-1} - r_m. The sequence must be non-increasing; a violation at the
    given tolerance raises ToleranceError.
    """
    a = np.asarray(h, dtype=np.complex128)
    n = a.shape[0]
    m0 = a - eigenvalue * np.eye(n)
    norm = numerics.matrix_norm(m0)
    if norm == 0.0:
        return [1] * n
    m0 = m0 / norm
    ranks = [n]
    power = np.eye(n, dtype=np.complex128)
    for _ in range(n):
        power = power @ m0
        pnorm = numerics.matrix_norm(power)
        if pnorm > 0.0:
            power = power / pnorm
            ranks.append(numerics.numerical_rank(power, tol))
        else:
            ranks.append(0)
        if ranks[-1] > ranks[-2]:
            raise numerics.ToleranceError(
                f"rank sequence not monotone at tolerance {tol}: {ranks}")
        if ranks[-1] == ranks[-2]:
            break
    blocks = []
    n_ge = [ranks[m - 1] - ranks[m] for m in range(1, len(ranks))]
    n_ge.append(0)
    for m in range(1, len(n_ge)):
        exact = n_ge[m - 1] - n_ge[m]
        blocks.extend([m] * exact)
    return sorted(blocks, reverse=True)


def check_solution_pt_symmetry(u0, parity: ParityOperator,
                               tol: float = 1e-9) -> float | None:
    """Phase phi in (-pi, pi] with P*conj(u0) = exp(i*phi)*u0, or None.

    The phase is read off the first component of u0 above the noise floor
    and then verified on all components; a residual above tol*||u0|| means
    the state is not PT-symmetric under this parity.
    """
    u = np.asarray(u0, dtype=np.complex128)
    norm = float(np.sqrt((np.abs(u) ** 2).sum()))
    if norm == 0.0:
        raise ValueError("state must be nonzero")
    w = parity.apply(np.conj(u))
    idx = int(np.argmax(np.abs(u)))
    if abs(w[idx]) <= tol * norm:
        return None
    phi = float(np.angle(w[idx] / u[idx]))
    defect = float(np.sqrt((np.abs(w - np.exp(1j * phi) * u) ** 2).sum()))
    if defect > tol * norm:
        return None
    if phi <= -np.pi:
        phi += 2.0 * np.pi
    return phi

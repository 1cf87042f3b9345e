"""Closed-form stationary branches, Newton refinement and continuation.

Branch families (amplitude-phase form, gauge phi_a = 0 unless noted):

kind A:
  case1aa_plus / case1aa_minus : A=B=C=D = sqrt(E -+ sqrt(4k^2-g^2)),
      phi_c = 0, sin(phi_b) = -g/(2k), cos(phi_b) = (E - A^2)/(2k),
      phi_d = -phi_b. Exist while g^2 <= 4k^2 and the radicand stays >= 0.
  case1ab : A = C from the cubic x^3 - E x^2 + (g^2+4k^2) x - E g^2 = 0
      (x = A^2), B = D = 2kA/sqrt(A^4+g^2),
      sin(phi_b) = -g B/(2kA), cos(phi_b) = A B/(2k). Persists past g = 2k.
  case1b : isolated points g = 0 (phi_c = pi, phi_b = pi/2) and g = +-2k
      (phi_c = 0, phi_b = -+pi/2); A=...=sqrt(E). Not continued.
  case2 : A=...=sqrt(E), sin(phi_b) = -g/(2k), phi_c = 2 phi_b - pi,
      phi_d = phi_b - pi.

kind B (b_plus / b_minus): A^2 = E +- sqrt(4k^2-g^2), phi_a = phi_c = 0,
  sin(phi_b) = sin(phi_d) = g/(2k), cos = (E - A^2)/(2k), phi_b = phi_d.

kind C: in-phase pair A^2 = E - k +- sqrt(k^2-g^2) with phi_a = phi_b = 0,
  sin(phi_c) = sin(phi_d) = g/k, phi_c = phi_d; anti-phase pair
  A^2 = E + k +- sqrt(k^2-g^2) with phi_b = pi, phi_c = phi_d - pi,
  sin(phi_d) = g/k. All four live on g^2 <= k^2.

kind D (gauge phi_c = 0, propagation constant named G): amplitudes
  A=B=D=E from the simultaneous pair C^2(G-C^2) = 4A^2(G-A^2) and
  (kC)^2 = (gA)^2 + (GA-A^3)^2; exp(i phi_a) = kC / (A (G - A^2 - i g)),
  phi_a = -phi_b = phi_d = -phi_e.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ptplaq import numerics, stability
from ptplaq.model import (PlaquetteConfig, PlaquetteKind, SITE_LABELS,
                          residual_norm, stationary_residual)

RESIDUAL_BOUND = 1e-10  # every emitted state is checked against this

# branch name -> plot symbol used for the same family in the model sketches
FIGURE_SYMBOLS = {
    "case1aa_plus": "blue circles",
    "case1aa_minus": "red crosses",
    "case1ab": "green stars",
    "case2": "black squares",
    "case1b": "(isolated points, not plotted)",
    "b_plus": "blue circles",
    "b_minus": "red crosses",
    "c_inphase_plus": "blue circles",
    "c_inphase_minus": "red crosses",
    "c_antiphase_plus": "black squares",
    "c_antiphase_minus": "green stars",
}

BRANCH_NAMES = {
    PlaquetteKind.A: ("case1aa_plus", "case1aa_minus", "case1ab", "case1b", "case2"),
    PlaquetteKind.B: ("b_plus", "b_minus"),
    PlaquetteKind.C: ("c_inphase_plus", "c_inphase_minus",
                      "c_antiphase_plus", "c_antiphase_minus"),
    PlaquetteKind.D: tuple(f"d_branch_{i}" for i in range(8)),
}


@dataclass(frozen=True)
class MadelungState:
    """Amplitude-phase decomposition u_n = A_n exp(i phi_n) plus E (or G)."""

    amplitudes: tuple[float, ...]
    phases: tuple[float, ...]
    e: float

    def to_state_vector(self) -> np.ndarray:
        a = np.asarray(self.amplitudes, dtype=np.float64)
        p = np.asarray(self.phases, dtype=np.float64)
        return a * np.exp(1j * p)

    @classmethod
    def from_state_vector(cls, u, e: float) -> "MadelungState":
        v = np.asarray(u, dtype=np.complex128)
        return cls(tuple(np.abs(v)), tuple(float(x) for x in np.angle(v)), float(e))


@dataclass(frozen=True)
class StationaryState:
    u: np.ndarray
    e: float
    label: str | None
    residual_norm: float

    @property
    def madelung(self) -> MadelungState:
        return MadelungState.from_state_vector(self.u, self.e)


def _emit(cfg: PlaquetteConfig, e: float, label: str, u: np.ndarray) -> StationaryState:
    res = residual_norm(cfg, e, u)
    if res > RESIDUAL_BOUND:
        raise numerics.ToleranceError(
            f"closed-form state {label} violates the residual bound: {res:.3e}")
    return StationaryState(u, e, label, res)


def _phase_state(amps, phases) -> np.ndarray:
    return np.asarray(amps, dtype=np.float64) * np.exp(1j * np.asarray(phases))


def _branches_a(cfg: PlaquetteConfig, e: float) -> list[StationaryState]:
    k, g = cfg.k, cfg.gamma
    out = []
    rad = 4.0 * k * k - g * g
    iso = 1e-9 * max(1.0, 2.0 * abs(k))
    if rad >= 0.0:
        root = math.sqrt(rad)
        for name, amp2 in (("case1aa_plus", e + root), ("case1aa_minus", e - root)):
            if amp2 < 0.0:
                continue
            amp = math.sqrt(amp2)
            phi_b = math.atan2(-g / (2.0 * k), (e - amp2) / (2.0 * k))
            u = _phase_state((amp,) * 4, (0.0, phi_b, 0.0, -phi_b))
            out.append(_emit(cfg, e, name, u))
    for a in solve_case_1ab(e, k, g):
        b = 2.0 * k * a / math.sqrt(a ** 4 + g * g)
        phi_b = math.atan2(-g * b / (2.0 * k * a), a * b / (2.0 * k))
        u = _phase_state((a, b, a, b), (0.0, phi_b, 0.0, -phi_b))
        out.append(_emit(cfg, e, "case1ab", u))
    if e >= 0.0 and abs(g) <= 2.0 * abs(k) and rad >= 0.0:
        amp = math.sqrt(e)
        phi_b = math.asin(max(-1.0, min(1.0, -g / (2.0 * k))))
        u = _phase_state((amp,) * 4,
                         (0.0, phi_b, 2.0 * phi_b - math.pi, phi_b - math.pi))
        out.append(_emit(cfg, e, "case2", u))
    # case 1b lives only at g = 0 and g = +-2k
    if e >= 0.0:
        amp = math.sqrt(e)
        if abs(g) <= iso:
            u = _phase_state((amp,) * 4, (0.0, 0.5 * math.pi, math.pi, -0.5 * math.pi))
            out.append(_emit(cfg, e, "case1b", u))
        elif abs(g - 2.0 * k) <= iso or abs(g + 2.0 * k) <= iso:
            sgn = 1.0 if g * k > 0 else -1.0
            u = _phase_state((amp,) * 4,
                             (0.0, -sgn * 0.5 * math.pi, 0.0, sgn * 0.5 * math.pi))
            out.append(_emit(cfg, e, "case1b", u))
    return out


def _branches_b(cfg: PlaquetteConfig, e: float) -> list[StationaryState]:
    k, g = cfg.k, cfg.gamma
    rad = 4.0 * k * k - g * g
    out = []
    if rad < 0.0:
        return out
    root = math.sqrt(rad)
    for name, amp2 in (("b_plus", e + root), ("b_minus", e - root)):
        if amp2 < 0.0:
            continue
        amp = math.sqrt(amp2)
        phi_b = math.atan2(g / (2.0 * k), (e - amp2) / (2.0 * k))
        u = _phase_state((amp,) * 4, (0.0, phi_b, 0.0, phi_b))
        out.append(_emit(cfg, e, name, u))
    return out


def _branches_c(cfg: PlaquetteConfig, e: float) -> list[StationaryState]:
    k, g = cfg.k, cfg.gamma
    rad = k * k - g * g
    out = []
    if rad < 0.0:
        return out
    root = math.sqrt(rad)
    for name, amp2 in (("c_inphase_plus", e - k + root), ("c_inphase_minus", e - k - root)):
        if amp2 < 0.0:
            continue
        amp = math.sqrt(amp2)
        phi_c = math.atan2(g / k, (e - k - amp2) / k)
        u = _phase_state((amp,) * 4, (0.0, 0.0, phi_c, phi_c))
        out.append(_emit(cfg, e, name, u))
    for name, amp2 in (("c_antiphase_plus", e + k + root), ("c_antiphase_minus", e + k - root)):
        if amp2 < 0.0:
            continue
        amp = math.sqrt(amp2)
        phi_d = math.atan2(g / k, (e + k - amp2) / k)
        u = _phase_state((amp,) * 4, (0.0, math.pi, phi_d - math.pi, phi_d))
        out.append(_emit(cfg, e, name, u))
    return out


def _branches_d(cfg: PlaquetteConfig, g_const: float) -> list[StationaryState]:
    k, g = cfg.k, cfg.gamma
    out = []
    for i, (a, c) in enumerate(solve_cross_amplitudes(g_const, k, g)):
        phase = k * c / (a * (g_const - a * a - 1j * g))
        phase /= abs(phase)
        phi_a = float(np.angle(phase))
        u = _phase_state((a, a, c, a, a), (phi_a, -phi_a, 0.0, phi_a, -phi_a))
        out.append(_emit(cfg, g_const, f"d_branch_{i}", u))
    return out


def analytic_branches(cfg: PlaquetteConfig, e: float) -> list[StationaryState]:
    """Every closed-form branch state that exists at (kind, k, gamma, E).

    For kind D the parameter is the propagation constant G and the branches
    are indexed by ascending central-site partner amplitude A. The list is
    empty when no branch exists (for example |gamma| > 2|k| on case 1aa).
    """
    if cfg.kind is PlaquetteKind.A:
        return _branches_a(cfg, e)
    if cfg.kind is PlaquetteKind.B:
        return _branches_b(cfg, e)
    if cfg.kind is PlaquetteKind.C:
        return _branches_c(cfg, e)
    return _branches_d(cfg, e)


def branch_exists(kind: PlaquetteKind, label: str, e: float, k: float, g: float) -> bool | None:
    """Closed-form existence predicate; None when no closed window is known."""
    if kind is PlaquetteKind.A:
        if label in ("case1aa_plus", "case1aa_minus"):
            rad = 4.0 * k * k - g * g
            if rad < 0.0:
                return False
            return (e + math.sqrt(rad) >= 0.0) if label.endswith("plus") \
                else (e - math.sqrt(rad) >= 0.0)
        if label == "case2":
            return abs(g) <= 2.0 * abs(k) and e >= 0.0
        return None
    if kind is PlaquetteKind.B:
        rad = 4.0 * k * k - g * g
        if rad < 0.0:
            return False
        return (e + math.sqrt(rad) >= 0.0) if label == "b_plus" else (e - math.sqrt(rad) >= 0.0)
    if kind is PlaquetteKind.C:
        if g * g > k * k:
            return False
        root = math.sqrt(k * k - g * g)
        base = {"c_inphase_plus": e - k + root, "c_inphase_minus": e - k - root,
                "c_antiphase_plus": e + k + root, "c_antiphase_minus": e + k - root}[label]
        return base >= 0.0
    return None


def solve_case_1ab(e: float, k: float, gamma: float, merge_tol: float = 1e-6) -> list[float]:
    """Positive amplitudes A with E = A^2 + 4k^2 A^2/(A^4 + gamma^2).

    Reduces to the cubic x^3 - E x^2 + (gamma^2 + 4 k^2) x - E gamma^2 = 0 in
    x = A^2 (solved via the companion-matrix eigenproblem), then polishes each
    admissible root with scalar Newton and keeps it only if back-substitution
    is satisfied to 1e-12 relative.
    """
    if e <= 0.0:
        return []
    a2, a1, a0 = -e, gamma * gamma + 4.0 * k * k, -e * gamma * gamma
    comp = np.array([[0.0, 0.0, -a0],
                     [1.0, 0.0, -a1],
                     [0.0, 1.0, -a2]], dtype=np.complex128)
    roots = numerics.eig_complex(comp)
    scale = max(1.0, abs(e))
    out: list[float] = []
    for x in roots:
        if abs(x.imag) > 1e-8 * scale:
            continue
        xr = x.real
        if xr <= 0.0 or xr > e * (1.0 + 1e-12):
            continue
        a = math.sqrt(min(xr, e))
        for _ in range(50):
            den = a ** 4 + gamma * gamma
            f = a * a + 4.0 * k * k * a * a / den - e
            if abs(f) <= 1e-14 * scale:
                break
            df = 2.0 * a + 4.0 * k * k * (2.0 * a * gamma * gamma - 2.0 * a ** 5) / den ** 2
            if df == 0.0:
                break
            a -= f / df
            if a <= 0.0:
                a = 1e-12
        den = a ** 4 + gamma * gamma
        if den == 0.0:
            continue
        f = a * a + 4.0 * k * k * a * a / den - e
        if abs(f) > 1e-12 * scale:
            continue
        if all(abs(a - b) > merge_tol for b in out):
            out.append(a)
    return sorted(out)


def solve_cross_amplitudes(g_const: float, k: float, gamma: float,
                           grid: int = 500, merge_tol: float = 1e-6) -> list[tuple[float, float]]:
    """All simultaneous positive roots (A, C) of the cross-plaquette pair.

    f1 = C^2 (G - C^2) - 4 A^2 (G - A^2) and
    f2 = (kC)^2 - (gamma A)^2 - (G A - A^3)^2
    are scanned on a (grid x grid) cell mesh over (0, 1.3*sqrt(G)]^2 (one
    root family sits slightly above sqrt(G) in both amplitudes); every cell
    whose corners change sign in both functions seeds a two-dimensional
    Newton polish. Verified roots additionally satisfy |gamma*A/(k*C)| <= 1
    so the arm phase is well defined; near-zero amplitudes are rejected as
    copies of the trivial state.
    """
    if g_const <= 0.0:
        return []
    top = 1.3 * math.sqrt(g_const)
    floor = 1e-3 * math.sqrt(g_const)
    ax = np.linspace(top / grid * 1e-3, top, grid + 1)
    aa, cc = np.meshgrid(ax, ax, indexing="ij")
    f1 = cc ** 2 * (g_const - cc ** 2) - 4.0 * aa ** 2 * (g_const - aa ** 2)
    f2 = (k * cc) ** 2 - (gamma * aa) ** 2 - (g_const * aa - aa ** 3) ** 2

    def _sign_change(f):
        s = np.sign(f)
        mixed = np.zeros((grid, grid), dtype=bool)
        for di in (0, 1):
            for dj in (0, 1):
                mixed |= s[di:grid + di, dj:grid + dj] != s[0:grid, 0:grid]
        return mixed

    cells = np.argwhere(_sign_change(f1) & _sign_change(f2))
    scale = max(1.0, g_const * g_const, (k * k + gamma * gamma) * g_const)
    out: list[tuple[float, float]] = []
    for ci, cj in cells:
        a = 0.5 * (ax[ci] + ax[ci + 1])
        c = 0.5 * (ax[cj] + ax[cj + 1])
        ok = False
        for _ in range(80):
            r1 = c * c * (g_const - c * c) - 4.0 * a * a * (g_const - a * a)
            r2 = (k * c) ** 2 - (gamma * a) ** 2 - (g_const * a - a ** 3) ** 2
            if max(abs(r1), abs(r2)) <= 1e-14 * scale:
                ok = True
                break
            j11 = -8.0 * a * g_const + 16.0 * a ** 3
            j12 = 2.0 * c * g_const - 4.0 * c ** 3
            j21 = -2.0 * gamma * gamma * a - 2.0 * (g_const * a - a ** 3) * (g_const - 3.0 * a * a)
            j22 = 2.0 * k * k * c
            det = j11 * j22 - j12 * j21
            if det == 0.0:
                break
            da = (-r1 * j22 + r2 * j12) / det
            dc = (-j11 * r2 + j21 * r1) / det
            a += da
            c += dc
            if not (0.0 < a <= 1.2 * top and 0.0 < c <= 1.2 * top):
                break
        if not ok:
            continue
        if a < floor or c < floor or a > top * (1 + 1e-9) or c > top * (1 + 1e-9):
            continue
        if abs(gamma * a) > abs(k * c) * (1.0 + 1e-12):
            continue
        if all(math.hypot(a - a0, c - c0) > merge_tol for a0, c0 in out):
            out.append((a, c))
    return sorted(out)


def _real_jacobian(cfg: PlaquetteConfig, e: float, u: np.ndarray) -> np.ndarray:
    fu, fubar = stability.jacobian_blocks(cfg, e, u)
    n = u.shape[0]
    jac = np.zeros((2 * n, 2 * n))
    col_a = fu + fubar                  # dF/d(Re u_j), complex columns
    col_b = 1j * (fu - fubar)           # dF/d(Im u_j)
    jac[:n, :n] = col_a.real
    jac[n:, :n] = col_a.imag
    jac[:n, n:] = col_b.real
    jac[n:, n:] = col_b.imag
    return jac


def newton_refine(cfg: PlaquetteConfig, e: float, guess,
                  tol: float = 1e-11, max_iter: int = 50) -> np.ndarray:
    """Gauge-fixed Newton iteration on the stationary residual.

    The 2N real equations are bordered with the constraint Im(u_A) = 0 and
    the U(1) phase direction, which removes the gauge null vector from the
    Jacobian. The result carries Im(u_A) = 0, Re(u_A) >= 0. Failure modes:
    ConvergenceError after ``max_iter`` steps (carrying the last residual)
    and SingularMatrixError when the bordered Jacobian degenerates, which
    signals a bifurcation or branch termination.
    """
    u = np.asarray(guess, dtype=np.complex128).copy()
    if u.shape != (cfg.n_sites,):
        raise ValueError(f"guess has shape {u.shape}, expected ({cfg.n_sites},)")
    norm0 = float(np.abs(u).max())
    if norm0 == 0.0:
        raise ValueError("guess must be nonzero (the zero state is excluded)")
    if u[0] != 0.0:
        u = u * np.exp(-1j * np.angle(u[0]))
    n = cfg.n_sites
    res = None
    for _ in range(max_iter):
        f = stationary_residual(cfg, e, u)
        res = float(np.sqrt((np.abs(f) ** 2).sum()))
        if res <= tol:
            break
        jac = _real_jacobian(cfg, e, u)
        bordered = np.zeros((2 * n + 1, 2 * n + 1))
        bordered[:2 * n, :2 * n] = jac
        bordered[:n, 2 * n] = -u.imag     # U(1) phase direction
        bordered[n:2 * n, 2 * n] = u.real
        bordered[2 * n, n] = 1.0          # gauge row: Im(u_A) = 0
        rhs_b = np.zeros(2 * n + 1)
        rhs_b[:n] = -f.real
        rhs_b[n:2 * n] = -f.imag
        rhs_b[2 * n] = -u[0].imag
        delta = numerics.solve_linear(bordered, rhs_b)
        u = u + delta[:n].real + 1j * delta[n:2 * n].real
    else:
        raise numerics.ConvergenceError(
            f"Newton did not reach {tol:.1e} in {max_iter} iterations "
            f"(last residual {res:.3e})", last_residual=res)
    u[0] = complex(u[0].real, 0.0)
    if u[0].real < 0.0:
        u = -u
        u[0] = complex(u[0].real, 0.0)
    return u


@dataclass(frozen=True)
class TerminationRecord:
    gamma: float          # midpoint of the final bracket
    bracket: tuple[float, float]
    reason: str


@dataclass
class BranchCurve:
    """Samples of one stationary branch continued in gamma at fixed E (or G)."""

    kind: PlaquetteKind
    k: float
    e: float
    label: str
    gammas: list[float] = field(default_factory=list)
    states: list[StationaryState] = field(default_factory=list)
    spectra: list[stability.StabilitySpectrum] = field(default_factory=list)
    events: list[stability.BifurcationEvent] = field(default_factory=list)
    termination: TerminationRecord | None = None

    @property
    def gamma_max(self) -> float:
        return self.gammas[-1] if self.gammas else math.nan


def gauge_distance(u, v) -> float:
    """Distance between states modulo a global phase: min_theta ||u - e^{i theta} v||."""
    a = np.asarray(u, dtype=np.complex128)
    b = np.asarray(v, dtype=np.complex128)
    na = float((np.abs(a) ** 2).sum())
    nb = float((np.abs(b) ** 2).sum())
    ov = abs(np.vdot(a, b))
    return math.sqrt(max(0.0, na + nb - 2.0 * ov))


def _family_states(cfg: PlaquetteConfig, e: float, label: str) -> list[StationaryState]:
    if cfg.kind is PlaquetteKind.D:
        return analytic_branches(cfg, e)  # cross branches are matched by distance
    return [s for s in analytic_branches(cfg, e) if s.label == label]


def _corrector_step(cfg: PlaquetteConfig, e: float, label: str, gamma: float,
                    predictor: np.ndarray, jump_tol: float) -> np.ndarray | None:
    """One continuation corrector; None encodes a termination signal.

    The closed-form family is re-enumerated at this gamma and the root
    nearest the previous state (modulo a global phase) seeds the Newton
    solve. Matching on the enumeration keeps branch identities apart where
    families pass close to each other (the two-amplitude square family
    crosses the equal-amplitude ones near gamma ~ 1.75); the closed form is
    kept verbatim when Newton stalls on a degenerate Jacobian. An empty
    family (radicand turned negative, root pair annihilated) or a matched
    root far from the predictor terminates the branch.
    """
    exists = branch_exists(cfg.kind, label, e, cfg.k, gamma)
    if exists is False:
        return None
    cfg_g = cfg.with_gamma(gamma)
    candidates = _family_states(cfg_g, e, label)
    if not candidates:
        return None  # the root pair annihilated (or the radicand turned negative)
    target = min(candidates, key=lambda s: gauge_distance(predictor, s.u))
    if gauge_distance(predictor, target.u) > jump_tol * (1.0 + float(np.abs(predictor).max())):
        return None  # nearest surviving root belongs to another branch
    scale = max(1.0, float(np.abs(target.u).max()))
    try:
        u = newton_refine(cfg_g, e, target.u)
        if gauge_distance(u, target.u) > 1e-6 * scale:
            u = target.u.copy()  # Newton wandered off a degenerate family
    except (numerics.ConvergenceError, numerics.SingularMatrixError):
        # degenerate Jacobian (extra zero modes); the closed form already
        # satisfies the residual bound, so keep it verbatim
        u = target.u.copy()
    return u


def continue_branch(cfg: PlaquetteConfig, label: str, e: float,
                    gamma_range: tuple[float, float], step: float,
                    jump_tol: float = 0.5,
                    detect_events: bool = False) -> BranchCurve:
    """Natural-parameter continuation of one branch over [lo, hi] in gamma.

    The previous corrected state identifies the branch among the closed-form
    roots re-enumerated at each gamma sample; the matched root seeds the
    gauge-fixed Newton corrector, and the stability spectrum is attached at
    every accepted sample. When the corrector fails, the closed-form window
    ends, or the matched root jumps to a different family, the curve stops
    and the termination gamma is bracketed to step/2 by one extra bisection
    probe.
    """
    lo, hi = gamma_range
    if step <= 0.0 or hi < lo:
        raise ValueError("need step > 0 and hi >= lo")
    n_steps = int(math.floor((hi - lo) / step + 1e-9))
    grid = [lo + i * step for i in range(n_steps + 1)]

    start_states = [s for s in analytic_branches(cfg.with_gamma(grid[0]), e)
                    if s.label == label]
    start_idx = 0
    # a branch may be degenerate (zero amplitude) at the window edge; walk in
    while not start_states or float(np.abs(start_states[0].u).max()) < 1e-6:
        start_idx += 1
        if start_idx >= len(grid):
            raise ValueError(f"branch {label} does not exist on the requested range")
        start_states = [s for s in analytic_branches(cfg.with_gamma(grid[start_idx]), e)
                        if s.label == label]

    curve = BranchCurve(cfg.kind, cfg.k, e, label)
    u = start_states[0].u

    def _accept(gamma: float, u_acc: np.ndarray):
        cfg_g = cfg.with_gamma(gamma)
        if cfg.kind is PlaquetteKind.D and u_acc[2] != 0.0:
            u_acc = u_acc * np.exp(-1j * np.angle(u_acc[2]))  # store in phi_c = 0 gauge
        res = residual_norm(cfg_g, e, u_acc)
        state = StationaryState(u_acc, e, label, res)
        b = stability.linearization_matrix(cfg_g, e, u_acc)
        curve.gammas.append(gamma)
        curve.states.append(state)
        curve.spectra.append(stability.stability_spectrum(b))

    _accept(grid[start_idx], u)
    terminated_at = None
    for gamma in grid[start_idx + 1:]:
        u_new = _corrector_step(cfg, e, label, gamma, u, jump_tol)
        if u_new is None:
            terminated_at = gamma
            break
        u = u_new
        _accept(gamma, u)

    if terminated_at is not None:
        g_ok = curve.gammas[-1]
        g_bad = terminated_at
        g_mid = 0.5 * (g_ok + g_bad)
        probe = _corrector_step(cfg, e, label, g_mid, curve.states[-1].u, jump_tol)
        bracket = (g_mid, g_bad) if probe is not None else (g_ok, g_mid)
        curve.termination = TerminationRecord(
            0.5 * (bracket[0] + bracket[1]), bracket,
            "corrector failed or closed-form window ended")

    if detect_events:
        curve.events = stability.detect_bifurcations(curve)
    return curve


def write_branch_csv(path, curve: BranchCurve) -> None:
    """Branch-curve CSV: amplitudes, phases, E, residual and stability counts."""
    n = curve.kind.n_sites
    labels = SITE_LABELS[:n]
    header = (["gamma"] + [f"amp_{s}" for s in labels] + [f"phase_{s}" for s in labels]
              + ["E", "residual_norm", "max_re_lambda",
                 "n_real_pairs", "n_imag_pairs", "n_quartets"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for gamma, state, spec in zip(curve.gammas, curve.states, curve.spectra):
            m = state.madelung
            row = ([f"{gamma:.17g}"]
                   + [f"{a:.17g}" for a in m.amplitudes]
                   + [f"{p:.17g}" for p in m.phases]
                   + [f"{state.e:.17g}", f"{state.residual_norm:.3e}",
                      f"{spec.max_growth_rate:.17g}",
                      str(spec.n_real_pairs), str(spec.n_imag_pairs),
                      str(spec.n_quartets)])
            w.writerow(row)

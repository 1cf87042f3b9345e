"""Direct integration of the plaquette flow and conservation diagnostics.

Fixed-step RK4 (compiled kernel when available) on du/dt = -i[H_L + H_NL]u,
with periodic sampling, a hard amplitude cap that flags instability blow-up,
controlled perturbations of stationary states (uniform, seeded random, or
along a selected eigenmode of the linearization), and per-sample diagnostic
records for the total power and the indefinite inner product u^dag P u.

Stationary states follow u(t) = exp(+i*E*t) u0, so drift is measured after
removing that phase.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ptplaq import kernels, numerics, stability
from ptplaq.model import PlaquetteConfig, build_linear_hamiltonian
from ptplaq.symmetry import ParityOperator

AMP_CAP = 1e6
DEFAULT_DT = 1e-3
DEFAULT_STRIDE = 100


class NumericalError(RuntimeError):
    """Non-finite state during integration; carries the last valid time."""

    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


@dataclass(frozen=True)
class PerturbationSpec:
    """How to displace a stationary state before integrating.

    mode 'uniform' adds delta along the normalized all-ones direction,
    'random' a seeded complex Gaussian direction, 'eigenmode' the direction
    reconstructed from the (r, conj(s)) eigenvector of the linearization for
    the index-th exponent sorted by descending growth rate.
    """

    delta: float
    mode: str = "uniform"
    seed: int = 0
    index: int = 0

    def __post_init__(self):
        if self.delta < 0.0:
            raise ValueError("perturbation amplitude must be >= 0")
        if self.mode not in ("uniform", "random", "eigenmode"):
            raise ValueError(f"unknown perturbation mode {self.mode!r}")


@dataclass
class Trajectory:
    cfg: PlaquetteConfig
    times: np.ndarray
    states: np.ndarray
    dt: float
    stride: int
    terminated_early: bool = False
    termination_reason: str | None = None
    diagnostics: dict | None = None

    @property
    def per_site_power(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    @property
    def total_power(self) -> np.ndarray:
        return self.per_site_power.sum(axis=1)


def integrate(cfg: PlaquetteConfig, u0, t_end: float, dt: float = DEFAULT_DT,
              stride: int = DEFAULT_STRIDE) -> Trajectory:
    """Integrate the plaquette flow from u0 over [0, t_end].

    The state is recorded every ``stride`` steps. When any site amplitude
    exceeds 1e6 the offending record is kept and the trajectory is flagged
    as terminated early (instability blow-up); a non-finite state raises
    NumericalError with the last valid time.
    """
    if dt <= 0.0 or t_end <= 0.0:
        raise ValueError("need dt > 0 and t_end > 0")
    v = np.asarray(u0, dtype=np.complex128)
    if v.shape != (cfg.n_sites,):
        raise ValueError(f"state has shape {v.shape}, expected ({cfg.n_sites},)")
    hl = build_linear_hamiltonian(cfg)
    n_steps = int(round(t_end / dt))
    times, states, status, steps_done = kernels.rk4_evolve(
        hl, v, dt, n_steps, stride, AMP_CAP)
    if status == kernels.STATUS_NAN:
        raise NumericalError(
            f"non-finite state at step {steps_done}",
            last_valid_time=(steps_done - 1) * dt)
    return Trajectory(
        cfg, times, states, dt, stride,
        terminated_early=(status == kernels.STATUS_OVERFLOW),
        termination_reason="amplitude exceeded 1e6" if status else None)


def _mode_vector(b: np.ndarray, mu: complex) -> np.ndarray:
    """Eigenvector of B at eigenvalue mu via shifted inverse iteration."""
    n = b.shape[0]
    scale = max(numerics.matrix_norm(b), 1e-300)
    rng = np.random.default_rng(12345)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    v /= np.sqrt(np.vdot(v, v).real)
    eps = 1e-10 * scale
    for _ in range(6):
        try:
            w = numerics.solve_linear(b - (mu + eps) * np.eye(n), v)
        except numerics.SingularMatrixError:
            eps *= 100.0
            continue
        v = w / np.sqrt(np.vdot(w, w).real)
    return v


def perturb(u0, spec: PerturbationSpec, cfg: PlaquetteConfig | None = None,
            e: float | None = None) -> np.ndarray:
    """u0 + delta * direction with a unit-norm direction per ``spec.mode``.

    Eigenmode perturbations build the linearization at u0 and need cfg and
    e; index 0 is the fastest-growing exponent. delta = 0 returns u0.
    """
    v = np.asarray(u0, dtype=np.complex128).copy()
    if spec.delta == 0.0:
        return v
    n = v.shape[0]
    if spec.mode == "uniform":
        direction = np.ones(n, dtype=np.complex128) / math.sqrt(n)
    elif spec.mode == "random":
        rng = np.random.default_rng(spec.seed)
        direction = rng.normal(size=n) + 1j * rng.normal(size=n)
        direction /= np.sqrt(np.vdot(direction, direction).real)
    else:
        if cfg is None or e is None:
            raise ValueError("eigenmode perturbation needs cfg and e")
        b = stability.linearization_matrix(cfg, e, v)
        spec_b = stability.stability_spectrum(b)
        order = sorted(spec_b.lambdas,
                       key=lambda lam: (-lam.real, -abs(lam.imag), lam.imag))
        if not 0 <= spec.index < len(order):
            raise IndexError(f"eigenmode index {spec.index} out of range")
        lam = order[spec.index]
        x = _mode_vector(b, -1j * lam)
        direction = x[:n] + np.conj(x[n:])
        dnorm = np.sqrt(np.vdot(direction, direction).real)
        if dnorm == 0.0:
            raise ValueError("eigenmode direction degenerated to zero")
        direction = direction / dnorm
    return v + spec.delta * direction


def diagnostics(traj: Trajectory, cfg: PlaquetteConfig,
                parity: ParityOperator) -> Trajectory:
    """Fill per-sample conservation diagnostics on the trajectory.

    Balance residuals compare centered differences of sum|u|^2 and of
    u^dag P u against their exact flow rates; the endpoints carry NaN since
    no centered stencil exists there.
    """
    if traj.states.shape[0] == 0:
        raise ValueError("empty trajectory")
    p = parity.matrix
    states = traj.states
    times = traj.times
    n_rec = states.shape[0]
    power = traj.per_site_power
    total = power.sum(axis=1)
    signs = np.asarray(cfg.signs, dtype=np.float64)

    pt_prod = np.einsum("ij,jk,ik->i", states.conj(), p, states)
    power_rate = 2.0 * cfg.gamma * (power * signs).sum(axis=1)
    # d/dt (u^dag P u) = i u^dag [H_NL^dag P - P H_NL] u with H_NL = -diag(|u|^2)
    pu = states @ p.T                 # P u per sample
    p_hnl_u = (-power * states) @ p.T  # P H_NL u
    pt_rate = 1j * ((states.conj() * (-power) * pu).sum(axis=1)
                    - (states.conj() * p_hnl_u).sum(axis=1))

    pow_res = np.full(n_rec, np.nan)
    pt_res = np.full(n_rec, np.nan)
    if n_rec >= 3:
        dt2 = times[2:] - times[:-2]
        d_total = (total[2:] - total[:-2]) / dt2
        pow_res[1:-1] = np.abs(d_total - power_rate[1:-1])
        d_pt = (pt_prod[2:] - pt_prod[:-2]) / dt2
        pt_res[1:-1] = np.abs(d_pt - pt_rate[1:-1])

    traj.diagnostics = {
        "per_site_power": power,
        "total_power": total,
        "pt_inner_product": pt_prod,
        "power_balance_residual": pow_res,
        "pt_balance_residual": pt_res,
    }
    return traj


def fit_growth_rate(traj: Trajectory, u0, e: float,
                    amp_factor: float = 3.0) -> float:
    """Fitted exponential rate of the deviation from the stationary orbit.

    Removes exp(+i*E*t), measures w(t) = exp(-i*E*t) u(t) - u0 and fits the
    slope of log||w|| while all site amplitudes stay below ``amp_factor``
    times their initial maximum (the linear window).
    """
    v0 = np.asarray(u0, dtype=np.complex128)
    amp0 = float(np.abs(v0).max())
    w = traj.states * np.exp(-1j * e * traj.times)[:, None] - v0[None, :]
    wnorm = np.sqrt((np.abs(w) ** 2).sum(axis=1))
    cap = np.abs(traj.states).max(axis=1) <= amp_factor * amp0
    valid = cap & (wnorm > 0.0)
    idx = np.where(~valid)[0]
    stop = idx[0] if idx.size else len(wnorm)
    if stop < 3:
        raise ValueError("linear window too short to fit a growth rate")
    t = traj.times[1:stop]
    y = np.log(wnorm[1:stop])
    a = np.vstack([t, np.ones_like(t)]).T
    ata = a.T @ a
    atb = a.T @ y
    # 2x2 normal equations, solved directly
    det = ata[0, 0] * ata[1, 1] - ata[0, 1] * ata[1, 0]
    slope = (atb[0] * ata[1, 1] - atb[1] * ata[0, 1]) / det
    return float(slope)


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Trajectory CSV; requires diagnostics to be filled."""
    if traj.diagnostics is None:
        raise ValueError("run diagnostics() before writing the trajectory CSV")
    d = traj.diagnostics
    n = traj.cfg.n_sites
    labels = traj.cfg.site_labels
    header = (["t"] + [f"power_{s}" for s in labels]
              + ["total_power", "re_pt_inner", "im_pt_inner",
                 "power_balance_residual", "pt_balance_residual"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(traj.states.shape[0]):
            row = ([f"{traj.times[i]:.17g}"]
                   + [f"{d['per_site_power'][i, j]:.17g}" for j in range(n)]
                   + [f"{d['total_power'][i]:.17g}",
                      f"{d['pt_inner_product'][i].real:.17g}",
                      f"{d['pt_inner_product'][i].imag:.17g}",
                      f"{d['power_balance_residual'][i]:.6e}",
                      f"{d['pt_balance_residual'][i]:.6e}"])
            w.writerow(row)

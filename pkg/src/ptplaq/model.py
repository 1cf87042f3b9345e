"""The four gain-loss plaquette models.

Kinds A, B, C are four-site squares coupled on the ring A-B-C-D-A; kind D
is a five-site cross whose central site C couples to the four arms and
carries no gain or loss. The linear Hamiltonian is

    H_L = H_L0 + H_L1,   H_L0 = -k * (adjacency),   H_L1 = i*gamma*diag(signs),

with sign vectors fixed per kind (positive sign = amplifying site under
the dynamics i*du/dt = H_L u + H_NL(u) u, H_NL(u) = -diag(|u_n|^2)).

Stationary states follow the convention u(t) = exp(+i*E*t) * u0, under which
the residual reads F_n = k*(neighbor sum) + |u_n|^2 u_n - i*gamma*s_n*u_n
- E*u_n and vanishes on a stationary amplitude vector u0.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class PlaquetteKind(str, enum.Enum):
    """Gain-loss topology; the value doubles as the JSON tag."""

    A = "A"  # 0+0-  : gain on B, loss on D, diagonal pair
    B = "B"  # +-+-  : alternating around the ring
    C = "C"  # ++--  : gain row / loss row
    D = "D"  # +-0+- : five-site cross, passive center

    @property
    def n_sites(self) -> int:
        return 5 if self is PlaquetteKind.D else 4


_SIGNS = {
    PlaquetteKind.A: (0, 1, 0, -1),
    PlaquetteKind.B: (1, -1, 1, -1),
    PlaquetteKind.C: (1, 1, -1, -1),
    PlaquetteKind.D: (-1, 1, 0, -1, 1),
}

_RING_BONDS = ((0, 1), (1, 2), (2, 3), (3, 0))
_STAR_BONDS = ((0, 2), (1, 2), (3, 2), (4, 2))

SITE_LABELS = ("A", "B", "C", "D", "E")

# figure-label chains from the model sketch; naming only, the sign vectors
# above are the dynamical authority
PATTERN_LABELS = {
    PlaquetteKind.A: "0+0-",
    PlaquetteKind.B: "+-+-",
    PlaquetteKind.C: "++--",
    PlaquetteKind.D: "+-0+-",
}


@dataclass(frozen=True)
class PlaquetteConfig:
    """One plaquette: kind, coupling k, gain-loss coefficient gamma."""

    kind: PlaquetteKind
    k: float
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "kind", PlaquetteKind(self.kind))
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_sites(self) -> int:
        return self.kind.n_sites

    @property
    def signs(self) -> tuple[int, ...]:
        return _SIGNS[self.kind]

    @property
    def decoupled(self) -> bool:
        """k = 0 leaves the sites uncoupled; permitted but worth flagging."""
        return self.k == 0.0

    @property
    def site_labels(self) -> tuple[str, ...]:
        return SITE_LABELS[: self.n_sites]

    def with_gamma(self, gamma: float) -> "PlaquetteConfig":
        return PlaquetteConfig(self.kind, self.k, gamma)

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind.value, "k": self.k, "gamma": self.gamma})

    @classmethod
    def from_dict(cls, obj: dict) -> "PlaquetteConfig":
        return cls(PlaquetteKind(obj["kind"]), obj["k"], obj["gamma"])

    @classmethod
    def from_json(cls, text: str) -> "PlaquetteConfig":
        return cls.from_dict(json.loads(text))


@lru_cache(maxsize=None)
def adjacency(kind: PlaquetteKind) -> np.ndarray:
    n = kind.n_sites
    adj = np.zeros((n, n))
    bonds = _STAR_BONDS if kind is PlaquetteKind.D else _RING_BONDS
    for i, j in bonds:
        adj[i, j] = 1.0
        adj[j, i] = 1.0
    adj.setflags(write=False)
    return adj


def build_linear_hamiltonian(cfg: PlaquetteConfig) -> np.ndarray:
    """H_L = -k*(adjacency) + i*gamma*diag(signs); complex-symmetric."""
    h = -cfg.k * adjacency(cfg.kind).astype(np.complex128)
    h += 1j * cfg.gamma * np.diag(np.asarray(cfg.signs, dtype=np.float64))
    return h


def nonlinear_diagonal(u) -> np.ndarray:
    """H_NL(u) = -diag(|u_n|^2); Hermitian for every u."""
    v = np.asarray(u, dtype=np.complex128)
    return np.diag(-(v.real * v.real + v.imag * v.imag)).astype(np.complex128)


def _check_state(cfg: PlaquetteConfig, u) -> np.ndarray:
    v = np.asarray(u, dtype=np.complex128)
    if v.shape != (cfg.n_sites,):
        raise ValueError(f"state has shape {v.shape}, expected ({cfg.n_sites},)")
    return v


def rhs(cfg: PlaquetteConfig, u) -> np.ndarray:
    """du/dt = -i*[H_L + H_NL(u)] u."""
    v = _check_state(cfg, u)
    hl = build_linear_hamiltonian(cfg)
    p2 = v.real * v.real + v.imag * v.imag
    return -1j * (hl @ v) + 1j * p2 * v


def stationary_residual(cfg: PlaquetteConfig, e: float, u) -> np.ndarray:
    """F_n = k*(neighbor sum) + |u_n|^2 u_n - i*gamma*s_n*u_n - E*u_n."""
    v = _check_state(cfg, u)
    adj = adjacency(cfg.kind)
    p2 = v.real * v.real + v.imag * v.imag
    s = np.asarray(cfg.signs, dtype=np.float64)
    return cfg.k * (adj @ v) + p2 * v - 1j * cfg.gamma * s * v - e * v


def residual_norm(cfg: PlaquetteConfig, e: float, u) -> float:
    return float(np.sqrt((np.abs(stationary_residual(cfg, e, u)) ** 2).sum()))


def power_balance_rate(cfg: PlaquetteConfig, u) -> float:
    """Exact d/dt sum|u_n|^2 along the flow: 2*gamma*sum(signs*|u_n|^2)."""
    v = _check_state(cfg, u)
    p2 = v.real * v.real + v.imag * v.imag
    return float(2.0 * cfg.gamma * (np.asarray(cfg.signs) * p2).sum())

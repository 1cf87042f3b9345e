"""Pure NumPy reference implementations of the hot kernels.

Two routines live here, mirrored one-to-one by the compiled extension
``ptplaq._cykern``:

* ``eigvals`` -- eigenvalues of a small dense complex matrix via balancing,
  Householder reduction to Hessenberg form, and explicitly shifted QR
  iteration with Wilkinson shifts and deflation.
* ``rk4_evolve`` -- fixed-step RK4 for the cubic plaquette flow
  du/dt = -i*(H @ u) + i*|u|^2*u with periodic sampling and blow-up capping.

Both are written for matrices of dimension <= 16; robustness is preferred
over asymptotic speed.
"""

from __future__ import annotations

import numpy as np

_EPS = float(np.finfo(np.float64).eps)

BACKEND_NAME = "python"

# integrator status codes shared with the compiled kernel
STATUS_OK = 0
STATUS_OVERFLOW = 1
STATUS_NAN = 2


def _balance(h: np.ndarray) -> None:
    """Parlett-Reinsch balancing (radix 2), in place."""
    n = h.shape[0]
    radix = 2.0
    done = False
    while not done:
        done = True
        for i in range(n):
            c = float(np.abs(h[:, i]).sum() - abs(h[i, i]))
            r = float(np.abs(h[i, :]).sum() - abs(h[i, i]))
            if c == 0.0 or r == 0.0:
                continue
            s = c + r
            f = 1.0
            while c < r / radix:
                c *= radix
                r /= radix
                f *= radix
            while c >= r * radix:
                c /= radix
                r *= radix
                f /= radix
            if (c + r) < 0.95 * s and f != 1.0:
                done = False
                h[i, :] /= f
                h[:, i] *= f


def _hessenberg(h: np.ndarray) -> None:
    """Householder reduction to upper Hessenberg form, in place."""
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        xnorm = np.sqrt(np.vdot(x, x).real)
        if xnorm == 0.0:
            continue
        a0 = x[0]
        if a0 != 0.0:
            alpha = -(a0 / abs(a0)) * xnorm
        else:
            alpha = -xnorm
        v = x
        v[0] = a0 - alpha
        vnorm = np.sqrt(np.vdot(v, v).real)
        if vnorm == 0.0:
            continue
        v /= vnorm
        # H <- P H P with P = I - 2 v v^H acting on the trailing block
        sub = h[k + 1:, k:]
        sub -= 2.0 * np.outer(v, v.conj() @ sub)
        cols = h[:, k + 1:]
        cols -= 2.0 * np.outer(cols @ v, v.conj())
        h[k + 1, k] = alpha
        h[k + 2:, k] = 0.0


def _eig22(a: complex, b: complex, c: complex, d: complex) -> tuple[complex, complex]:
    """Eigenvalues of [[a, b], [c, d]], larger-magnitude root computed first."""
    tr = a + d
    det = a * d - b * c
    half = 0.5 * tr
    disc = np.lib.scimath.sqrt(half * half - det)
    r1 = half + disc if abs(half + disc) >= abs(half - disc) else half - disc
    if r1 != 0.0:
        r2 = det / r1
    else:
        r2 = tr - r1
    return complex(r1), complex(r2)


def eigvals(a: np.ndarray, max_sweeps: int) -> np.ndarray:
    """All eigenvalues (with multiplicity, unsorted) of a square complex matrix.

    Raises RuntimeError if the QR iteration does not deflate every eigenvalue
    within ``max_sweeps`` sweeps.
    """
    h = np.array(a, dtype=np.complex128, order="C", copy=True)
    n = h.shape[0]
    w = np.empty(n, dtype=np.complex128)
    if n == 0:
        return w
    if n == 1:
        w[0] = h[0, 0]
        return w
    _balance(h)
    _hessenberg(h)
    anorm = float(np.abs(h).sum())
    if anorm == 0.0:
        w[:] = 0.0
        return w

    hi = n - 1
    sweeps = 0
    its = 0
    # a subdiagonal is negligible relative to its diagonal neighbors or, in
    # graded blocks with tiny diagonals, relative to the whole-matrix norm
    # (the same backward-error level the sweeps themselves inject)
    floor = _EPS * anorm
    while hi >= 0:
        # deflation scan: smallest l with negligible subdiagonal at (l, l-1)
        l = hi
        while l > 0:
            sub = abs(h[l, l - 1])
            s = abs(h[l - 1, l - 1]) + abs(h[l, l])
            if sub <= _EPS * s or sub <= floor:
                h[l, l - 1] = 0.0
                break
            l -= 1
        if l == hi:
            w[hi] = h[hi, hi]
            hi -= 1
            its = 0
            continue
        if l == hi - 1:
            w[hi], w[hi - 1] = _eig22(h[l, l], h[l, hi], h[hi, l], h[hi, hi])
            hi -= 2
            its = 0
            continue

        sweeps += 1
        its += 1
        if sweeps > max_sweeps:
            raise RuntimeError(
                f"QR iteration exceeded {max_sweeps} sweeps at block size {hi - l + 1}")

        if its % 10 == 0:
            # exceptional shift to break symmetry stalls
            mu = h[hi, hi] + 0.75 * abs(h[hi, hi - 1])
        else:
            e1, e2 = _eig22(h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1], h[hi, hi])
            mu = e1 if abs(e1 - h[hi, hi]) <= abs(e2 - h[hi, hi]) else e2

        # explicit single-shift QR sweep on the active block l..hi
        for i in range(l, hi + 1):
            h[i, i] -= mu
        cs = np.empty(hi - l, dtype=np.float64)
        sn = np.empty(hi - l, dtype=np.complex128)
        for i in range(l, hi):
            f = h[i, i]
            g = h[i + 1, i]
            af = abs(f)
            ag = abs(g)
            if ag == 0.0:
                c_, s_ = 1.0, 0.0 + 0.0j
            elif af == 0.0:
                c_, s_ = 0.0, np.conj(g) / ag
            else:
                rho = np.hypot(af, ag)
                c_ = af / rho
                s_ = (f / af) * np.conj(g) / rho
            cs[i - l] = c_
            sn[i - l] = s_
            row_i = h[i, i:hi + 1].copy()
            row_j = h[i + 1, i:hi + 1]
            h[i, i:hi + 1] = c_ * row_i + s_ * row_j
            h[i + 1, i:hi + 1] = -np.conj(s_) * row_i + c_ * row_j
        for i in range(l, hi):
            c_ = cs[i - l]
            s_ = sn[i - l]
            top = min(i + 2, hi) + 1
            col_i = h[l:top, i].copy()
            col_j = h[l:top, i + 1]
            h[l:top, i] = c_ * col_i + np.conj(s_) * col_j
            h[l:top, i + 1] = -s_ * col_i + c_ * col_j
        for i in range(l, hi + 1):
            h[i, i] += mu
    return w


def rk4_evolve(h: np.ndarray, u0: np.ndarray, dt: float, n_steps: int,
               stride: int, amp_cap: float):
    """Integrate du/dt = -i*(h @ u) + i*|u|^2*u with classical RK4.

    The state is recorded at step 0 and after every ``stride`` steps; when any
    |u_i| exceeds ``amp_cap`` the offending state is recorded and integration
    stops (status OVERFLOW). Non-finite values stop it with status NAN.

    Returns (times, states, status, steps_done).
    """
    h = np.asarray(h, dtype=np.complex128)
    u = np.array(u0, dtype=np.complex128, copy=True)
    n_rec_max = n_steps // stride + 2
    times = np.empty(n_rec_max, dtype=np.float64)
    states = np.empty((n_rec_max, u.shape[0]), dtype=np.complex128)
    times[0] = 0.0
    states[0] = u
    n_rec = 1
    status = STATUS_OK
    steps_done = 0

    def f(v):
        return -1j * (h @ v) + 1j * (v.real * v.real + v.imag * v.imag) * v

    # overflow/invalid are detected explicitly and reported via the status code
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, n_steps + 1):
            k1 = f(u)
            k2 = f(u + (0.5 * dt) * k1)
            k3 = f(u + (0.5 * dt) * k2)
            k4 = f(u + dt * k3)
            u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            steps_done = step
            amax = float(np.abs(u).max())
            if not np.isfinite(amax):
                status = STATUS_NAN
                break
            if amax > amp_cap:
                status = STATUS_OVERFLOW
                times[n_rec] = step * dt
                states[n_rec] = u
                n_rec += 1
                break
            if step % stride == 0:
                times[n_rec] = step * dt
                states[n_rec] = u
                n_rec += 1
    return times[:n_rec], states[:n_rec], status, steps_done

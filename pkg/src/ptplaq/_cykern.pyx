# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: complex QR eigenvalues and RK4 plaquette integration.

Scalar C translations of ptplaq.kernels.pyref; same algorithms, same status
codes, same call signatures. Matrix dimension is capped at 16.
"""

from libc.math cimport sqrt, fabs, hypot, isfinite, copysign

import numpy as np

BACKEND_NAME = "compiled"

STATUS_OK = 0
STATUS_OVERFLOW = 1
STATUS_NAN = 2

cdef double _EPS = 2.220446049250313e-16


cdef inline double zabs(double complex z) noexcept nogil:
    return hypot(z.real, z.imag)


cdef inline double complex zsqrt(double complex z) noexcept nogil:
    # principal branch, cancellation-free
    cdef double re = z.real
    cdef double im = z.imag
    cdef double r = hypot(re, im)
    cdef double w
    if r == 0.0:
        return 0.0
    w = sqrt(0.5 * (r + fabs(re)))
    if re >= 0.0:
        return w + (im / (2.0 * w)) * 1j
    return (fabs(im) / (2.0 * w)) + copysign(w, im) * 1j


cdef void _balance(double complex* h, Py_ssize_t n) noexcept nogil:
    cdef double radix = 2.0
    cdef bint done = False
    cdef Py_ssize_t i, j
    cdef double c, r, s, f
    while not done:
        done = True
        for i in range(n):
            c = 0.0
            r = 0.0
            for j in range(n):
                if j != i:
                    c += zabs(h[j * n + i])
                    r += zabs(h[i * n + j])
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
                for j in range(n):
                    h[i * n + j] /= f
                    h[j * n + i] *= f


cdef void _hessenberg(double complex* h, Py_ssize_t n) noexcept nogil:
    cdef double complex v[16]
    cdef Py_ssize_t k, i, j, m
    cdef double xnorm, vnorm
    cdef double complex a0, alpha, acc
    for k in range(n - 2):
        m = n - (k + 1)              # length of the column tail
        xnorm = 0.0
        for i in range(m):
            xnorm += zabs(h[(k + 1 + i) * n + k]) ** 2
        xnorm = sqrt(xnorm)
        if xnorm == 0.0:
            continue
        a0 = h[(k + 1) * n + k]
        if a0 != 0.0:
            alpha = -(a0 / zabs(a0)) * xnorm
        else:
            alpha = -xnorm
        for i in range(m):
            v[i] = h[(k + 1 + i) * n + k]
        v[0] = a0 - alpha
        vnorm = 0.0
        for i in range(m):
            vnorm += zabs(v[i]) ** 2
        vnorm = sqrt(vnorm)
        if vnorm == 0.0:
            continue
        for i in range(m):
            v[i] /= vnorm
        # rows k+1.. of columns k..: H -= 2 v (v^H H)
        for j in range(k, n):
            acc = 0.0
            for i in range(m):
                acc += v[i].conjugate() * h[(k + 1 + i) * n + j]
            for i in range(m):
                h[(k + 1 + i) * n + j] -= 2.0 * v[i] * acc
        # columns k+1..: H -= 2 (H v) v^H
        for i in range(n):
            acc = 0.0
            for j in range(m):
                acc += h[i * n + (k + 1 + j)] * v[j]
            for j in range(m):
                h[i * n + (k + 1 + j)] -= 2.0 * acc * v[j].conjugate()
        h[(k + 1) * n + k] = alpha
        for i in range(k + 2, n):
            h[i * n + k] = 0.0


cdef void _eig22(double complex a, double complex b,
                 double complex c, double complex d,
                 double complex* r1, double complex* r2) noexcept nogil:
    cdef double complex tr = a + d
    cdef double complex det = a * d - b * c
    cdef double complex half = 0.5 * tr
    cdef double complex disc = zsqrt(half * half - det)
    cdef double complex big
    if zabs(half + disc) >= zabs(half - disc):
        big = half + disc
    else:
        big = half - disc
    r1[0] = big
    if big != 0.0:
        r2[0] = det / big
    else:
        r2[0] = tr - big


def eigvals(object a, long max_sweeps):
    """All eigenvalues (with multiplicity, unsorted) of a square complex matrix."""
    a_arr = np.ascontiguousarray(a, dtype=np.complex128)
    if a_arr.ndim != 2 or a_arr.shape[0] != a_arr.shape[1]:
        raise ValueError("eigvals expects a square matrix")
    cdef Py_ssize_t n = a_arr.shape[0]
    if n > 16:
        raise ValueError("eigvals kernel supports dimension <= 16")
    w_arr = np.empty(n, dtype=np.complex128)
    if n == 0:
        return w_arr
    cdef double complex[:, ::1] a_mv = a_arr
    cdef double complex[::1] w = w_arr
    cdef double complex h[256]
    cdef double cs[16]
    cdef double complex sn[16]
    cdef Py_ssize_t i, j, l, hi, top
    cdef long sweeps = 0, its = 0
    cdef double anorm, floor, sub, s, af, ag, rho, c_
    cdef double complex mu, e1, e2, f, g, s_, ti, tj

    for i in range(n):
        for j in range(n):
            h[i * n + j] = a_mv[i, j]
    if n == 1:
        w[0] = h[0]
        return w_arr
    _balance(h, n)
    _hessenberg(h, n)
    anorm = 0.0
    for i in range(n * n):
        anorm += zabs(h[i])
    if anorm == 0.0:
        for i in range(n):
            w[i] = 0.0
        return w_arr

    # a subdiagonal is negligible relative to its diagonal neighbors or, in
    # graded blocks with tiny diagonals, relative to the whole-matrix norm
    floor = _EPS * anorm
    hi = n - 1
    while hi >= 0:
        l = hi
        while l > 0:
            sub = zabs(h[l * n + (l - 1)])
            s = zabs(h[(l - 1) * n + (l - 1)]) + zabs(h[l * n + l])
            if sub <= _EPS * s or sub <= floor:
                h[l * n + (l - 1)] = 0.0
                break
            l -= 1
        if l == hi:
            w[hi] = h[hi * n + hi]
            hi -= 1
            its = 0
            continue
        if l == hi - 1:
            _eig22(h[l * n + l], h[l * n + hi], h[hi * n + l], h[hi * n + hi],
                   &e1, &e2)
            w[hi] = e1
            w[hi - 1] = e2
            hi -= 2
            its = 0
            continue

        sweeps += 1
        its += 1
        if sweeps > max_sweeps:
            raise RuntimeError(
                f"QR iteration exceeded {max_sweeps} sweeps at block size {hi - l + 1}")

        if its % 10 == 0:
            mu = h[hi * n + hi] + 0.75 * zabs(h[hi * n + (hi - 1)])
        else:
            _eig22(h[(hi - 1) * n + (hi - 1)], h[(hi - 1) * n + hi],
                   h[hi * n + (hi - 1)], h[hi * n + hi], &e1, &e2)
            if zabs(e1 - h[hi * n + hi]) <= zabs(e2 - h[hi * n + hi]):
                mu = e1
            else:
                mu = e2

        for i in range(l, hi + 1):
            h[i * n + i] -= mu
        for i in range(l, hi):
            f = h[i * n + i]
            g = h[(i + 1) * n + i]
            af = zabs(f)
            ag = zabs(g)
            if ag == 0.0:
                c_ = 1.0
                s_ = 0.0
            elif af == 0.0:
                c_ = 0.0
                s_ = g.conjugate() / ag
            else:
                rho = hypot(af, ag)
                c_ = af / rho
                s_ = (f / af) * g.conjugate() / rho
            cs[i - l] = c_
            sn[i - l] = s_
            for j in range(i, hi + 1):
                ti = h[i * n + j]
                tj = h[(i + 1) * n + j]
                h[i * n + j] = c_ * ti + s_ * tj
                h[(i + 1) * n + j] = -s_.conjugate() * ti + c_ * tj
        for i in range(l, hi):
            c_ = cs[i - l]
            s_ = sn[i - l]
            top = i + 2
            if top > hi:
                top = hi
            for j in range(l, top + 1):
                ti = h[j * n + i]
                tj = h[j * n + (i + 1)]
                h[j * n + i] = c_ * ti + s_.conjugate() * tj
                h[j * n + (i + 1)] = -s_ * ti + c_ * tj
        for i in range(l, hi + 1):
            h[i * n + i] += mu
    return w_arr


def rk4_evolve(object h_in, object u0_in, double dt, long n_steps,
               long stride, double amp_cap):
    """Fixed-step RK4 for du/dt = -i*(h @ u) + i*|u|^2*u; see pyref.rk4_evolve."""
    h_arr = np.ascontiguousarray(h_in, dtype=np.complex128)
    u_arr = np.ascontiguousarray(u0_in, dtype=np.complex128)
    cdef Py_ssize_t n = u_arr.shape[0]
    if n > 16 or h_arr.shape[0] != n or h_arr.shape[1] != n:
        raise ValueError("dimension mismatch or n > 16")
    cdef double complex[:, ::1] h_mv = h_arr
    cdef double complex[::1] u0 = u_arr

    cdef Py_ssize_t n_rec_max = n_steps // stride + 2
    times_arr = np.empty(n_rec_max, dtype=np.float64)
    states_arr = np.empty((n_rec_max, n), dtype=np.complex128)
    cdef double[::1] times = times_arr
    cdef double complex[:, ::1] states = states_arr

    cdef double complex H[256]
    cdef double complex u[16]
    cdef double complex ut[16]
    cdef double complex k1[16]
    cdef double complex k2[16]
    cdef double complex k3[16]
    cdef double complex k4[16]
    cdef Py_ssize_t i, j
    cdef long step, n_rec = 1, steps_done = 0
    cdef int status = STATUS_OK
    cdef double amax, aa
    cdef double complex acc

    for i in range(n):
        u[i] = u0[i]
        states[0, i] = u[i]
        for j in range(n):
            H[i * n + j] = h_mv[i, j]
    times[0] = 0.0

    for step in range(1, n_steps + 1):
        _rhs(H, u, k1, n)
        for i in range(n):
            ut[i] = u[i] + (0.5 * dt) * k1[i]
        _rhs(H, ut, k2, n)
        for i in range(n):
            ut[i] = u[i] + (0.5 * dt) * k2[i]
        _rhs(H, ut, k3, n)
        for i in range(n):
            ut[i] = u[i] + dt * k3[i]
        _rhs(H, ut, k4, n)
        for i in range(n):
            u[i] = u[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        steps_done = step
        amax = 0.0
        for i in range(n):
            aa = zabs(u[i])
            if not isfinite(aa):
                amax = aa  # NaN/inf would slip through the > comparison
                break
            if aa > amax:
                amax = aa
        if not isfinite(amax):
            status = STATUS_NAN
            break
        if amax > amp_cap:
            status = STATUS_OVERFLOW
            times[n_rec] = step * dt
            for i in range(n):
                states[n_rec, i] = u[i]
            n_rec += 1
            break
        if step % stride == 0:
            times[n_rec] = step * dt
            for i in range(n):
                states[n_rec, i] = u[i]
            n_rec += 1
    return times_arr[:n_rec], states_arr[:n_rec], status, steps_done


cdef inline void _rhs(double complex* H, double complex* v,
                      double complex* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double complex acc
    cdef double r2
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += H[i * n + j] * v[j]
        r2 = v[i].real * v[i].real + v[i].imag * v[i].imag
        out[i] = -1j * (acc - r2 * v[i])

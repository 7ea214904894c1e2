"""Numba kernels for the hierarchy integrator.

The ladder state is q[(level, 3, 3)] plus the Bloch vector a[3].  Only the
first ``m`` levels are active; deeper levels are exactly zero and the
integrator expands ``m`` whenever the frontier level grows past the
configured floor.  The 3x3 structure of the fixed coupling matrix
(rows/columns 1 and 2 only) is unrolled by hand; loops over levels carry
the O(m^2) ladder convolution.

Everything here is dtype-generic: real ladders run in float64, complex
kernels in complex128, via numba's type specialization.
"""

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _all_finite(a, q, top):
    for i in range(3):
        if not np.isfinite(abs(a[i])):
            return False
    for n in range(top):
        for i in range(3):
            for j in range(3):
                if not np.isfinite(abs(q[n, i, j])):
                    return False
    return True


@njit(cache=True)
def _rhs(a, q, out_a, out_q, p, omega, lam, amp, m, mmax):
    """Hierarchy right-hand side on the active window.

    Levels 0..m-1 receive the full dynamics (with level m treated as the
    truncation edge); the frontier level m, when it exists, receives its
    linear terms so it can grow through the activation floor.  ``p`` is
    scratch for the products (coupling @ q_level).
    """
    top = m + 1 if m < mmax else m
    # p_k = L q_k on all rows we touch
    for n in range(top):
        for j in range(3):
            p[n, 0, j] = 0.0 * q[n, 0, j]
            p[n, 1, j] = -2.0 * q[n, 2, j]
            p[n, 2, j] = 2.0 * q[n, 1, j]
    for n in range(top):
        # commutator with the precession generator and level decay
        c = -(n + 1.0) * lam
        for j in range(3):
            out_q[n, 0, j] = -omega * q[n, 1, j] + c * q[n, 0, j]
            out_q[n, 1, j] = omega * q[n, 0, j] + c * q[n, 1, j]
            out_q[n, 2, j] = c * q[n, 2, j]
        for i in range(3):
            out_q[n, i, 0] -= omega * q[n, i, 1]
            out_q[n, i, 1] += omega * q[n, i, 0]
    # amplitude drive into level 0
    out_q[0, 1, 2] -= 2.0 * amp
    out_q[0, 2, 1] += 2.0 * amp
    # boundary shift amp*[L, q_{n-1}] into levels 1..top-1
    for n in range(1, top):
        for j in range(3):
            out_q[n, 1, j] += amp * p[n - 1, 1, j]
            out_q[n, 2, j] += amp * p[n - 1, 2, j]
        for i in range(3):
            out_q[n, i, 1] -= 2.0 * amp * q[n - 1, i, 2]
            out_q[n, i, 2] += 2.0 * amp * q[n - 1, i, 1]
    # up-coupling (n+1) L q_{n+1} into levels 0..m-2
    for n in range(m - 1):
        for j in range(3):
            out_q[n, 1, j] += (n + 1.0) * p[n + 1, 1, j]
            out_q[n, 2, j] += (n + 1.0) * p[n + 1, 2, j]
    # ladder convolution sum_{k=0}^{n} [p_k, q_{n-k}] on levels 0..m-1
    for n in range(m):
        for k in range(n + 1):
            nk = n - k
            for j in range(3):
                out_q[n, 1, j] += (
                    p[k, 1, 0] * q[nk, 0, j] + p[k, 1, 1] * q[nk, 1, j] + p[k, 1, 2] * q[nk, 2, j]
                )
                out_q[n, 2, j] += (
                    p[k, 2, 0] * q[nk, 0, j] + p[k, 2, 1] * q[nk, 1, j] + p[k, 2, 2] * q[nk, 2, j]
                )
            for i in range(3):
                for j in range(3):
                    out_q[n, i, j] -= q[nk, i, 1] * p[k, 1, j] + q[nk, i, 2] * p[k, 2, j]
    # Bloch vector: (-iH + L q_0) a
    out_a[0] = -omega * a[1]
    out_a[1] = omega * a[0] + p[0, 1, 0] * a[0] + p[0, 1, 1] * a[1] + p[0, 1, 2] * a[2]
    out_a[2] = p[0, 2, 0] * a[0] + p[0, 2, 1] * a[1] + p[0, 2, 2] * a[2]


@njit(cache=True)
def _advance(a, q, m, nsteps, dt, omega, lam, amp, floor):
    """Classic RK4 over nsteps; returns (active levels, bad step or -1)."""
    mmax = q.shape[0]
    p = np.empty_like(q)
    k1a = np.empty_like(a)
    k2a = np.empty_like(a)
    k3a = np.empty_like(a)
    k4a = np.empty_like(a)
    k1q = np.zeros_like(q)
    k2q = np.zeros_like(q)
    k3q = np.zeros_like(q)
    k4q = np.zeros_like(q)
    ya = np.empty_like(a)
    yq = np.zeros_like(q)
    h = dt
    for step in range(nsteps):
        top = m + 1 if m < mmax else m
        _rhs(a, q, k1a, k1q, p, omega, lam, amp, m, mmax)
        for i in range(3):
            ya[i] = a[i] + 0.5 * h * k1a[i]
        for n in range(top):
            for i in range(3):
                for j in range(3):
                    yq[n, i, j] = q[n, i, j] + 0.5 * h * k1q[n, i, j]
        _rhs(ya, yq, k2a, k2q, p, omega, lam, amp, m, mmax)
        for i in range(3):
            ya[i] = a[i] + 0.5 * h * k2a[i]
        for n in range(top):
            for i in range(3):
                for j in range(3):
                    yq[n, i, j] = q[n, i, j] + 0.5 * h * k2q[n, i, j]
        _rhs(ya, yq, k3a, k3q, p, omega, lam, amp, m, mmax)
        for i in range(3):
            ya[i] = a[i] + h * k3a[i]
        for n in range(top):
            for i in range(3):
                for j in range(3):
                    yq[n, i, j] = q[n, i, j] + h * k3q[n, i, j]
        _rhs(ya, yq, k4a, k4q, p, omega, lam, amp, m, mmax)
        for i in range(3):
            a[i] += (h / 6.0) * (k1a[i] + 2.0 * k2a[i] + 2.0 * k3a[i] + k4a[i])
        for n in range(top):
            for i in range(3):
                for j in range(3):
                    q[n, i, j] += (h / 6.0) * (
                        k1q[n, i, j] + 2.0 * k2q[n, i, j] + 2.0 * k3q[n, i, j] + k4q[n, i, j]
                    )
        if not _all_finite(a, q, top):
            return m, step
        if floor > 0.0:
            while m < mmax and np.abs(q[m]).max() > floor:
                m += 1
    return m, -1


@njit(cache=True)
def _shift_value(t, ka, kg, ko):
    """Closed-form accumulated shift v(t) for the exponential kernel."""
    if ko == 0.0 or t == 0.0:
        return 0.0
    den = kg * kg + ko * ko
    return -4.0 * ka * (ko - np.exp(-kg * t) * (ko * np.cos(ko * t) + kg * np.sin(ko * t))) / den


@njit(cache=True)
def _add_shift(a, q, out_a, out_q, v, top):
    """Add the frozen-coupling correction -i[V, .], V = diag(0, v, -v)."""
    out_a[1] += -1j * v * a[1]
    out_a[2] += 1j * v * a[2]
    vv = (0.0, v, -v)
    for n in range(top):
        for i in range(3):
            for j in range(3):
                if i != j:
                    out_q[n, i, j] += -1j * (vv[i] - vv[j]) * q[n, i, j]


@njit(cache=True)
def _advance_freeze(a, q, m, nsteps, dt, t0, omega, lam, amp, floor, ka, kg, ko):
    """RK4 with the time-dependent frozen-coupling shift (complex ladders)."""
    mmax = q.shape[0]
    p = np.empty_like(q)
    k1a = np.empty_like(a)
    k2a = np.empty_like(a)
    k3a = np.empty_like(a)
    k4a = np.empty_like(a)
    k1q = np.zeros_like(q)
    k2q = np.zeros_like(q)
    k3q = np.zeros_like(q)
    k4q = np.zeros_like(q)
    ya = np.empty_like(a)
    yq = np.zeros_like(q)
    h = dt
    for step in range(nsteps):
        t = t0 + step * h
        top = m + 1 if m < mmax else m
        v0 = _shift_value(t, ka, kg, ko)
        vh = _shift_value(t + 0.5 * h, ka, kg, ko)
        v1 = _shift_value(t + h, ka, kg, ko)
        _rhs(a, q, k1a, k1q, p, omega, lam, amp, m, mmax)
        _add_shift(a, q, k1a, k1q, v0, top)
        for i in range(3):
            ya[i] = a[i] + 0.5 * h * k1a[i]
        for n in range(top):
            for i in range(3):
                for j in range(3):
                    yq[n, i, j] = q[n, i, j] + 0.5 * h * k1q[n, i, j]
        _rhs(ya, yq, k2a, k2q, p, omega, lam, amp, m, mmax)
        _add_shift(ya, yq, k2a, k2q, vh, top)
        for i in range(3):
            ya[i] = a[i] + 0.5 * h * k2a[i]
        for n in range(top):
            for i in range(3):
                for j in range(3):
                    yq[n, i, j] = q[n, i, j] + 0.5 * h * k2q[n, i, j]
        _rhs(ya, yq, k3a, k3q, p, omega, lam, amp, m, mmax)
        _add_shift(ya, yq, k3a, k3q, vh, top)
        for i in range(3):
            ya[i] = a[i] + h * k3a[i]
        for n in range(top):
            for i in range(3):
                for j in range(3):
                    yq[n, i, j] = q[n, i, j] + h * k3q[n, i, j]
        _rhs(ya, yq, k4a, k4q, p, omega, lam, amp, m, mmax)
        _add_shift(ya, yq, k4a, k4q, v1, top)
        for i in range(3):
            a[i] += (h / 6.0) * (k1a[i] + 2.0 * k2a[i] + 2.0 * k3a[i] + k4a[i])
        for n in range(top):
            for i in range(3):
                for j in range(3):
                    q[n, i, j] += (h / 6.0) * (
                        k1q[n, i, j] + 2.0 * k2q[n, i, j] + 2.0 * k3q[n, i, j] + k4q[n, i, j]
                    )
        if not _all_finite(a, q, top):
            return m, step
        if floor > 0.0:
            while m < mmax and np.abs(q[m]).max() > floor:
                m += 1
    return m, -1

"""Noiseless Bloch-vector hierarchy for the spin-boson model.

The reduced spin dynamics under an exponentially correlated bath obeys

    dA/dt = (-iH + L Q_0(t)) A,          A = (<sx>, <sy>, <sz>),

where Q_0 is the zeroth rung of a ladder of 3x3 matrices Q_0..Q_N closed
by Q_{N+1} = 0:

    dQ_0/dt = -i[H, Q_0] + [L Q_0, Q_0] - lam Q_0 + a L + L Q_1
    dQ_n/dt = -i[H, Q_n] + sum_{k=0}^{n} [L Q_k, Q_{n-k}]
              - (n+1) lam Q_n + a [L, Q_{n-1}] + (n+1) L Q_{n+1}

with lam = gamma + i*Omega and a the kernel amplitude.  H and L are the
fixed generators

    H = [[0, -i w, 0], [i w, 0, 0], [0, 0, 0]],
    L = [[0, 0, 0], [0, 0, -2], [0, 2, 0]].

All rungs start at zero.  Because each rung is driven through a [L, .]
from the one below and damped at (n+1)*gamma, rung magnitudes fall off
factorially with depth.  The integrator therefore activates rungs lazily:
a rung joins the dynamics once its magnitude would exceed ``conv_floor``
(default 1e-14), which caps the working depth at the rungs that carry
weight (about 14 of them at coupling 0.1, memory 1/0.2) independent of the
requested order.  The floor is a controlled truncation: sub-floor rungs
still back-react on the observables through the factorially growing
down-coupling, so a 1e-14 floor reproduces the full ladder to about 1e-5
in the components and a 1e-30 floor to about 1e-10; set it to 0 to
integrate the full fixed-order ladder.  Deep fixed-order ladders also
carry linearly unstable truncation modes that unstructured rounding (e.g.
an FFT-based convolution) excites explosively; the direct convolution
used here preserves the exact zero pattern of inactive rungs and stays on
the stable manifold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _fast
from .correlations import ExponentialKernel, hamiltonian_shift_v
from .errors import ConfigurationError, IntegrationError
from .series import TimeSeries

CORRECTION_MODES = ("none", "markov-W", "sigma-x-freeze")

COUPLING = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -2.0], [0.0, 2.0, 0.0]])


def hamiltonian_matrix(omega: float) -> np.ndarray:
    """Precession generator H for spin splitting omega."""
    h = np.zeros((3, 3), complex)
    h[0, 1] = -1j * omega
    h[1, 0] = 1j * omega
    return h


def shift_matrix(v: float) -> np.ndarray:
    """Frozen-coupling correction V = diag(0, v, -v)."""
    return np.diag([0.0, v, -v])


@dataclass(frozen=True)
class SystemSpec:
    """Spin splitting, bath kernel, initial Bloch vector and correction mode."""

    omega: float
    kernel: ExponentialKernel
    a0: tuple = (0.0, 0.0, 1.0)
    correction: str = "none"

    def __post_init__(self):
        a0 = np.asarray(self.a0)
        if a0.shape != (3,):
            raise ConfigurationError("initial Bloch vector must have 3 components")
        if np.linalg.norm(a0) > 1.0 + 1e-9:
            raise ConfigurationError(f"initial Bloch vector has norm {np.linalg.norm(a0):.6f} > 1")
        if self.correction not in CORRECTION_MODES:
            raise ConfigurationError(
                f"unknown correction mode {self.correction!r}; expected one of {CORRECTION_MODES}"
            )
        if self.correction == "none" and self.kernel.modulation != 0.0:
            raise ConfigurationError(
                "correction mode 'none' requires a real kernel (modulation 0); "
                "use 'markov-W' or 'sigma-x-freeze' for complex kernels"
            )

    @property
    def a0_array(self) -> np.ndarray:
        return np.asarray(self.a0, dtype=complex)


@dataclass
class HierarchyState:
    """Stacked integration state: time, Bloch vector, ladder rungs."""

    t: float
    a: np.ndarray          # (3,) complex
    q: np.ndarray          # (order+1, 3, 3) complex

    @classmethod
    def initial(cls, a0, order: int) -> "HierarchyState":
        if order < 0:
            raise ConfigurationError(f"hierarchy order must be >= 0, got {order}")
        a = np.asarray(a0, dtype=complex).copy()
        return cls(t=0.0, a=a, q=np.zeros((order + 1, 3, 3), complex))

    @property
    def order(self) -> int:
        return self.q.shape[0] - 1


def hierarchy_rhs(state: HierarchyState, sys: SystemSpec):
    """Reference right-hand side (dA, dQ) for the full stacked state.

    Plain numpy, full ladder convolution, no activation floor.  The fast
    integrator is checked against this in the tests.
    """
    if state.q.ndim != 3 or state.q.shape[1:] != (3, 3):
        raise ConfigurationError("ladder must have shape (order+1, 3, 3)")
    k = sys.kernel
    lam = k.decay + 1j * k.modulation
    amp = k.amplitude
    ll = COUPLING
    h = hamiltonian_matrix(sys.omega)
    if sys.correction == "sigma-x-freeze":
        h = h + shift_matrix(hamiltonian_shift_v(k, state.t))
    q = state.q
    m = q.shape[0]
    p = ll @ q
    dq = -1j * (h @ q - q @ h)
    dq -= (np.arange(1, m + 1)[:, None, None] * lam) * q
    for n in range(m):
        for kk in range(n + 1):
            pk, qm = p[kk], q[n - kk]
            dq[n] += pk @ qm - qm @ pk
    dq[0] += amp * ll
    if m > 1:
        dq[1:] += amp * (ll @ q[:-1] - q[:-1] @ ll)
        dq[:-1] += np.arange(1.0, m)[:, None, None] * p[1:]
    da = (-1j * h + p[0]) @ state.a
    return da, dq


def _rhs_windowed(a, q, omega, lam, amp, m, vshift):
    """Numpy fallback mirroring the fast kernel's active-window semantics."""
    mmax = q.shape[0]
    top = m + 1 if m < mmax else m
    ll = COUPLING.astype(q.dtype)
    qw = q[:top]
    p = ll @ qw
    r = np.zeros((3, 3), dtype=q.dtype)
    r[0, 1] = -omega
    r[1, 0] = omega
    dq = np.zeros_like(q)
    dq[:top] = r @ qw - qw @ r
    dq[:top] -= (np.arange(1, top + 1)[:, None, None] * lam) * qw
    conv = np.zeros((m, 3, 3), dtype=q.dtype)
    for n in range(m):
        for kk in range(n + 1):
            pk, qm = p[kk], q[n - kk]
            conv[n] += pk @ qm - qm @ pk
    dq[:m] += conv
    dq[0] += amp * ll
    if top > 1:
        dq[1:top] += amp * (p[: top - 1] - qw[: top - 1] @ ll)
    if m > 1:
        dq[: m - 1] += np.arange(1.0, m)[:, None, None] * p[1:m]
    da = r @ a + p[0] @ a
    if vshift != 0.0:
        vv = np.array([0.0, vshift, -vshift])
        da = da + (-1j * vv) * a
        mask = -1j * (vv[:, None] - vv[None, :])
        dq[:top] += mask * qw
    return da, dq


def _advance_numpy(a, q, m, nsteps, dt, t0, omega, lam, amp, floor, freeze, kernel):
    """Pure-numpy RK4 fallback with identical stepping semantics."""
    mmax = q.shape[0]
    for step in range(nsteps):
        t = t0 + step * dt
        if freeze:
            v0 = hamiltonian_shift_v(kernel, t)
            vh = hamiltonian_shift_v(kernel, t + 0.5 * dt)
            v1 = hamiltonian_shift_v(kernel, t + dt)
        else:
            v0 = vh = v1 = 0.0
        k1a, k1q = _rhs_windowed(a, q, omega, lam, amp, m, v0)
        k2a, k2q = _rhs_windowed(a + 0.5 * dt * k1a, q + 0.5 * dt * k1q, omega, lam, amp, m, vh)
        k3a, k3q = _rhs_windowed(a + 0.5 * dt * k2a, q + 0.5 * dt * k2q, omega, lam, amp, m, vh)
        k4a, k4q = _rhs_windowed(a + dt * k3a, q + dt * k3q, omega, lam, amp, m, v1)
        a += (dt / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a)
        q += (dt / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
        if not (np.all(np.isfinite(a.real)) and np.all(np.isfinite(np.abs(q[: min(m + 1, mmax)])))):
            return m, step
        if floor > 0.0:
            while m < mmax and np.abs(q[m]).max() > floor:
                m += 1
    return m, -1


@dataclass
class Q0Series:
    """Zeroth ladder rung sampled on a uniform time grid."""

    t: np.ndarray          # (n,)
    q0: np.ndarray         # (n, 3, 3)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0


def _plan_steps(dt: float, t_max: float):
    if dt <= 0 or not np.isfinite(dt):
        raise ConfigurationError(f"step size must be positive, got {dt}")
    if t_max < 0 or not np.isfinite(t_max):
        raise ConfigurationError(f"horizon must be >= 0, got {t_max}")
    n_full = int(np.floor(t_max / dt + 1e-9))
    rem = t_max - n_full * dt
    if rem < 1e-12 * max(1.0, t_max):
        rem = 0.0
    return n_full, rem


class _Integrator:
    """Shared stepping engine for propagate and q0_series."""

    def __init__(self, sys: SystemSpec, order: int, dt: float, conv_floor: float,
                 force_complex: bool):
        if order < 0:
            raise ConfigurationError(f"hierarchy order must be >= 0, got {order}")
        self.sys = sys
        self.dt = dt
        k = sys.kernel
        self.freeze = sys.correction == "sigma-x-freeze" and k.modulation != 0.0
        a0 = np.asarray(sys.a0, dtype=complex)
        real_ok = (
            k.modulation == 0.0
            and not self.freeze
            and np.all(a0.imag == 0.0)
            and not force_complex
        )
        self.dtype = np.float64 if real_ok else np.complex128
        self.a = np.ascontiguousarray(a0.real if real_ok else a0, dtype=self.dtype)
        self.q = np.zeros((order + 1, 3, 3), dtype=self.dtype)
        self.lam = self.dtype(k.decay + (0.0 if real_ok else 1j * k.modulation))
        self.amp = k.amplitude
        self.floor = conv_floor
        self.m = (order + 1) if conv_floor <= 0 else 1
        self.t = 0.0
        self._steps = 0
        self.max_imag = 0.0

    def advance(self, nsteps: int):
        if nsteps <= 0:
            return
        if _fast.HAVE_NUMBA:
            if self.freeze:
                k = self.sys.kernel
                self.m, bad = _fast._advance_freeze(
                    self.a, self.q, self.m, nsteps, self.dt, self.t, self.sys.omega,
                    self.lam, self.amp, self.floor, k.amplitude, k.decay, k.modulation,
                )
            else:
                self.m, bad = _fast._advance(
                    self.a, self.q, self.m, nsteps, self.dt, self.sys.omega,
                    self.lam, self.amp, self.floor,
                )
        else:
            self.m, bad = _advance_numpy(
                self.a, self.q, self.m, nsteps, self.dt, self.t, self.sys.omega,
                self.lam, self.amp, self.floor, self.freeze, self.sys.kernel,
            )
        if bad >= 0:
            t_bad = self.t + (bad + 1) * self.dt
            raise IntegrationError(
                f"hierarchy integration produced non-finite values at t = {t_bad:.6g} "
                f"(order {self.q.shape[0] - 1}, dt = {self.dt:g}); "
                "reduce dt or the hierarchy order"
            )
        self._steps += nsteps
        self.t = self._steps * self.dt  # product, not accumulation: no drift
        if self.dtype == np.complex128:
            imag = max(float(np.abs(self.a.imag).max()),
                       float(np.abs(self.q[: self.m].imag).max()) if self.m else 0.0)
            self.max_imag = max(self.max_imag, imag)

    def step_to(self, t_target: float):
        """One short final step landing exactly on t_target."""
        rem = t_target - self.t
        saved = self.dt
        self.dt = rem
        try:
            self.advance(1)
        finally:
            self.dt = saved
            self._steps -= 1  # the short step is excluded from the product clock
        self.t = t_target


def propagate(sys: SystemSpec, order: int, dt: float, t_max: float, *,
              stride: int = 1, conv_floor: float = 1e-14,
              force_complex: bool = False) -> TimeSeries:
    """Integrate the hierarchy and return the Bloch-vector time series.

    Classic fixed-step RK4 on the stacked state, emitting every ``stride``
    steps plus a final record exactly at t_max.  Deterministic for given
    inputs.  ``conv_floor`` is the rung-activation floor (<= 0 disables
    adaptive activation and integrates the full fixed-order ladder, which
    can be dynamically unstable for deep ladders at strong coupling).
    Real kernels with real initial vectors integrate in real arithmetic;
    ``force_complex`` routes them through the complex path instead (used
    for diagnostics).
    """
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    n_full, rem = _plan_steps(dt, t_max)
    eng = _Integrator(sys, order, dt, conv_floor, force_complex)
    ts = [0.0]
    out = [eng.a.astype(complex).copy()]
    done = 0
    while done < n_full:
        chunk = min(stride, n_full - done)
        eng.advance(chunk)
        done += chunk
        ts.append(eng.t)
        out.append(eng.a.astype(complex).copy())
    if rem > 0.0:
        eng.step_to(t_max)
        ts.append(t_max)
        out.append(eng.a.astype(complex).copy())
    elif n_full > 0:
        ts[-1] = t_max  # land the final record exactly on the requested horizon
    arr = np.array(out)
    meta = {
        "solver": "hierarchy-rk4",
        "order": order,
        "dt": dt,
        "stride": stride,
        "conv_floor": conv_floor,
        "active_levels": int(eng.m),
        "max_imag": float(max(eng.max_imag, np.abs(arr.imag).max())),
        "correction": sys.correction,
    }
    return TimeSeries(
        t=np.array(ts), sx=arr[:, 0].real, sy=arr[:, 1].real, sz=arr[:, 2].real, meta=meta
    )


def q0_series(sys: SystemSpec, order: int, dt: float, t_max: float, *,
              conv_floor: float = 1e-14) -> Q0Series:
    """Record Q_0(t) on every step of a hierarchy run (for the trajectory solver)."""
    n_full, rem = _plan_steps(dt, t_max)
    if rem > 0.0:
        raise ConfigurationError("q0_series requires t_max to be a multiple of dt")
    eng = _Integrator(sys, order, dt, conv_floor, force_complex=False)
    q0 = np.empty((n_full + 1, 3, 3), complex)
    q0[0] = eng.q[0]
    for i in range(n_full):
        eng.advance(1)
        q0[i + 1] = eng.q[0]
    return Q0Series(t=np.arange(n_full + 1) * dt, q0=q0)


def markov_limit_reference(strength: float, omega: float, a0, t):
    """Closed-form short-memory limit: dA/dt = (-iH + (strength/2) L^2) A.

    Adiabatic elimination of the ladder at decay >> all other rates gives
    Q_0 -> (strength/2) L, so the x-y block obeys a damped rotation and the
    z component decays at 2*strength.  Handles under-, over- and critically
    damped cases through the complex square root.
    """
    tarr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tarr < 0):
        raise ConfigurationError("reference times must be >= 0")
    a0 = np.asarray(a0, dtype=float)
    g = float(strength)
    out = np.empty((len(tarr), 3))
    out[:, 2] = a0[2] * np.exp(-2.0 * g * tarr)
    # x-y block: B = -g I + C with C = [[g, -w], [w, -g]], C^2 = (g^2 - w^2) I
    mu = np.sqrt(complex(g * g - omega * omega))
    ch = np.cosh(mu * tarr)
    if abs(mu) > 1e-30:
        sh = np.sinh(mu * tarr) / mu
    else:
        sh = tarr * (1.0 + (mu * tarr) ** 2 / 6.0)
    e = np.exp(-g * tarr)
    xy0 = a0[:2]
    out[:, 0] = (e * (ch * xy0[0] + sh * (g * xy0[0] - omega * xy0[1]))).real
    out[:, 1] = (e * (ch * xy0[1] + sh * (omega * xy0[0] - g * xy0[1]))).real
    return out if np.ndim(t) else out[0]

"""Monte Carlo trajectories of the time-local colored-noise Bloch equation.

Each trajectory integrates

    dA/dt = [-iH + L z(t) + L Q_0(t)] A

driven by a complex Gaussian process with covariance
E[z(t) conj(z(s))] = alpha(t - s) and E[z(t) z(s)] = 0.  Because the
equation is linear and depends on z only (never on conj z), the ensemble
mean obeys the noiseless hierarchy solution for the same Q_0, which is
what the ensemble tests verify.

Noise paths come from a dense Cholesky factorization of the covariance on
a uniform grid (hard cap 10^4 points; longer horizons use a coarser noise
grid and linear interpolation onto the integration grid).  Trajectory k of
a run draws its numpy generator seed from splitmix64(seed + k), so any
subset of trajectories is reproducible in isolation and ensembles can be
computed in parallel; partial sums are accumulated per fixed-size batch in
index order, keeping parallel and serial means bit-identical.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .correlations import eval_kernel
from .errors import ConfigurationError, KernelError
from .hierarchy import COUPLING, Q0Series, SystemSpec, hamiltonian_matrix, q0_series
from .series import TimeSeries

MAX_NOISE_POINTS = 10_000

_MASK = (1 << 64) - 1


def _mix64(x: int) -> int:
    """splitmix64 finalizer; the documented master-seed -> sub-seed map."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def sub_seed(seed: int, index: int) -> int:
    """Per-trajectory generator seed for trajectory ``index`` of a run."""
    return _mix64((int(seed) + int(index)) & _MASK)


@dataclass
class NoisePath:
    """One discretized complex Gaussian path with its generator seed."""

    t: np.ndarray
    z: np.ndarray
    seed: int

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


def _check_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise ConfigurationError("noise grid must be a 1-d array with at least 2 points")
    if len(grid) > MAX_NOISE_POINTS:
        raise ConfigurationError(
            f"noise grid has {len(grid)} points; the dense covariance factorization "
            f"is capped at {MAX_NOISE_POINTS} (use a coarser noise grid)"
        )
    d = np.diff(grid)
    if d[0] <= 0 or np.abs(d - d[0]).max() > 1e-9 * d[0]:
        raise ConfigurationError("noise grid must be uniform and increasing")
    return grid


def noise_factor(kernel, grid) -> np.ndarray:
    """Cholesky factor F of the covariance C_ij = alpha(t_i - t_j).

    Retries once with the documented diagonal jitter of 1e-12 before
    declaring the kernel unusable.
    """
    grid = _check_grid(grid)
    cov = eval_kernel(kernel, grid[:, None] - grid[None, :])
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(cov + 1e-12 * np.eye(len(grid)))
    except np.linalg.LinAlgError as exc:
        raise KernelError(
            "noise covariance is not positive semidefinite beyond 1e-12 jitter; "
            "the kernel does not define a valid Gaussian process on this grid"
        ) from exc


def _draw_batch(factor: np.ndarray, seeds) -> np.ndarray:
    """(len(seeds), n) complex paths; each row from its own seeded generator."""
    n = factor.shape[0]
    u = np.empty((len(seeds), n), complex)
    for row, s in enumerate(seeds):
        rng = np.random.Generator(np.random.PCG64(s))
        u[row] = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    return u @ factor.T


def generate_noise(kernel, grid, seed: int) -> NoisePath:
    """Draw one path of the kernel's Gaussian process on the given grid."""
    grid = _check_grid(grid)
    factor = noise_factor(kernel, grid)
    z = _draw_batch(factor, [sub_seed(seed, 0)])[0]
    return NoisePath(t=grid, z=z, seed=int(seed))


def _interp_columns(tsrc, zsrc, tdst):
    """Linear interpolation of complex rows zsrc(t) onto tdst (vectorized)."""
    idx = np.clip(np.searchsorted(tsrc, tdst, side="right") - 1, 0, len(tsrc) - 2)
    w = (tdst - tsrc[idx]) / (tsrc[idx + 1] - tsrc[idx])
    w = np.clip(w, 0.0, 1.0)
    return zsrc[..., idx] * (1.0 - w) + zsrc[..., idx + 1] * w


def _integrate_batch(sys: SystemSpec, zhalf: np.ndarray, q0: Q0Series) -> np.ndarray:
    """RK4 for a batch of trajectories on the half-step grid of q0.

    zhalf has shape (batch, len(q0.t)); returns (batch, n_out, 3) complex
    with n_out = (len(q0.t) + 1) // 2 output nodes (every other half-step).
    """
    nh = len(q0.t)
    nsteps = (nh - 1) // 2
    h = 2.0 * q0.dt
    mh = -1j * hamiltonian_matrix(sys.omega)
    ll = COUPLING.astype(complex)
    gen = mh[None, :, :] + ll[None, :, :] @ q0.q0  # (nh, 3, 3) drift at half nodes
    genT = np.ascontiguousarray(gen.transpose(0, 2, 1))
    llT = np.ascontiguousarray(ll.T)
    batch = zhalf.shape[0]
    a = np.tile(np.asarray(sys.a0, complex), (batch, 1))
    out = np.empty((batch, nsteps + 1, 3), complex)
    out[:, 0] = a
    for i in range(nsteps):
        i0, ih, i1 = 2 * i, 2 * i + 1, 2 * i + 2
        la = a @ llT
        k1 = a @ genT[i0] + zhalf[:, i0, None] * la
        y = a + (0.5 * h) * k1
        k2 = y @ genT[ih] + zhalf[:, ih, None] * (y @ llT)
        y = a + (0.5 * h) * k2
        k3 = y @ genT[ih] + zhalf[:, ih, None] * (y @ llT)
        y = a + h * k3
        k4 = y @ genT[i1] + zhalf[:, i1, None] * (y @ llT)
        a = a + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[:, i + 1] = a
    return out


def _check_q0_grid(q0: Q0Series):
    if len(q0.t) < 3 or (len(q0.t) - 1) % 2 != 0:
        raise ConfigurationError(
            "q0 series must sample an even number of intervals (integration "
            "nodes plus midpoints); build it with q0_series at half the "
            "trajectory step"
        )
    d = np.diff(q0.t)
    if np.abs(d - d[0]).max() > 1e-9 * d[0]:
        raise ConfigurationError("q0 series grid must be uniform")


def trajectory(sys: SystemSpec, path: NoisePath, q0: Q0Series) -> TimeSeries:
    """Integrate one stochastic trajectory.

    The q0 series supplies the drift on integration nodes and midpoints
    (its grid spacing is half the RK4 step).  The noise path must cover
    the q0 horizon; its values are interpolated linearly between its grid
    points.  Returns complex component series (the imaginary parts are a
    sampling diagnostic; they average to zero over the ensemble).
    """
    _check_q0_grid(q0)
    if path.t[0] > q0.t[0] + 1e-12 or path.t[-1] < q0.t[-1] - 1e-9:
        raise ConfigurationError(
            f"noise path covers [{path.t[0]:g}, {path.t[-1]:g}] but the q0 series "
            f"needs [{q0.t[0]:g}, {q0.t[-1]:g}]"
        )
    zhalf = _interp_columns(path.t, path.z[None, :], q0.t)
    a = _integrate_batch(sys, zhalf, q0)[0]
    tout = q0.t[::2]
    return TimeSeries(
        t=tout, sx=a[:, 0], sy=a[:, 1], sz=a[:, 2],
        meta={"solver": "stochastic-trajectory", "seed": path.seed,
              "max_imag": float(np.abs(a.imag).max())},
    )


def ensemble_mean(sys: SystemSpec, order: int, n_traj: int, seed: int, dt: float,
                  t_max: float, *, noise_dt: float | None = None,
                  batch_size: int = 500, workers: int = 1) -> TimeSeries:
    """Mean Bloch vector over independent trajectories, with standard errors.

    Q_0(t) comes from a hierarchy run at the matching order.  Trajectory k
    draws its noise from sub_seed(seed, k); identical (seed, n_traj) give
    bit-identical statistics regardless of ``workers`` because batch
    partial sums are reduced in batch order.

    Standard errors apply to the real parts (the reported components); the
    largest absolute imaginary ensemble mean is kept as a diagnostic in
    ``meta['max_imag_mean']``.
    """
    if n_traj < 1:
        raise ConfigurationError(f"need at least one trajectory, got {n_traj}")
    nsteps = int(round(t_max / dt))
    if abs(nsteps * dt - t_max) > 1e-9 * max(1.0, t_max):
        raise ConfigurationError("t_max must be a multiple of dt for ensemble runs")
    if noise_dt is None:
        factor = int(np.ceil((nsteps + 1) / MAX_NOISE_POINTS))
        noise_dt = dt * factor
    nnoise = int(round(t_max / noise_dt))
    if abs(nnoise * noise_dt - t_max) > 1e-9 * max(1.0, t_max):
        raise ConfigurationError("t_max must be a multiple of noise_dt")
    tnoise = np.arange(nnoise + 1) * noise_dt
    factor = noise_factor(sys.kernel, tnoise)
    q0 = q0_series(sys, order, dt / 2.0, t_max)
    nout = nsteps + 1
    starts = list(range(0, n_traj, batch_size))

    def run_batch(start: int):
        seeds = [sub_seed(seed, k) for k in range(start, min(start + batch_size, n_traj))]
        z = _draw_batch(factor, seeds)
        zhalf = _interp_columns(tnoise, z, q0.t)
        a = _integrate_batch(sys, zhalf, q0)
        return a.sum(axis=0), (a.real**2).sum(axis=0), a.real.sum(axis=0)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_batch, starts))
    else:
        results = [run_batch(s) for s in starts]

    tot = np.zeros((nout, 3), complex)
    tot_sq = np.zeros((nout, 3))
    tot_re = np.zeros((nout, 3))
    for s, sq, re in results:
        tot += s
        tot_sq += sq
        tot_re += re
    mean = tot / n_traj
    if n_traj > 1:
        var = (tot_sq - n_traj * (tot_re / n_traj) ** 2) / (n_traj - 1)
        se = np.sqrt(np.maximum(var, 0.0) / n_traj)
    else:
        se = np.full((nout, 3), np.nan)
    return TimeSeries(
        t=q0.t[::2],
        sx=mean[:, 0].real, sy=mean[:, 1].real, sz=mean[:, 2].real,
        se=se,
        meta={
            "solver": "stochastic-ensemble", "n_traj": n_traj, "seed": int(seed),
            "order": order, "dt": dt, "noise_dt": float(noise_dt),
            "max_imag_mean": float(np.abs(mean.imag).max()),
        },
    )

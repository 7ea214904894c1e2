"""Brute-force reference dynamics: spin + discretized bath, full Hilbert space.

The bath is replaced by a finite set of modes whose kernel
sum_k g_k^2 exp(-i w_k tau) reproduces the target correlation function on
the requested horizon; the reconstruction error is measured and attached.
Mode frequencies and positive weights come from a nonnegative
least-squares fit on a dense symmetric candidate grid.  A plain uniform
sampling of the Lorentzian spectral density S(w) cannot reach the quality
gate at small mode counts (the resolution/tail trade-off floors its sup
error near 3% of the zero-lag value at 64 modes), while the fit lands
around 1%; both represent the same mathematical object, a positive
quadrature of the spectral density.

The full Schroedinger evolution runs in the number basis truncated at a
total excitation count, propagated by a fixed-step Lanczos (Krylov)
integrator, which is unitary to machine precision per step.  Matrix
elements are real, so the Hamiltonian is stored as a float64 sparse
matrix and applied separately to the real and imaginary parts of the
state.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import nnls

from .correlations import ExponentialKernel, eval_kernel
from .errors import ConfigurationError, DiscretizationError, IntegrationError
from .series import TimeSeries


@dataclass(frozen=True)
class BathDiscretization:
    """Finite-mode bath: frequencies, couplings, and its quality report."""

    omegas: np.ndarray          # (M,) mode angular frequencies (either sign)
    couplings: np.ndarray       # (M,) real couplings g_k >= 0
    cutoff: int                 # max total excitation number of the Fock basis
    t_max: float                # horizon the kernel was fit on (validity window)
    recon_error: float          # sup_{[0, t_max]} |sum g^2 e^{-iw tau} - alpha|
    meta: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return len(self.omegas)

    def kernel_sum(self, lag):
        tau = np.atleast_1d(np.asarray(lag, float))
        g2 = self.couplings**2
        out = g2 @ np.exp(-1j * np.outer(self.omegas, tau))
        return complex(out[0]) if np.isscalar(lag) else out


def discretize(kernel: ExponentialKernel, n_modes: int, t_max: float, *,
               cutoff: int = 3, candidate_span: float | None = None,
               n_candidates: int | None = None) -> BathDiscretization:
    """Fit a positive-weight mode set to the kernel on [0, t_max].

    Candidates sit on a dense uniform grid of width ``candidate_span``
    (default 50/width on either side of the modulation frequency, wide
    enough that the spectral tails carry negligible weight); nonnegative
    least squares selects the weights, and the result is restricted to the
    ``n_modes`` strongest modes with a refit.  Raises DiscretizationError
    when the reconstruction misses the 5% quality gate.
    """
    if n_modes < 2:
        raise ConfigurationError(f"need at least 2 modes, got {n_modes}")
    if t_max <= 0:
        raise ConfigurationError("discretization horizon must be positive")
    a = kernel.amplitude
    span = candidate_span if candidate_span is not None else 50.0 * kernel.decay
    ncand = n_candidates if n_candidates is not None else max(8 * n_modes, 512)
    cand = kernel.modulation + np.linspace(-span, span, ncand)
    tau = np.linspace(0.0, t_max, 601)
    target = eval_kernel(kernel, tau)
    basis = np.exp(-1j * np.outer(tau, cand))
    design = np.vstack([basis.real, basis.imag])
    rhs = np.concatenate([target.real, target.imag])
    g2, _ = nnls(design, rhs)
    support = np.nonzero(g2)[0]
    if len(support) > n_modes:
        keep = support[np.argsort(g2[support])[-n_modes:]]
        keep.sort()
        g2_fit, _ = nnls(design[:, keep], rhs)
        sel = g2_fit > 0
        omegas, weights = cand[keep][sel], g2_fit[sel]
    else:
        omegas, weights = cand[support], g2[support]
    fine = np.linspace(0.0, t_max, 2001)
    rec = weights @ np.exp(-1j * np.outer(omegas, fine))
    err = float(np.abs(rec - eval_kernel(kernel, fine)).max())
    disc = BathDiscretization(
        omegas=omegas, couplings=np.sqrt(weights), cutoff=cutoff, t_max=t_max,
        recon_error=err,
        meta={"scheme": "nnls", "n_requested": n_modes, "candidate_span": span},
    )
    if err > 0.05 * a:
        raise DiscretizationError(
            f"kernel reconstruction error {err:.3e} exceeds 5% of the zero-lag "
            f"value {a:g}; increase the mode count (got {n_modes})"
        )
    return disc


def with_cutoff(disc: BathDiscretization, cutoff: int) -> BathDiscretization:
    return dataclasses.replace(disc, cutoff=cutoff)


def _count_table(n_modes: int, cutoff: int) -> np.ndarray:
    """T[m, c] = number of occupation vectors of m modes with total <= c."""
    t = np.ones((n_modes + 1, cutoff + 1), dtype=np.int64)
    for m in range(1, n_modes + 1):
        for c in range(1, cutoff + 1):
            t[m, c] = t[m - 1, c] + t[m, c - 1]
    return t


def enumerate_states(n_modes: int, cutoff: int) -> np.ndarray:
    """All occupation vectors with total excitation <= cutoff, in lex order."""
    cache: dict = {}

    def block(m: int, c: int) -> np.ndarray:
        if m == 0:
            return np.zeros((1, 0), dtype=np.uint8)
        key = (m, c)
        if key not in cache:
            parts = []
            for v in range(c + 1):
                sub = block(m - 1, c - v)
                head = np.full((len(sub), 1), v, dtype=np.uint8)
                parts.append(np.hstack([head, sub]))
            cache[key] = np.vstack(parts)
        return cache[key]

    return block(n_modes, cutoff).copy()


def rank_states(states: np.ndarray, cutoff: int, table: np.ndarray) -> np.ndarray:
    """Lexicographic rank of each occupation vector (inverse of enumerate)."""
    b = np.asarray(states, dtype=np.int64)
    n_modes = b.shape[1]
    prefix = np.concatenate([np.zeros((len(b), 1), np.int64), np.cumsum(b, axis=1)[:, :-1]], axis=1)
    budget = cutoff - prefix
    m_rem = n_modes - np.arange(n_modes)  # T index for "modes after k", +1 folded in
    rank = np.zeros(len(b), dtype=np.int64)
    for k in range(n_modes):
        rank += table[m_rem[k], budget[:, k]] - table[m_rem[k], budget[:, k] - b[:, k]]
    return rank


def _lowering_matrix(states: np.ndarray, omegas, couplings, cutoff: int):
    """A = sum_k g_k a_k in the truncated number basis (real CSR)."""
    ns = len(states)
    table = _count_table(states.shape[1], cutoff)
    rows, cols, vals = [], [], []
    for k in range(states.shape[1]):
        occ = states[:, k]
        src = np.nonzero(occ)[0]
        if len(src) == 0:
            continue
        tgt_states = states[src].copy()
        tgt_states[:, k] -= 1
        tgt = rank_states(tgt_states, cutoff, table)
        rows.append(tgt)
        cols.append(src)
        vals.append(couplings[k] * np.sqrt(occ[src].astype(float)))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ns, ns))


def build_hamiltonian(disc: BathDiscretization, omega: float, *,
                      rotating_wave: bool = False):
    """Sparse real H and the per-state bath excitation counts.

    Returns (H, n_tot) with H over the spin (x) Fock product space, spin
    index 0 = up.  With ``rotating_wave`` the excitation-non-conserving
    coupling terms are dropped.
    """
    states = enumerate_states(disc.n_modes, disc.cutoff)
    ns = len(states)
    ebath = states.astype(float) @ disc.omegas
    n_tot = states.sum(axis=1).astype(float)
    lower = _lowering_matrix(states, disc.omegas, disc.couplings, disc.cutoff)
    eye2 = sp.identity(2, format="csr")
    sz = sp.csr_matrix(np.diag([1.0, -1.0]))
    h = sp.kron(eye2, sp.diags(ebath), "csr") + 0.5 * omega * sp.kron(sz, sp.identity(ns), "csr")
    if rotating_wave:
        sp_up = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
        h = h + sp.kron(sp_up, lower, "csr") + sp.kron(sp_up.T, lower.T, "csr")
    else:
        sx = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        h = h + sp.kron(sx, lower + lower.T, "csr")
    return h, n_tot


def _real_matvec(h, psi):
    return h @ psi.real + 1j * (h @ psi.imag)


def _lanczos_step(h, psi, dt, kdim, v_buf):
    """One Krylov step exp(-i dt H) psi; unitary up to orthogonality loss."""
    alphas = np.empty(kdim)
    betas = np.empty(kdim)
    nrm = np.linalg.norm(psi)
    v_buf[0] = psi / nrm
    k_used = kdim
    for j in range(kdim):
        w = _real_matvec(h, v_buf[j])
        if j > 0:
            w -= betas[j - 1] * v_buf[j - 1]
        alphas[j] = np.vdot(v_buf[j], w).real
        w -= alphas[j] * v_buf[j]
        b = np.linalg.norm(w)
        betas[j] = b
        if b < 1e-14:
            k_used = j + 1
            break
        v_buf[j + 1] = w / b
    k = k_used
    evals, evecs = eigh_tridiagonal(alphas[:k], betas[: k - 1])
    coeff = evecs @ (np.exp(-1j * dt * evals) * evecs[0, :])
    return nrm * (coeff @ v_buf[:k])


def evolve_exact(disc: BathDiscretization, omega: float, t_max: float, *,
                 dt: float = 0.05, stride: int = 1, psi0_spin=(1.0, 0.0),
                 krylov_dim: int = 12, rotating_wave: bool = False,
                 max_dim: int = 2_000_000, norm_tol: float = 1e-6) -> TimeSeries:
    """Propagate spin (x) bath from a product state with the bath in vacuum.

    Emits the spin expectation values every ``stride`` steps together with
    the combined excitation number <N_bath + (sz+1)/2> (meta key
    ``total_excitation``) and the worst norm drift.  Norm drift beyond
    ``norm_tol`` raises IntegrationError.
    """
    if dt <= 0 or t_max < 0:
        raise ConfigurationError("need dt > 0 and t_max >= 0")
    states = enumerate_states(disc.n_modes, disc.cutoff)
    ns = len(states)
    dim = 2 * ns
    if dim > max_dim:
        raise ConfigurationError(
            f"Hilbert dimension {dim} exceeds the configured bound {max_dim}; "
            "lower the cutoff or mode count"
        )
    spin = np.asarray(psi0_spin, complex)
    if spin.shape != (2,):
        raise ConfigurationError("psi0_spin must have 2 components")
    nrm = np.linalg.norm(spin)
    if abs(nrm - 1.0) > 1e-9:
        raise ConfigurationError("initial spin state must be normalized")
    h, n_tot = build_hamiltonian(disc, omega, rotating_wave=rotating_wave)
    psi = np.zeros(dim, complex)
    psi[0] = spin[0]          # vacuum is the first basis state (lex order)
    psi[ns] = spin[1]
    kdim = min(krylov_dim, dim)
    v_buf = np.empty((kdim + 1, dim), complex)
    nsteps = int(np.ceil(t_max / dt - 1e-9)) if t_max > 0 else 0

    def observe(p):
        up, down = p[:ns], p[ns:]
        cross = np.vdot(up, down)
        pop_up = float(np.vdot(up, up).real)
        pop_dn = float(np.vdot(down, down).real)
        sxv = 2.0 * cross.real
        syv = 2.0 * cross.imag
        szv = pop_up - pop_dn
        nexc = float(n_tot @ (np.abs(up) ** 2 + np.abs(down) ** 2)) + pop_up
        return sxv, syv, szv, nexc, pop_up + pop_dn

    ts, sxs, sys_, szs, nexcs = [0.0], [], [], [], []
    sxv, syv, szv, nexc, _ = observe(psi)
    sxs.append(sxv); sys_.append(syv); szs.append(szv); nexcs.append(nexc)
    drift = 0.0
    t = 0.0
    for step in range(nsteps):
        h_step = min(dt, t_max - t)
        psi = _lanczos_step(h, psi, h_step, kdim, v_buf)
        t += h_step
        if (step + 1) % stride == 0 or step == nsteps - 1:
            sxv, syv, szv, nexc, norm2 = observe(psi)
            drift = max(drift, abs(np.sqrt(norm2) - 1.0))
            ts.append(t)
            sxs.append(sxv); sys_.append(syv); szs.append(szv); nexcs.append(nexc)
    if drift > norm_tol:
        raise IntegrationError(
            f"state norm drifted by {drift:.3e} (> {norm_tol:g}); "
            "reduce dt or increase krylov_dim"
        )
    return TimeSeries(
        t=np.array(ts), sx=np.array(sxs), sy=np.array(sys_), sz=np.array(szs),
        meta={
            "solver": "exact-bath-krylov", "dim": dim, "nnz": int(h.nnz),
            "cutoff": disc.cutoff, "n_modes": disc.n_modes,
            "recon_error": disc.recon_error, "norm_drift": float(drift),
            "rotating_wave": rotating_wave,
            "total_excitation": np.array(nexcs),
            "valid_horizon": disc.t_max,
        },
    )

"""Bath correlation kernels and derived quantities.

The workhorse is the single-pole exponential family

    alpha(tau) = a * exp(-(gamma + i*Omega) * tau)        for tau >= 0,
    alpha(-tau) = conj(alpha(tau)),

which covers the real Ornstein-Uhlenbeck kernel (Omega = 0, where
a = Gamma*gamma/2 in terms of the coupling strength Gamma and inverse
memory time gamma) and its modulated complex extension.  Finite-temperature
kernels are represented by a quadrature over a sampled Lorentzian spectral
density on a positive frequency grid; they re-enter the deterministic
solver only through a single-exponential fit whose residual is surfaced to
the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, FitError


@dataclass(frozen=True)
class ExponentialKernel:
    """Single-pole kernel a*exp(-(gamma + i*Omega)|tau|) with Hermitian reflection.

    amplitude : value at zero lag (energy^2), > 0
    decay     : inverse memory time gamma, > 0
    modulation: angular frequency Omega; 0 gives the real OU kernel
    """

    amplitude: float
    decay: float
    modulation: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.amplitude) and self.amplitude > 0):
            raise ConfigurationError(f"kernel amplitude must be positive, got {self.amplitude}")
        if not (np.isfinite(self.decay) and self.decay > 0):
            raise ConfigurationError(f"kernel decay must be positive, got {self.decay}")
        if not np.isfinite(self.modulation):
            raise ConfigurationError("kernel modulation must be finite")

    @property
    def is_real(self) -> bool:
        return self.modulation == 0.0

    def __call__(self, lag):
        return eval_kernel(self, lag)


@dataclass(frozen=True)
class FrequencyGrid:
    """Positive-frequency quadrature grid (log-spaced between min and max)."""

    min: float
    max: float
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ConfigurationError(f"frequency grid needs at least 3 points, got {self.n}")
        if not (0 < self.min < self.max):
            raise ConfigurationError(f"need 0 < min < max, got [{self.min}, {self.max}]")


def default_grid(center: float, width: float) -> FrequencyGrid:
    return FrequencyGrid(1e-3, center + 20.0 * width, 2000)


@dataclass(frozen=True)
class ThermalKernelSpec:
    """Finite-temperature kernel of a Lorentzian bath, sampled for quadrature.

    The underlying zero-temperature spectral density is

        S(w) = strength * width^2 / (2*pi*(width^2 + (w - center)^2))

    restricted to w > 0 (thermal occupations require positive mode
    frequencies).  Temperature is in energy units with k_B = 1.
    """

    strength: float          # Gamma
    width: float             # gamma
    temperature: float       # T >= 0
    center: float = 0.0      # Lorentzian center (maps onto Omega)
    grid: FrequencyGrid = None

    def __post_init__(self):
        if self.strength <= 0 or self.width <= 0:
            raise ConfigurationError("thermal kernel needs positive strength and width")
        if self.temperature < 0:
            raise ConfigurationError(f"temperature must be >= 0, got {self.temperature}")
        if self.grid is None:
            object.__setattr__(self, "grid", default_grid(self.center, self.width))

    def __call__(self, lag):
        return eval_thermal_kernel(self, lag)


@dataclass(frozen=True)
class KernelFit:
    """Result of fitting samples to the exponential family."""

    kernel: ExponentialKernel
    residual: float          # rms |model - sample| / amplitude
    n_samples: int = 0


def eval_kernel(kernel: ExponentialKernel, lag):
    """Evaluate the exponential kernel at one lag or an array of lags.

    Uses the Hermitian-symmetric form a*exp(-gamma|tau| - i*Omega*tau),
    which equals a*exp(-(gamma+i*Omega)tau) for tau >= 0 and its conjugate
    reflection for tau < 0.
    """
    tau = np.asarray(lag, dtype=float)
    if not np.all(np.isfinite(tau)):
        raise ConfigurationError("kernel lag must be finite")
    val = kernel.amplitude * np.exp(-kernel.decay * np.abs(tau) - 1j * kernel.modulation * tau)
    if kernel.modulation == 0.0:
        val = val.real + 0j
    return complex(val) if np.isscalar(lag) else val


def thermal_occupation(mode_freq: float, temperature: float) -> float:
    """Bose occupation 1/(exp(w/T) - 1); exactly 0 at T = 0."""
    w = np.asarray(mode_freq, dtype=float)
    if np.any(w <= 0):
        raise ConfigurationError("thermal occupation requires positive mode frequency")
    if temperature < 0:
        raise ConfigurationError("temperature must be >= 0")
    if temperature == 0.0:
        out = np.zeros_like(w)
    else:
        x = w / temperature
        out = np.zeros_like(w)
        small = x < 700.0          # beyond this exp overflows and n_bar is 0 anyway
        out[small] = 1.0 / np.expm1(x[small])
    return float(out) if np.isscalar(mode_freq) else out


def _lorentzian(w, strength, width, center):
    return strength * width**2 / (2.0 * np.pi * (width**2 + (w - center) ** 2))


def _quad_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights on a uniform grid of n points, spacing h.

    For an odd interval count the last three intervals use the 3/8 rule so
    the scheme stays O(h^4) everywhere.
    """
    w = np.zeros(n)
    m = n - 1  # number of intervals
    if m % 2 == 0:
        w[0] = w[-1] = 1.0
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= h / 3.0
    else:
        # Simpson 1/3 on the first m-3 intervals, 3/8 on the last three.
        if m == 1:
            w[:] = h / 2.0
        elif m == 3:
            w[:] = np.array([1.0, 3.0, 3.0, 1.0]) * 3.0 * h / 8.0
        else:
            w[0] = 1.0
            w[1:n - 4:2] = 4.0
            w[2:n - 4:2] = 2.0
            w[n - 4] = 1.0
            w[:n - 3] *= h / 3.0
            w38 = np.array([1.0, 3.0, 3.0, 1.0]) * 3.0 * h / 8.0
            w[n - 4:] += w38
    return w


def thermal_modes(spec: ThermalKernelSpec):
    """Sampled modes (frequencies, squared couplings) of the thermal kernel.

    The grid is log-uniform between grid.min and grid.max; quadrature
    weights are composite Simpson in log-frequency.  The log spacing is
    what resolves the 1/w Bose enhancement near the infrared edge, which a
    uniform linear grid cannot do at any practical point count.
    """
    g = spec.grid
    if g.n < 3:
        raise ConfigurationError("empty or degenerate frequency grid")
    u = np.linspace(math.log(g.min), math.log(g.max), g.n)
    w = np.exp(u)
    quad = _quad_weights(g.n, u[1] - u[0]) * w  # dw = w du
    g2 = _lorentzian(w, spec.strength, spec.width, spec.center) * quad
    return w, g2


def eval_thermal_kernel(spec: ThermalKernelSpec, lag):
    """Finite-temperature kernel sum over the sampled modes.

    alpha_T(tau) = sum_k g_k^2 [ (n_k+1) e^{-i w_k tau} + n_k e^{+i w_k tau} ]

    Hermitian-symmetric in the lag for any T; at T = 0 it reduces to the
    zero-temperature discretized kernel on the same grid.
    """
    w, g2 = thermal_modes(spec)
    nbar = thermal_occupation(w, spec.temperature)
    tau = np.atleast_1d(np.asarray(lag, dtype=float))
    if not np.all(np.isfinite(tau)):
        raise ConfigurationError("kernel lag must be finite")
    phase = np.exp(-1j * np.outer(w, tau))
    out = (g2 * (nbar + 1.0)) @ phase + (g2 * nbar) @ phase.conj()
    return complex(out[0]) if np.isscalar(lag) else out


def mode_kernel(omegas, g2, nbar, lag):
    """Kernel of an explicit mode list with given occupations (vectorized)."""
    tau = np.atleast_1d(np.asarray(lag, dtype=float))
    phase = np.exp(-1j * np.outer(np.asarray(omegas, float), tau))
    out = (np.asarray(g2) * (np.asarray(nbar) + 1.0)) @ phase \
        + (np.asarray(g2) * np.asarray(nbar)) @ phase.conj()
    return complex(out[0]) if np.isscalar(lag) else out


def fit_exponential(samples) -> KernelFit:
    """Fit (lag, value) samples to the exponential family.

    The amplitude is pinned to the zero-lag sample; (gamma, Omega) come
    from a least-squares line through the origin on log(value/a) versus
    lag, with the phase unwrapped along increasing lag.  Lags must sample
    the phase densely enough that successive increments stay below pi
    (Omega * dlag < pi), otherwise the modulation aliases.

    Returns the kernel together with the relative rms residual
    rms|model - sample| / a.
    """
    pairs = sorted((float(l), complex(v)) for l, v in samples)
    lags = np.array([p[0] for p in pairs])
    vals = np.array([p[1] for p in pairs])
    if len(lags) < 3 or len(np.unique(lags)) != len(lags):
        raise FitError("need at least 3 samples at distinct lags")
    if lags[0] != 0.0:
        raise FitError("a sample at lag 0 is required to pin the amplitude")
    if np.any(lags < 0):
        raise FitError("lags must be non-negative")
    a0 = vals[0]
    if abs(a0.imag) > 1e-9 * abs(a0) or a0.real <= 0:
        raise FitError(f"zero-lag sample must be real positive, got {a0}")
    a = a0.real
    mags = np.abs(vals)
    if np.any(mags < 1e-300 * a) or np.any(mags[1:] < 1e-12 * a):
        raise FitError(
            "sample magnitudes cross zero; the data is not in the "
            f"exponential family (min |value| = {mags.min():.3e})"
        )
    ratio = vals[1:] / a
    y = np.log(np.abs(ratio)) + 1j * np.unwrap(np.angle(ratio))
    tpos = lags[1:]
    slope = (tpos @ y) / (tpos @ tpos)
    gamma = -slope.real
    omega = -slope.imag
    if gamma <= 0:
        raise FitError(f"fitted decay is non-positive ({gamma:.3e}); samples do not decay")
    if abs(omega) < 1e-12:
        omega = 0.0
    kernel = ExponentialKernel(a, gamma, omega)
    model = eval_kernel(kernel, lags)
    residual = float(np.sqrt(np.mean(np.abs(model - vals) ** 2)) / a)
    return KernelFit(kernel=kernel, residual=residual, n_samples=len(lags))


def hamiltonian_shift_v(kernel: ExponentialKernel, t: float) -> float:
    """Accumulated Hamiltonian shift v(t) = 4 * int_0^t Im alpha(s) ds.

    Closed form for the exponential family; identically zero for real
    kernels (Omega = 0).
    """
    if not np.isfinite(t) or t < 0:
        raise ConfigurationError(f"shift time must be finite and >= 0, got {t}")
    a, g, om = kernel.amplitude, kernel.decay, kernel.modulation
    if om == 0.0 or t == 0.0:
        return 0.0
    # int_0^t e^{-g s} sin(om s) ds = [om - e^{-g t}(om cos(om t) + g sin(om t))] / (g^2 + om^2)
    integral = (om - math.exp(-g * t) * (om * math.cos(om * t) + g * math.sin(om * t))) / (g * g + om * om)
    return -4.0 * a * integral


_KERNEL_FIELDS = {
    "ou": {"type", "Gamma", "gamma"},
    "complex-exp": {"type", "Gamma", "gamma", "Omega"},
    "thermal": {"type", "Gamma", "gamma", "Omega", "T", "grid"},
}


def kernel_from_json(obj: dict):
    """Build a kernel from its JSON object form.

    {"type": "ou" | "complex-exp" | "thermal", "Gamma": f, "gamma": f,
     "Omega": f, "T": f, "grid": {"min": f, "max": f, "n": int}}

    Unknown fields are rejected.  The amplitude is Gamma*gamma/2; for the
    thermal type Omega doubles as the Lorentzian center.
    """
    if not isinstance(obj, dict):
        raise ConfigurationError("kernel spec must be a JSON object")
    ktype = obj.get("type")
    if ktype not in _KERNEL_FIELDS:
        raise ConfigurationError(f"unknown kernel type {ktype!r}; expected one of {sorted(_KERNEL_FIELDS)}")
    unknown = set(obj) - _KERNEL_FIELDS[ktype]
    if unknown:
        raise ConfigurationError(f"unknown kernel fields for type {ktype!r}: {sorted(unknown)}")
    for req in ("Gamma", "gamma"):
        if req not in obj:
            raise ConfigurationError(f"kernel spec missing required field {req!r}")
    strength = float(obj["Gamma"])
    width = float(obj["gamma"])
    if ktype == "ou":
        return ExponentialKernel(strength * width / 2.0, width, 0.0)
    if ktype == "complex-exp":
        return ExponentialKernel(strength * width / 2.0, width, float(obj.get("Omega", 0.0)))
    grid = None
    if "grid" in obj:
        gobj = obj["grid"]
        if not isinstance(gobj, dict) or set(gobj) - {"min", "max", "n"}:
            raise ConfigurationError("kernel grid must be an object with fields min, max, n")
        grid = FrequencyGrid(float(gobj["min"]), float(gobj["max"]), int(gobj["n"]))
    return ThermalKernelSpec(
        strength=strength,
        width=width,
        temperature=float(obj.get("T", 0.0)),
        center=float(obj.get("Omega", 0.0)),
        grid=grid,
    )

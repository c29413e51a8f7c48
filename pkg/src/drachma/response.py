"""State-conditional linear cavity response.

Fourier convention: ``a(t) = \\int a(w) exp(-i w t) dw``. With it the
transfer function ``sqrt(kappa) / (kappa/2 - i (w - chi))`` corresponds to

    da/dt = -(kappa/2 + i chi) a + sqrt(kappa) a_in

and to the causal kernel ``sqrt(kappa) exp(-(kappa/2 + i chi) t)``.

Sampled inputs are turned into a continuous drive in one of two ways. The
time-domain methods (``convolution`` and ``ode``) use a causal cubic
interpolant: on the interval ending at sample ``k`` the drive is the cubic
through samples ``k-3..k`` (zero before the first sample), so the output at
sample ``k`` never depends on later inputs. The ``spectral`` method treats
the samples as band limited and applies the transfer function bin by bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft
from scipy.signal import lfilter

from .model import DetectionChain, StateBranch, Waveform

#: RK4 step bound on ``h * |rate|``; beyond this the integrator refuses to run.
STABILITY_BOUND = 0.1
SPECTRAL_TAIL_LIMIT = 1e-10
METHODS = ("convolution", "spectral", "ode")


class GridTooCoarseError(ValueError):
    def __init__(self, message: str, required_dt: float):
        super().__init__(message)
        self.required_dt = required_dt


@dataclass(frozen=True)
class BranchResponse:
    branch: StateBranch
    kappa: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")

    @property
    def rate(self) -> complex:
        """Complex decay rate ``kappa/2 + i chi``."""
        return complex(0.5 * self.kappa, self.branch.chi)


def transfer_fd(omega, resp: BranchResponse):
    omega = np.asarray(omega, dtype=float)
    return math.sqrt(resp.kappa) / (0.5 * resp.kappa - 1j * (omega - resp.branch.chi))


def impulse_response_td(t, resp: BranchResponse):
    t = np.asarray(t, dtype=float)
    out = math.sqrt(resp.kappa) * np.exp(-resp.rate * np.where(t >= 0, t, 0.0))
    return np.where(t >= 0, out, 0.0)


# -- causal cubic interpolation ---------------------------------------------------

_NODES = np.array([-3.0, -2.0, -1.0, 0.0])


def _lagrange_basis(s):
    """Cubic Lagrange basis on nodes -3..0 evaluated at ``s`` (shape (4, len(s)))."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.ones((4, s.size))
    for p in range(4):
        for q in range(4):
            if q != p:
                out[p] *= (s - _NODES[q]) / (_NODES[p] - _NODES[q])
    return out


@lru_cache(maxsize=32)
def _substep_weights(n_sub: int) -> np.ndarray:
    # positions within (t_{k-1}, t_k], one per half internal step
    s = -1.0 + np.arange(1, n_sub + 1) / n_sub
    w = _lagrange_basis(s)
    w[:, -1] = [0.0, 0.0, 0.0, 1.0]  # exact node value at t_k
    return w


def fine_drive(samples: np.ndarray, n_sub: int) -> np.ndarray:
    """Causal cubic interpolant of ``samples`` at ``n_sub`` points per interval.

    Returns ``(len(samples) - 1) * n_sub + 1`` values; entry ``k * n_sub`` is
    sample ``k`` exactly.
    """
    x = np.asarray(samples, dtype=complex)
    n = x.size
    if n == 1:
        return x.copy()
    xp = np.concatenate([np.zeros(3, complex), x])
    # window [x_{k-3}, .., x_k] for k = 1..n-1
    win = np.stack([xp[p + 1 : p + n] for p in range(4)])  # (4, n-1)
    w = _substep_weights(n_sub)  # (4, n_sub)
    inner = np.einsum("pk,ps->ks", win, w).reshape(-1)
    return np.concatenate([x[:1], inner])


def rk4_linear_coefficients(rate: complex, h: float):
    """One RK4 step of ``y' = -rate y + f`` as ``g y + c0 f(t) + cm f(t+h/2) + c1 f(t+h)``."""

    def step(y, f0, fm, f1):
        k1 = -rate * y + f0
        k2 = -rate * (y + 0.5 * h * k1) + fm
        k3 = -rate * (y + 0.5 * h * k2) + fm
        k4 = -rate * (y + h * k3) + f1
        return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    return step(1, 0, 0, 0), step(0, 1, 0, 0), step(0, 0, 1, 0), step(0, 0, 0, 1)


def check_step(h: float, rate_bound: float, dt: float, oversample: int):
    if h * rate_bound > STABILITY_BOUND:
        required = STABILITY_BOUND / rate_bound * oversample
        raise GridTooCoarseError(
            f"internal step {h:.3e} s too coarse for rate {rate_bound:.3e} rad/s; "
            f"need dt <= {required:.3e} s at oversample {oversample}",
            required_dt=required,
        )


def _propagate_ode(x: np.ndarray, dt: float, resp: BranchResponse, oversample: int) -> np.ndarray:
    h = dt / oversample
    check_step(h, max(0.5 * resp.kappa, abs(resp.branch.chi)), dt, oversample)
    f = math.sqrt(resp.kappa) * fine_drive(x, 2 * oversample)
    g, c0, cm, c1 = rk4_linear_coefficients(resp.rate, h)
    b = c0 * f[0:-1:2] + cm * f[1::2] + c1 * f[2::2]
    y = lfilter([1.0], [1.0, -g], b)
    out = np.empty(x.size, complex)
    out[0] = 0.0
    out[1:] = y[oversample - 1 :: oversample]
    return out


@lru_cache(maxsize=64)
def _interval_weights(rate: complex, dt: float, sqrt_kappa: float) -> tuple:
    # c_p = sqrt(kappa) * int_0^dt exp(-rate (dt - u)) L_p(u/dt - 1) du, Gauss-Legendre (exact to roundoff)
    xg, wg = np.polynomial.legendre.leggauss(20)
    u = 0.5 * dt * (xg + 1.0)
    basis = _lagrange_basis(u / dt - 1.0)
    integrand = np.exp(-rate * (dt - u)) * basis
    return tuple(sqrt_kappa * 0.5 * dt * integrand @ wg)


def discrete_kernel(n: int, dt: float, resp: BranchResponse) -> np.ndarray:
    """Sampled response to a unit input sample under causal cubic interpolation."""
    c = _interval_weights(resp.rate, dt, math.sqrt(resp.kappa))
    decay = np.exp(-resp.rate * dt)
    kern = np.zeros(max(n, 4), complex)
    # y_k = decay * y_{k-1} + sum_p c_p x_{k-3+p}; x is a unit impulse at 0
    prev = 0.0
    for k in range(4):
        prev = decay * prev + c[3 - k]
        kern[k] = prev
    if kern.size > 4:
        kern[4:] = kern[3] * decay ** np.arange(1, kern.size - 3)
    return kern[:n]


def _propagate_convolution(x: np.ndarray, dt: float, resp: BranchResponse) -> np.ndarray:
    kern = discrete_kernel(x.size, dt, resp)
    y = np.convolve(x, kern)[: x.size]
    # the cavity starts empty at t0: drop x0's share of the (nonexistent) interval ending at t0
    c3 = _interval_weights(resp.rate, dt, math.sqrt(resp.kappa))[3]
    return y - x[0] * c3 * np.exp(-resp.rate * dt * np.arange(x.size))


def _spectral_length(n: int, dt: float, kappa: float) -> int:
    ring = int(math.ceil(2.0 * math.log(1e9) / (kappa * dt)))
    return sfft.next_fast_len(max(4 * n, n + ring))


def _propagate_spectral(x: np.ndarray, dt: float, resp: BranchResponse) -> np.ndarray:
    n = x.size
    nfft = _spectral_length(n, dt, resp.kappa)
    omega = 2 * np.pi * sfft.fftfreq(nfft, dt)
    spec = sfft.fft(x, nfft)
    # numpy's forward transform carries exp(-i w t); the physics convention is the opposite sign
    y = sfft.ifft(spec * transfer_fd(-omega, resp))
    energy = np.sum(np.abs(y) ** 2)
    tail = np.sum(np.abs(y[-(nfft // 4) :]) ** 2)
    if energy > 0 and tail > SPECTRAL_TAIL_LIMIT * energy:
        raise ValueError(
            f"spectral window too short: tail energy fraction {tail / energy:.2e}"
        )
    return y[:n]


def propagate_linear(a_in: Waveform, resp: BranchResponse, method: str = "ode", *, oversample: int = 10) -> Waveform:
    """Intra-cavity field driven by ``a_in`` from an empty cavity at ``a_in.t0``."""
    x = a_in.samples
    if method == "ode":
        y = _propagate_ode(x, a_in.dt, resp, oversample)
    elif method == "convolution":
        y = _propagate_convolution(x, a_in.dt, resp)
    elif method == "spectral":
        y = _propagate_spectral(x, a_in.dt, resp)
    else:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return a_in.with_samples(y)


def output_field(a: Waveform, a_in: Waveform, chain: DetectionChain) -> Waveform:
    a.require_same_grid(a_in)
    return a.with_samples(chain.direct_gain * a_in.samples + chain.cavity_gain * a.samples)

"""Semiclassical Kerr cavity simulator, reset metrics and relaxation jumps.

Each branch integrates

    da/dt = -(kappa/2 + i [chi + 4 zeta |a|^2]) a + sqrt(kappa) a_in

with fixed-step RK4 on a grid ``oversample`` times finer than the drive,
which is interpolated exactly as in :mod:`drachma.response`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import DetectionChain, StateBranch, Waveform
from .response import check_step, fine_drive, output_field

CONTRAST_CAP_DB = 120.0
DEFAULT_OVERSAMPLE = 10


def shot_rng(seed: int, shot: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, shot); ``stream`` separates uses."""
    key = (int(seed) % 2**64) << 64 | (int(shot) % 2**64)
    bitgen = np.random.Philox(key=key, counter=[0, 0, int(stream), 0])
    return np.random.Generator(bitgen)


def _rate_bound(branches, kappa, a_in: np.ndarray) -> float:
    # |a| <= 2 max|a_in| / sqrt(kappa) holds with or without Kerr (the phase factor is unimodular)
    n_bound = 4.0 * float(np.max(np.abs(a_in)) ** 2) / kappa
    return max(0.5 * kappa + abs(b.chi) + 4.0 * abs(b.zeta) * n_bound for b in branches)


def _rk4_segments(f: np.ndarray, h: float, kappa: float, segments, y0: complex = 0j) -> np.ndarray:
    """Scalar RK4 over half-step drive ``f``; ``segments`` = [(first_step, chi, zeta), ...].

    Returns the state after every step (length ``(len(f) - 1) // 2``).
    """
    n_steps = (f.size - 1) // 2
    out = np.empty(n_steps, complex)
    hk = 0.5 * kappa
    y = complex(y0)
    h2 = 0.5 * h
    h6 = h / 6.0
    fl = f.tolist()
    seg_iter = iter(list(segments) + [(n_steps + 1, 0.0, 0.0)])
    start, chi, zeta = next(seg_iter)
    nxt = next(seg_iter)
    z4 = 4.0 * zeta
    for j in range(n_steps):
        if j >= nxt[0]:
            _, chi, zeta = nxt
            z4 = 4.0 * zeta
            nxt = next(seg_iter)
        f0, fm, f1 = fl[2 * j], fl[2 * j + 1], fl[2 * j + 2]
        k1 = f0 - complex(hk, chi + z4 * (y.real * y.real + y.imag * y.imag)) * y
        y2 = y + h2 * k1
        k2 = fm - complex(hk, chi + z4 * (y2.real * y2.real + y2.imag * y2.imag)) * y2
        y3 = y + h2 * k2
        k3 = fm - complex(hk, chi + z4 * (y3.real * y3.real + y3.imag * y3.imag)) * y3
        y4 = y + h * k3
        k4 = f1 - complex(hk, chi + z4 * (y4.real * y4.real + y4.imag * y4.imag)) * y4
        y = y + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[j] = y
    return out


def _coarse(states: np.ndarray, oversample: int, n: int) -> np.ndarray:
    out = np.empty(n, complex)
    out[0] = 0.0
    out[1:] = states[oversample - 1 :: oversample]
    return out


def evolve_branch(a_in: Waveform, branch: StateBranch, kappa: float, *, oversample: int = DEFAULT_OVERSAMPLE) -> Waveform:
    """Field of one branch driven by ``a_in`` from an empty cavity."""
    return _evolve_segments(a_in, [(0, branch)], kappa, oversample)


def _evolve_segments(a_in: Waveform, segs, kappa, oversample) -> Waveform:
    h = a_in.dt / oversample
    check_step(h, _rate_bound([b for _, b in segs], kappa, a_in.samples), a_in.dt, oversample)
    f = math.sqrt(kappa) * fine_drive(a_in.samples, 2 * oversample)
    states = _rk4_segments(f, h, kappa, [(s, b.chi, b.zeta) for s, b in segs])
    return a_in.with_samples(_coarse(states, oversample, len(a_in)))


@dataclass(frozen=True)
class Jump:
    time: float
    source: int
    target: int


def draw_jumps(branches: Sequence[StateBranch], initial: int, seed: int, shot: int = 0, t0: float = 0.0, t_end: float = math.inf) -> list[Jump]:
    """Relaxation cascade for one shot, keyed by (seed, shot)."""
    by_label = {b.label: b for b in branches}
    rng = shot_rng(seed, shot, stream=0)
    jumps = []
    state, t = initial, t0
    for _ in range(len(branches)):
        b = by_label[state]
        if b.decay_rate <= 0:
            break
        if b.decay_target is None:
            raise ValueError(f"branch {b.label}: decay_target missing")
        e = rng.standard_exponential()
        t = t + (0.0 if math.isinf(b.decay_rate) else e / b.decay_rate)
        if t >= t_end:
            break
        jumps.append(Jump(t, state, b.decay_target))
        state = b.decay_target
    return jumps


def jump_step(t: float, t0: float, h: float) -> int:
    """Internal step at whose start a jump at time ``t`` takes effect."""
    return max(0, int(math.ceil((t - t0) / h - 1e-9)))


def evolve_with_decay(
    a_in: Waveform,
    branches: Sequence[StateBranch],
    initial: int,
    kappa: float,
    seed: int,
    *,
    shot: int = 0,
    oversample: int = DEFAULT_OVERSAMPLE,
) -> tuple[Waveform, list[Jump]]:
    """One stochastic trajectory: the field is continuous, only (chi, zeta) switch at a jump."""
    by_label = {b.label: b for b in branches}
    for b in branches:
        if b.decay_rate > 0 and b.decay_target is None:
            raise ValueError(f"branch {b.label}: decay_target missing")
    t_end = a_in.t0 + (len(a_in) - 1) * a_in.dt
    jumps = draw_jumps(branches, initial, seed, shot, a_in.t0, t_end)
    h = a_in.dt / oversample
    segs = [(0, by_label[initial])]
    for jmp in jumps:
        step = jump_step(jmp.time, a_in.t0, h)
        if step == segs[-1][0]:
            segs[-1] = (step, by_label[jmp.target])
        else:
            segs.append((step, by_label[jmp.target]))
    if len(segs) == 1:
        return evolve_branch(a_in, segs[0][1], kappa, oversample=oversample), jumps
    return _evolve_segments(a_in, segs, kappa, oversample), jumps


def evolve_batch(
    a_in: Waveform,
    kappa: float,
    chi_start: np.ndarray,
    zeta_start: np.ndarray,
    switches: Sequence[tuple[int, int, float, float]] = (),
    *,
    oversample: int = DEFAULT_OVERSAMPLE,
    rate_bound: float | None = None,
) -> np.ndarray:
    """Vectorized RK4 for many trajectories sharing one drive.

    ``switches`` holds ``(step, trajectory, chi, zeta)`` events. Returns an
    array of shape (n_traj, len(a_in)).
    """
    chi = np.array(chi_start, dtype=float)
    z4 = 4.0 * np.array(zeta_start, dtype=float)
    n_traj = chi.size
    h = a_in.dt / oversample
    if rate_bound is not None:
        check_step(h, rate_bound, a_in.dt, oversample)
    f = math.sqrt(kappa) * fine_drive(a_in.samples, 2 * oversample)
    n_steps = (f.size - 1) // 2
    events = sorted(switches)
    ev = 0
    hk = 0.5 * kappa
    y = np.zeros(n_traj, complex)
    out = np.zeros((n_traj, len(a_in)), complex)

    def rhs(yy, drive):
        return drive - (hk + 1j * (chi + z4 * (yy.real**2 + yy.imag**2))) * yy

    for j in range(n_steps):
        while ev < len(events) and events[ev][0] <= j:
            _, k, c, z = events[ev]
            chi[k] = c
            z4[k] = 4.0 * z
            ev += 1
        f0, fm, f1 = f[2 * j], f[2 * j + 1], f[2 * j + 2]
        k1 = rhs(y, f0)
        k2 = rhs(y + 0.5 * h * k1, fm)
        k3 = rhs(y + 0.5 * h * k2, fm)
        k4 = rhs(y + h * k3, f1)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (j + 1) % oversample == 0:
            out[:, (j + 1) // oversample] = y
    return out


# -- metrics ------------------------------------------------------------------------


@dataclass(frozen=True)
class ResetMetrics:
    peak: float
    residual: float
    contrast_db: float
    time_to_floor: float  # units of 1/kappa after the pulse end
    floor_reached: bool


def contrast_db(peak: float, residual: float) -> float:
    if residual <= peak * 10 ** (-CONTRAST_CAP_DB / 10) or residual == 0:
        return CONTRAST_CAP_DB
    return 10.0 * math.log10(peak / residual)


def reset_metrics(trace: Waveform, t_p: float, *, kappa: float, noise_floor: float = 5e-3) -> ResetMetrics:
    """Peak, residual at the pulse end, contrast and time to reach the noise floor.

    If the trace never drops to the floor, ``time_to_floor`` is the window
    length after ``t_p`` (a lower bound) and ``floor_reached`` is False.
    """
    n = trace.photons
    k_end = trace.index_at(t_p)
    if not 0 <= k_end < len(trace):
        raise ValueError("trace does not cover the pulse end")
    peak = float(n.max())
    residual = float(n[k_end])
    below = np.nonzero(n[k_end:] <= noise_floor)[0]
    if below.size:
        k = k_end + int(below[0])
        if k > k_end and below[0] > 0:
            # linear interpolation of log(n) between the bracketing samples
            n0, n1 = n[k - 1], n[k]
            frac = math.log(n0 / noise_floor) / math.log(n0 / n1) if n1 > 0 else 1.0
            t_cross = trace.t[k - 1] + frac * trace.dt
        else:
            t_cross = trace.t[k]
        reached = True
    else:
        t_cross = trace.t[-1]
        reached = False
    return ResetMetrics(peak, residual, contrast_db(peak, residual), (t_cross - t_p) * kappa, reached)


@dataclass
class SimResult:
    labels: list[int]
    fields: list[Waveform]
    outputs: list[Waveform]
    t_p: float
    metrics: list[ResetMetrics] = field(default_factory=list)

    @property
    def peak_photons(self) -> list[float]:
        return [m.peak for m in self.metrics]

    @property
    def residual_photons(self) -> list[float]:
        return [m.residual for m in self.metrics]

    @property
    def reset_contrast_db(self) -> list[float]:
        return [m.contrast_db for m in self.metrics]

    def report(self) -> dict:
        return {
            "t_p_s": self.t_p,
            "branches": [
                {
                    "label": lab,
                    "peak_photons": m.peak,
                    "residual_photons": m.residual,
                    "reset_contrast_db": m.contrast_db,
                    "time_to_noise_floor_kappa_inv": m.time_to_floor,
                    "noise_floor_reached": m.floor_reached,
                }
                for lab, m in zip(self.labels, self.metrics)
            ],
        }


def simulate_branches(
    pulse: Waveform,
    branches: Sequence[StateBranch],
    kappa: float,
    t_p: float,
    *,
    tail: float | None = None,
    chain: DetectionChain | None = None,
    noise_floor: float = 5e-3,
    oversample: int = DEFAULT_OVERSAMPLE,
) -> SimResult:
    """Drive every branch with ``pulse``, padded with silence ``tail`` seconds past ``t_p``.

    ``tail`` defaults to ten cavity lifetimes.
    """
    if tail is None:
        tail = 10.0 / kappa
    n_total = pulse.index_at(t_p + tail) + 1
    drive = pulse.padded(n_total)
    chain = chain or DetectionChain.ideal(kappa)
    res = SimResult([b.label for b in branches], [], [], t_p)
    for b in branches:
        a = evolve_branch(drive, b, kappa, oversample=oversample)
        res.fields.append(a)
        res.outputs.append(output_field(a, drive, chain))
        res.metrics.append(reset_metrics(a, t_p, kappa=kappa, noise_floor=noise_floor))
    return res

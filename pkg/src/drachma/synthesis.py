"""Closed-form synthesis of cavity-resetting readout pulses.

The input pulse is the product of inverse cavity operators applied to a
smooth trial envelope ``a_T``:

    a_in = prod_j (kappa/2 + i s_j + d/dt) a_T / kappa**(N/2)

With constant shifts ``s_j = chi_j`` the product is expanded through the
elementary symmetric polynomials of the factors, using exact trial
derivatives. With Kerr shifts ``s_j(t) = chi_j + 4 zeta_j |a_j(t)|**2`` the
factors no longer commute with d/dt; they are applied one at a time on
Taylor jets (stacks of exact derivatives sampled on the grid).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import permutations, product
from math import comb
from typing import Sequence

import numpy as np

from .model import StateBranch, TrialFunction, Waveform, validate_branches

DEFAULT_DT = 1e-9


class SmoothnessError(ValueError):
    pass


class KerrConvergenceError(RuntimeError):
    def __init__(self, message, pulse: Waveform, changes: list[float]):
        super().__init__(message)
        self.pulse = pulse
        self.changes = changes


# -- trial envelope -----------------------------------------------------------------


def trial_eval(tf: TrialFunction, t, k: int = 0):
    """k-th time derivative of ``A sin(pi t / T)**m``; zero outside [0, T].

    Uses ``sin(x)**m = (2i)**-m sum_q C(m,q) (-1)**q exp(i (m-2q) x)``, which
    differentiates termwise.
    """
    if k < 0:
        raise ValueError("derivative order must be >= 0")
    t = np.asarray(t, dtype=float)
    m, T = tf.exponent_m, tf.duration
    w = math.pi / T
    x = w * t
    total = np.zeros(t.shape, dtype=complex)
    for q in range(m + 1):
        nu = m - 2 * q
        if nu == 0 and k > 0:
            continue
        coef = comb(m, q) * (-1) ** q * (1j * nu * w) ** k
        total = total + coef * np.exp(1j * nu * x)
    val = (total / (2j) ** m).real
    inside = (t >= 0) & (t <= T)
    if k < m:
        # analytically zero at both ends
        inside &= (t > 0) & (t < T)
    return tf.amplitude * np.where(inside, val, 0.0)


def trial_jet(tf: TrialFunction, t, order: int) -> np.ndarray:
    return np.stack([trial_eval(tf, t, k) for k in range(order + 1)])


# -- jet arithmetic -----------------------------------------------------------------


def jet_mul(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Leibniz product of two derivative stacks."""
    order = min(f.shape[0], g.shape[0]) - 1
    out = np.zeros((order + 1,) + f.shape[1:], dtype=np.result_type(f, g))
    for k in range(order + 1):
        for i in range(k + 1):
            out[k] += comb(k, i) * f[i] * g[k - i]
    return out


def apply_factor(f: np.ndarray, half_kappa: float, shift: np.ndarray) -> np.ndarray:
    """``(kappa/2 + i s + d/dt) f`` on jets; the result has one order less."""
    order = f.shape[0] - 1
    if order < 1:
        raise SmoothnessError("not enough derivatives left to apply another factor")
    sf = jet_mul(shift[:order], f[:order])
    return half_kappa * f[:order] + 1j * sf + f[1 : order + 1]


# -- grids -------------------------------------------------------------------------


def pulse_grid(duration: float, dt: float = DEFAULT_DT, tail: float = 0.0):
    """Sample times with the pulse end on the grid.

    The step is nudged so that ``duration`` is an integer number of steps.
    Returns ``(t, dt_eff, n_pulse)``; ``t[n_pulse - 1] == duration``.
    """
    steps = max(1, int(round(duration / dt)))
    dt_eff = duration / steps
    n_tail = int(math.ceil(tail / dt_eff - 1e-9)) if tail > 0 else 0
    n_total = steps + 1 + n_tail
    return np.arange(n_total) * dt_eff, dt_eff, steps + 1


# -- linear operator product --------------------------------------------------------


@dataclass(frozen=True)
class OperatorProduct:
    """``prod_j (kappa/2 + i shift_j + d/dt) / kappa**(N/2)`` with constant shifts."""

    kappa: float
    shifts: tuple[float, ...]

    @property
    def factors(self) -> list[complex]:
        return [complex(0.5 * self.kappa, s) for s in self.shifts]

    @property
    def normalization(self) -> float:
        return self.kappa ** (-len(self.shifts) / 2)

    def coefficients(self) -> np.ndarray:
        """``c[k]`` multiplies the k-th trial derivative (``c[k] = e_{N-k}``)."""
        return np.atleast_1d(np.poly(-np.array(self.factors, dtype=complex)))[::-1]

    def apply(self, tf: TrialFunction, t) -> np.ndarray:
        coeffs = self.coefficients()
        out = np.zeros(np.shape(t), dtype=complex)
        for k, c in enumerate(coeffs):
            out = out + c * trial_eval(tf, t, k)
        return out * self.normalization

    def apply_jet(self, tf: TrialFunction, t, order: int) -> np.ndarray:
        """Derivatives 0..order of :meth:`apply`, exact."""
        coeffs = self.coefficients()
        n = len(coeffs) - 1
        base = trial_jet(tf, t, n + order)
        out = np.zeros((order + 1,) + np.shape(t), dtype=complex)
        for r in range(order + 1):
            for k, c in enumerate(coeffs):
                out[r] += c * base[k + r]
        return out * self.normalization


def _prepare(tf: TrialFunction, branches: Sequence[StateBranch]) -> tuple[StateBranch, ...]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        branches = validate_branches(branches, warn_duplicates=False)
    chis = [b.chi for b in branches]
    if len(set(chis)) != len(chis):
        warnings.warn("duplicate dispersive shifts; pulse is still well defined", stacklevel=3)
    if tf.exponent_m <= len(branches):
        raise SmoothnessError(
            f"trial exponent {tf.exponent_m} must exceed the number of states {len(branches)}"
        )
    return branches


def _waveform(values, dt, n_total):
    out = np.zeros(n_total, complex)
    out[: values.size] = values
    return Waveform(out, dt, 0.0)


def synth_multi(tf: TrialFunction, branches: Sequence[StateBranch], kappa: float, *, dt=DEFAULT_DT, tail=0.0) -> Waveform:
    """Input pulse resetting the cavity for every branch (linear cavity)."""
    branches = _prepare(tf, branches)
    t, dt_eff, n_pulse = pulse_grid(tf.duration, dt, tail)
    op = OperatorProduct(kappa, tuple(b.chi for b in branches))
    return _waveform(op.apply(tf, t[:n_pulse]), dt_eff, t.size)


def synth_single(tf: TrialFunction, branch: StateBranch, kappa: float, *, dt=DEFAULT_DT, tail=0.0) -> Waveform:
    if tf.exponent_m <= 1:
        raise SmoothnessError("single-state synthesis needs exponent_m > 1")
    return synth_multi(tf, [branch], kappa, dt=dt, tail=tail)


def designed_fields(tf: TrialFunction, branches, kappa, t, order: int = 0) -> list[np.ndarray]:
    """Jets of the linear intra-cavity field of each branch under the multi-state pulse.

    Branch j sees ``prod_{k != j}(kappa/2 + i chi_k + d/dt) a_T / kappa**((N-1)/2)``.
    """
    out = []
    for j in range(len(branches)):
        others = tuple(b.chi for i, b in enumerate(branches) if i != j)
        out.append(OperatorProduct(kappa, others).apply_jet(tf, t, order))
    return out


def kerr_predict_fields(tf: TrialFunction, branches, kappa, *, dt=DEFAULT_DT, tail=0.0) -> list[Waveform]:
    """First-iteration (Kerr-free) field estimate for each branch."""
    branches = _prepare(tf, branches)
    t, dt_eff, n_pulse = pulse_grid(tf.duration, dt, tail)
    fields = designed_fields(tf, branches, kappa, t[:n_pulse])
    return [_waveform(f[0], dt_eff, t.size) for f in fields]


# -- Kerr correction ----------------------------------------------------------------


def _shift_jets_from_prediction(tf, branches, kappa, t) -> list[np.ndarray]:
    order = len(branches) - 1
    jets = designed_fields(tf, branches, kappa, t, order)
    shifts = []
    for b, f in zip(branches, jets):
        n = jet_mul(f, f.conj()).real
        s = 4.0 * b.zeta * n
        s[0] += b.chi
        shifts.append(s)
    return shifts


def _shift_jets_from_simulation(branches, kappa, pulse: Waveform, n_pulse, oversample) -> list[np.ndarray]:
    from .dynamics import evolve_branch

    order = len(branches) - 1
    a_in = pulse.samples[:n_pulse]
    drive = Waveform(a_in, pulse.dt, pulse.t0)
    shifts = []
    for b in branches:
        a = evolve_branch(drive, b, kappa, oversample=oversample).samples
        n = np.abs(a) ** 2
        jet = np.zeros((order + 1, n_pulse))
        jet[0] = n
        if order >= 1:
            s = b.chi + 4.0 * b.zeta * n
            adot = -(0.5 * kappa + 1j * s) * a + math.sqrt(kappa) * a_in
            jet[1] = 2.0 * (a.conj() * adot).real
            for r in range(2, order + 1):
                jet[r] = np.gradient(jet[r - 1], pulse.dt, edge_order=2)
        s_jet = 4.0 * b.zeta * jet
        s_jet[0] += b.chi
        shifts.append(s_jet)
    return shifts


def _apply_kerr_product(tf, kappa, t, shifts, order: Sequence[int]) -> np.ndarray:
    f = trial_jet(tf, t, len(shifts))
    # leftmost factor is order[0]; apply from the right
    for j in reversed(order):
        f = apply_factor(f, 0.5 * kappa, shifts[j])
    return f[0] * kappa ** (-len(shifts) / 2)


ORDERINGS = ("symmetric", "ascending", "descending")


def _kerr_product(tf, kappa, t, shifts, ordering: str) -> np.ndarray:
    n = len(shifts)
    if ordering == "ascending":
        return _apply_kerr_product(tf, kappa, t, shifts, list(range(n)))
    if ordering == "descending":
        return _apply_kerr_product(tf, kappa, t, shifts, list(range(n))[::-1])
    # average over all factor orders: the commutator error is shared by every branch
    perms = list(permutations(range(n)))
    total = sum(_apply_kerr_product(tf, kappa, t, shifts, list(p)) for p in perms)
    return total / len(perms)


@dataclass
class KerrInfo:
    iterations: int
    changes: list[float] = field(default_factory=list)
    converged: bool = True
    ordering_sensitivity: float = 0.0


def synth_kerr(
    tf: TrialFunction,
    branches: Sequence[StateBranch],
    kappa: float,
    iterations: int = 1,
    *,
    dt=DEFAULT_DT,
    tail=0.0,
    ordering: str = "symmetric",
    tol: float = 1e-4,
    oversample: int = 10,
    strict: bool = True,
    return_info: bool = False,
):
    """Kerr-corrected pulse.

    Factors are applied in every order and averaged by default
    (``ordering="symmetric"``); a single fixed order leaves the commutator
    error on all but the leftmost branch.

    Iteration 1 takes the photon numbers from the Kerr-free field estimate.
    Further iterations take them from the nonlinear simulation of the
    previous pulse and stop once the relative pulse change drops below
    ``tol``; ``strict`` turns a miss into :class:`KerrConvergenceError`.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    branches = _prepare(tf, branches)
    t, dt_eff, n_pulse = pulse_grid(tf.duration, dt, tail)
    tp = t[:n_pulse]
    n = len(branches)
    if all(b.zeta == 0 for b in branches):
        pulse = synth_multi(tf, branches, kappa, dt=dt, tail=tail)
        info = KerrInfo(iterations=1)
        return (pulse, info) if return_info else pulse

    if ordering not in ORDERINGS:
        raise ValueError(f"ordering must be one of {ORDERINGS}")

    shifts = _shift_jets_from_prediction(tf, branches, kappa, tp)
    values = _kerr_product(tf, kappa, tp, shifts, ordering)
    ascending = _apply_kerr_product(tf, kappa, tp, shifts, list(range(n)))
    descending = _apply_kerr_product(tf, kappa, tp, shifts, list(range(n))[::-1])
    peak = np.max(np.abs(values))
    info = KerrInfo(iterations=1, ordering_sensitivity=float(np.max(np.abs(ascending - descending)) / peak))
    pulse = _waveform(values, dt_eff, t.size)

    for it in range(2, iterations + 1):
        shifts = _shift_jets_from_simulation(branches, kappa, pulse, n_pulse, oversample)
        new_values = _kerr_product(tf, kappa, tp, shifts, ordering)
        change = float(np.max(np.abs(new_values - values)) / np.max(np.abs(values)))
        info.changes.append(change)
        info.iterations = it
        values = new_values
        pulse = _waveform(values, dt_eff, t.size)
        if change < tol:
            break
    if iterations > 1 and (not info.changes or info.changes[-1] >= tol):
        info.converged = False
        msg = f"Kerr fixed point not reached after {info.iterations} iterations (changes {info.changes})"
        if strict:
            raise KerrConvergenceError(msg, pulse, info.changes)
        warnings.warn(msg, stacklevel=2)
    return (pulse, info) if return_info else pulse


def kerr_estimate(g: float, delta: float) -> float:
    """First-order Kerr constant ``-g**4 / delta**3`` (rad/s in, rad/s out)."""
    if delta == 0:
        raise ZeroDivisionError("qubit-cavity detuning must be nonzero")
    return -(g**4) / delta**3


# -- amplitude scaling ----------------------------------------------------------------


def peak_photons(tf: TrialFunction, branches, kappa, *, branch: int | str = 0, n_eval: int = 4001) -> float:
    """Peak photon number of the Kerr-free designed field (``branch='max'`` for the worst case)."""
    t = np.linspace(0.0, tf.duration, n_eval)
    fields = designed_fields(tf, tuple(branches), kappa, t)
    peaks = [float(np.max(np.abs(f[0]) ** 2)) for f in fields]
    return max(peaks) if branch == "max" else peaks[branch]


def scale_to_peak(tf: TrialFunction, branches, kappa, target_photons: float, *, branch: int | str = 0) -> TrialFunction:
    """Rescale the trial amplitude so the designed peak photon number hits the target."""
    current = peak_photons(tf, branches, kappa, branch=branch)
    if current == 0:
        raise ValueError("trial amplitude is zero; cannot rescale")
    return tf.scaled(math.sqrt(target_photons / current))


def conventional_pulse(tf: TrialFunction, branch: StateBranch, kappa: float, peak: float, *, dt=DEFAULT_DT, oversample: int = 10) -> Waveform:
    """Unshaped drive: the bare trial envelope, scaled so ``branch`` peaks at ``peak`` photons."""
    from .dynamics import evolve_branch

    t, dt_eff, n_pulse = pulse_grid(tf.duration, dt)
    shape = Waveform(trial_eval(tf.scaled(1.0 / tf.amplitude), t), dt_eff)
    # the field keeps rising after the drive ends, so look two lifetimes past it
    probe = evolve_branch(shape.padded(n_pulse + int(2.0 / (kappa * dt_eff))), branch, kappa, oversample=oversample)
    return shape.with_samples(math.sqrt(peak / float(probe.photons.max())) * shape.samples)


# -- Kerr constant scan -------------------------------------------------------------


@dataclass
class ScanResult:
    best: tuple[float, ...]
    best_contrast_db: float
    grid: list[np.ndarray]
    contrast_db: np.ndarray  # shape = tuple(len(g) for g in grid)

    def rows(self):
        for idx in product(*(range(len(g)) for g in self.grid)):
            yield tuple(float(self.grid[b][i]) for b, i in enumerate(idx)) + (float(self.contrast_db[idx]),)


def kerr_scan(
    tf: TrialFunction,
    plant: Sequence[StateBranch],
    kappa: float,
    zeta_grid: Sequence[Sequence[float]],
    *,
    iterations: int = 1,
    dt=DEFAULT_DT,
    oversample: int = 10,
) -> ScanResult:
    """Grid search over synthesis Kerr constants (rad/s) against a fixed plant.

    Each candidate pulse is simulated on the plant and scored by the
    worst-branch reset contrast at the pulse end.
    """
    from .dynamics import simulate_branches

    plant = tuple(plant)
    grid = [np.asarray(g, dtype=float) for g in zeta_grid]
    if len(grid) != len(plant) or any(g.size == 0 for g in grid):
        raise ValueError("need one non-empty zeta range per branch")
    contrast = np.empty(tuple(g.size for g in grid))
    for idx in product(*(range(g.size) for g in grid)):
        candidate = [
            StateBranch(b.label, b.chi, float(grid[j][i]), b.decay_rate, b.decay_target)
            for j, (b, i) in enumerate(zip(plant, idx))
        ]
        pulse = synth_kerr(tf, candidate, kappa, iterations, dt=dt, oversample=oversample, strict=False)
        res = simulate_branches(pulse, plant, kappa, tf.duration, oversample=oversample, tail=0.0)
        contrast[idx] = min(res.reset_contrast_db)
    best_idx = np.unravel_index(int(np.argmax(contrast)), contrast.shape)
    best = tuple(float(grid[j][i]) for j, i in enumerate(best_idx))
    return ScanResult(best, float(contrast[best_idx]), grid, contrast)

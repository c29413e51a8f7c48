"""Single-shot readout: matched filtering, shot Monte Carlo, histogram fits and calibrations.

Noise model: complex white Gaussian noise added to the output record with
per-quadrature variance ``1 / (2 eta dt)`` per sample (photon-flux units,
heterodyne vacuum noise divided by the detection efficiency).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares, minimize_scalar
from scipy.special import erfc

from .dynamics import DEFAULT_OVERSAMPLE, draw_jumps, evolve_batch, evolve_branch, jump_step, shot_rng, simulate_branches
from .model import Config, DetectionChain, StateBranch, TrialFunction, Waveform
from .response import BranchResponse, output_field, propagate_linear
from .synthesis import designed_fields, pulse_grid, scale_to_peak, synth_kerr, synth_multi


def q_func(x):
    """Gaussian tail probability P(X > x) for a standard normal."""
    return 0.5 * erfc(np.asarray(x) / math.sqrt(2.0))


# -- readout signal and matched filter ---------------------------------------------


def readout_signal(tf: TrialFunction, branches: Sequence[StateBranch], kappa: float, chain: DetectionChain, *, dt=1e-9, tail=0.0) -> Waveform:
    """Expected output difference between states 1 and 0 under the linear design."""
    if len(branches) != 2:
        raise ValueError(f"readout signal needs exactly two branches, got {len(branches)}")
    t, dt_eff, n_pulse = pulse_grid(tf.duration, dt, tail)
    a0, a1 = (f[0] for f in designed_fields(tf, tuple(branches), kappa, t[:n_pulse]))
    z = np.zeros(t.size, complex)
    z[:n_pulse] = chain.cavity_gain * (a1 - a0)
    return Waveform(z, dt_eff, 0.0)


def weight_function(z: Waveform) -> Waveform:
    return z.with_samples(np.conj(z.samples))


def noise_sigma(eta: float, dt: float) -> float:
    """Per-quadrature standard deviation of one output-record sample."""
    return math.sqrt(1.0 / (2.0 * eta * dt))


def integrate_shot(a_out: Waveform, w: Waveform, eta: float, rng: np.random.Generator | None = None, *, noise: bool = True) -> complex:
    """``sum_k W_k (a_out_k + xi_k) dt`` for one noisy output record."""
    a_out.require_same_grid(w)
    record = a_out.samples
    if noise and math.isfinite(eta):
        if rng is None:
            raise ValueError("a generator is required when noise is on")
        sig = noise_sigma(eta, a_out.dt)
        xi = rng.standard_normal((2, len(a_out)))
        record = record + sig * (xi[0] + 1j * xi[1])
    return complex(np.sum(w.samples * record) * a_out.dt)


def matched_filter_snr(w: Waveform, z: Waveform, eta: float) -> float:
    """Mean separation over noise standard deviation along the discrimination axis."""
    w.require_same_grid(z)
    signal = abs(np.sum(w.samples * z.samples) * z.dt)
    noise = math.sqrt(np.sum(np.abs(w.samples) ** 2) * z.dt / (2.0 * eta))
    return signal / noise if noise > 0 else 0.0


def gaussian_error(snr: float) -> float:
    """Assignment error of two equal-width Gaussians ``snr`` standard deviations apart."""
    return float(q_func(0.5 * snr))


# -- shot Monte Carlo ----------------------------------------------------------------


@dataclass
class ShotEnsemble:
    prepared: int
    values: np.ndarray
    seed: int
    jumped: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.size < 1:
            raise ValueError("ensemble needs at least one shot")

    @property
    def n_shots(self) -> int:
        return self.values.size


@dataclass
class ReadoutSetup:
    """Everything the shot simulator needs, built once per configuration."""

    config: Config
    trial: TrialFunction
    pulse: Waveform  # covers [0, t_p]
    weights: Waveform
    signal: Waveform
    chain: DetectionChain

    @property
    def t_p(self) -> float:
        return self.trial.duration


def prepare_readout(cfg: Config, *, trial: TrialFunction | None = None, kerr: bool = True, iterations: int = 1) -> ReadoutSetup:
    """Pulse, analytic weights and expected signal for a two-state config.

    The trial amplitude is rescaled to ``simulation.target_peak_photons``
    when that is set.
    """
    tf = trial or cfg.trial
    sim = cfg.simulation
    if sim.target_peak_photons is not None:
        tf = scale_to_peak(tf, cfg.branches, cfg.kappa, sim.target_peak_photons)
    if kerr:
        pulse = synth_kerr(tf, cfg.branches, cfg.kappa, iterations, dt=sim.dt, oversample=sim.oversample, strict=False)
    else:
        pulse = synth_multi(tf, cfg.branches, cfg.kappa, dt=sim.dt)
    z = readout_signal(tf, cfg.branches, cfg.kappa, cfg.detection, dt=sim.dt)
    return ReadoutSetup(cfg, tf, pulse, weight_function(z), z, cfg.detection)


def simulate_shots(
    cfg: Config,
    prepared: int,
    n_shots: int,
    *,
    seed: int = 0,
    t1: bool = True,
    noise: bool = True,
    setup: ReadoutSetup | None = None,
    first_shot: int = 0,
) -> ShotEnsemble:
    """Integrated single-shot values for qubit state ``prepared``.

    Shot ``i`` draws its relaxation time and its noise from generators keyed
    by ``(seed, first_shot + i)``, so any split of an ensemble reproduces the
    same values.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    setup = setup or prepare_readout(cfg)
    by_label = {b.label: b for b in cfg.branches}
    branch = by_label[prepared]
    drive = setup.pulse
    kappa = cfg.kappa
    osamp = cfg.simulation.oversample
    base = output_field(evolve_branch(drive, branch, kappa, oversample=osamp), drive, setup.chain)
    w = setup.weights.samples
    dt = drive.dt
    base_value = complex(np.sum(w * base.samples) * dt)

    det = np.full(n_shots, base_value)
    jumped = np.zeros(n_shots, bool)
    if t1:
        h = dt / osamp
        t_end = drive.t0 + (len(drive) - 1) * dt
        switches, rows = [], []
        for i in range(n_shots):
            jumps = draw_jumps(cfg.branches, prepared, seed, first_shot + i, drive.t0, t_end)
            if not jumps:
                continue
            row = len(rows)
            rows.append(i)
            for j in jumps:
                tgt = by_label[j.target]
                switches.append((jump_step(j.time, drive.t0, h), row, tgt.chi, tgt.zeta))
        if rows:
            n_rows = len(rows)
            fields = evolve_batch(
                drive,
                kappa,
                np.full(n_rows, branch.chi),
                np.full(n_rows, branch.zeta),
                switches,
                oversample=osamp,
            )
            outs = setup.chain.direct_gain * drive.samples + setup.chain.cavity_gain * fields
            det[rows] = np.sum(w * outs, axis=1) * dt
            jumped[rows] = True

    values = det.copy()
    if noise:
        sig = noise_sigma(setup.chain.eta, dt)
        for i in range(n_shots):
            xi = shot_rng(seed, first_shot + i, stream=1).standard_normal((2, w.size))
            values[i] += np.sum(w * (xi[0] + 1j * xi[1])) * (sig * dt)
    return ShotEnsemble(prepared, values, seed, jumped)


# -- histogram fit ------------------------------------------------------------------


@dataclass
class DoubleGaussianFit:
    mu0: float
    mu1: float
    sigma0: float
    sigma1: float
    w0: float  # share of the first histogram in the mu1 peak
    w1: float  # share of the second histogram in the mu0 peak
    degenerate: bool = False
    converged: bool = True
    message: str = ""
    edges: np.ndarray | None = field(default=None, repr=False)
    counts: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def separation(self) -> float:
        return abs(self.mu1 - self.mu0)

    @property
    def second_weight(self) -> float:
        return self.w0


def fd_edges(x: np.ndarray) -> np.ndarray:
    return np.histogram_bin_edges(x, bins="fd")


def _gauss_bin(edges, mu, sigma):
    # probability mass per bin, exact for a Gaussian
    from scipy.special import ndtr

    return np.diff(ndtr((edges - mu) / sigma))


def fit_double_gaussian(values0, values1=None, *, bins=None, common_sigma: bool = True, min_samples: int = 1000) -> DoubleGaussianFit:
    """Joint least-squares fit of two-Gaussian mixtures to binned histograms.

    With two datasets both histograms share ``mu0, mu1`` and the widths; each
    has its own mixing weight. Residuals are Poisson weighted.
    """
    x0 = np.asarray(values0, dtype=float)
    sets = [x0] if values1 is None else [x0, np.asarray(values1, dtype=float)]
    if any(s.size < min_samples for s in sets):
        raise ValueError(f"need at least {min_samples} samples per histogram")
    pooled = np.concatenate(sets)
    edges = np.asarray(bins) if bins is not None and np.ndim(bins) else (
        np.histogram_bin_edges(pooled, bins=bins) if bins is not None else fd_edges(pooled)
    )
    counts = [np.histogram(s, edges)[0].astype(float) for s in sets]
    spread = float(np.std(pooled))

    if len(sets) == 2:
        m0, m1 = float(np.median(sets[0])), float(np.median(sets[1]))
        s0 = float(np.std(sets[0])) or spread
        s1 = float(np.std(sets[1])) or spread
        stderr = math.sqrt(s0**2 / sets[0].size + s1**2 / sets[1].size)
        if abs(m1 - m0) <= 5.0 * stderr:
            mu = float(np.mean(pooled))
            return DoubleGaussianFit(mu, mu, spread, spread, math.nan, math.nan, degenerate=True,
                                     converged=False, message="histograms share one peak; split is unidentifiable",
                                     edges=edges, counts=counts)
        sig0 = 1.4826 * float(np.median(np.abs(sets[0] - m0)))
    else:
        m0 = float(np.quantile(x0, 0.25))
        m1 = float(np.quantile(x0, 0.75))
        sig0 = 0.5 * spread
    sig0 = sig0 or spread

    n_hist = len(sets)
    sizes = [s.size for s in sets]

    def unpack(p):
        mu0, mu1, ls0 = p[0], p[1], p[2]
        ls1 = ls0 if common_sigma else p[3]
        ws = p[3 + (not common_sigma):]
        return mu0, mu1, math.exp(ls0), math.exp(ls1), ws

    def model(p):
        mu0, mu1, sg0, sg1, ws = unpack(p)
        g0 = _gauss_bin(edges, mu0, sg0)
        g1 = _gauss_bin(edges, mu1, sg1)
        out = []
        for h in range(n_hist):
            other = ws[h]
            # first histogram: weight on mu1; second histogram: weight on mu0
            if h == 0:
                out.append(sizes[h] * ((1 - other) * g0 + other * g1))
            else:
                out.append(sizes[h] * ((1 - other) * g1 + other * g0))
        return out

    def resid(p):
        return np.concatenate([(c - m) / np.sqrt(np.maximum(m, 0.5)) for c, m in zip(counts, model(p))])

    p0 = [m0, m1, math.log(sig0)] + ([] if common_sigma else [math.log(sig0)]) + [0.05] * n_hist
    lo = [-np.inf, -np.inf, -np.inf] + ([] if common_sigma else [-np.inf]) + [0.0] * n_hist
    hi = [np.inf, np.inf, np.inf] + ([] if common_sigma else [np.inf]) + [1.0] * n_hist
    if n_hist == 1:
        p0[-1] = 0.5
    sol = least_squares(resid, p0, bounds=(lo, hi), x_scale="jac", method="trf", max_nfev=2000)
    mu0, mu1, sg0, sg1, ws = unpack(sol.x)
    fit = DoubleGaussianFit(float(mu0), float(mu1), float(sg0), float(sg1), float(ws[0]),
                            float(ws[1]) if n_hist == 2 else math.nan, converged=bool(sol.success),
                            message=str(sol.message), edges=edges, counts=counts)
    if not sol.success:
        warnings.warn(f"double-Gaussian fit did not converge: {sol.message}", stacklevel=2)
    if n_hist == 1:
        # fall back to one peak when the second one does not pay for itself
        mu, sg = float(np.mean(x0)), float(np.std(x0))
        single = counts[0] - x0.size * _gauss_bin(edges, mu, sg)
        chi_single = float(np.sum(single**2 / np.maximum(x0.size * _gauss_bin(edges, mu, sg), 0.5)))
        if chi_single - 2.0 * sol.cost < 25.0 or abs(mu1 - mu0) < 0.5 * min(sg0, sg1):
            fit = DoubleGaussianFit(mu, mu, sg, sg, 0.0, math.nan, converged=True,
                                    message="single peak", edges=edges, counts=counts)
    elif fit.separation < 1e-3 * min(sg0, sg1):
        fit.degenerate = True
    return fit


# -- assignment -----------------------------------------------------------------------


@dataclass
class AssignmentReport:
    axis: complex
    threshold: float
    p10: float  # P(assigned 1 | prepared 0)
    p01: float  # P(assigned 0 | prepared 1)
    error: float
    fit: DoubleGaussianFit | None
    error_overlap: float  # pure-Gaussian overlap at its optimal threshold
    threshold_overlap: float
    error_fit: float  # fitted mixtures evaluated at the empirical threshold
    n0: int = 0
    n1: int = 0

    @property
    def fidelity(self) -> float:
        return 1.0 - self.error

    def to_dict(self) -> dict:
        f = self.fit
        return {
            "axis_re": self.axis.real,
            "axis_im": self.axis.imag,
            "threshold": self.threshold,
            "p_1_given_0": self.p10,
            "p_0_given_1": self.p01,
            "assignment_error": self.error,
            "gaussian_overlap_error": self.error_overlap,
            "gaussian_overlap_threshold": self.threshold_overlap,
            "fitted_mixture_error": self.error_fit,
            "n_shots": [self.n0, self.n1],
            "fit": None if f is None else {
                "mu0": f.mu0, "mu1": f.mu1, "sigma0": f.sigma0, "sigma1": f.sigma1,
                "w0": f.w0, "w1": f.w1, "degenerate": f.degenerate, "converged": f.converged,
            },
        }


def discrimination_axis(ens0: ShotEnsemble, ens1: ShotEnsemble) -> complex:
    d = np.mean(ens1.values) - np.mean(ens0.values)
    return complex(d / abs(d)) if abs(d) > 0 else 1.0 + 0j


def project(values, axis: complex) -> np.ndarray:
    return (np.asarray(values) * np.conj(axis)).real


def best_threshold(x0: np.ndarray, x1: np.ndarray) -> tuple[float, int, int]:
    """Threshold minimizing ``P(1|0)/2 + P(0|1)/2`` over midpoints of the pooled samples.

    Returns ``(threshold, count_1_given_0, count_0_given_1)``; values above
    the threshold are assigned to state 1.
    """
    n0, n1 = x0.size, x1.size
    pooled = np.concatenate([x0, x1])
    labels = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
    order = np.argsort(pooled, kind="stable")
    xs, ls = pooled[order], labels[order]
    # after the first i sorted samples fall below the threshold
    below1 = np.concatenate([[0], np.cumsum(ls)])
    below0 = np.concatenate([[0], np.cumsum(1 - ls)])
    c10 = n0 - below0
    c01 = below1
    valid = np.ones(xs.size + 1, bool)
    valid[1:-1] = xs[1:] > xs[:-1]  # cannot split ties
    score = np.where(valid, c10 * n1 + c01 * n0, np.iinfo(np.int64).max)
    i = int(np.argmin(score))
    if i == 0:
        thr = xs[0] - 1.0
    elif i == xs.size:
        thr = xs[-1] + 1.0
    else:
        thr = 0.5 * (xs[i - 1] + xs[i])
    return float(thr), int(c10[i]), int(c01[i])


def _overlap_error(fit: DoubleGaussianFit) -> tuple[float, float]:
    lo_mu, hi_mu = sorted([fit.mu0, fit.mu1])
    sign = 1.0 if fit.mu1 >= fit.mu0 else -1.0

    def err(thr):
        return 0.5 * (q_func(sign * (thr - fit.mu0) / fit.sigma0) + q_func(sign * (fit.mu1 - thr) / fit.sigma1))

    if fit.sigma0 == fit.sigma1:
        thr = 0.5 * (fit.mu0 + fit.mu1)
    else:
        thr = minimize_scalar(err, bounds=(lo_mu, hi_mu), method="bounded", options={"xatol": 1e-12 * (hi_mu - lo_mu + 1)}).x
    return float(err(thr)), float(thr)


def assignment_error(ens0: ShotEnsemble, ens1: ShotEnsemble, *, fit: bool = True, bins=None) -> AssignmentReport:
    axis = discrimination_axis(ens0, ens1)
    x0, x1 = project(ens0.values, axis), project(ens1.values, axis)
    n0, n1 = x0.size, x1.size
    thr, c10, c01 = best_threshold(x0, x1)
    error = (c10 * n1 + c01 * n0) / (2 * n0 * n1)
    dg = None
    e_overlap = e_fit = thr_overlap = math.nan
    if fit and min(n0, n1) >= 1000:
        dg = fit_double_gaussian(x0, x1, bins=bins)
        if dg.degenerate:
            e_overlap, thr_overlap = 0.5, dg.mu0
            e_fit = 0.5
        else:
            e_overlap, thr_overlap = _overlap_error(dg)
            p10 = (1 - dg.w0) * q_func((thr - dg.mu0) / dg.sigma0) + dg.w0 * q_func((thr - dg.mu1) / dg.sigma1)
            p01 = (1 - dg.w1) * (1 - q_func((thr - dg.mu1) / dg.sigma1)) + dg.w1 * (1 - q_func((thr - dg.mu0) / dg.sigma0))
            e_fit = float(0.5 * (p10 + p01))
    return AssignmentReport(axis, thr, c10 / n0, c01 / n1, error, dg, float(e_overlap), float(thr_overlap),
                            float(e_fit), n0, n1)


def histogram_table(report: AssignmentReport, ens0: ShotEnsemble, ens1: ShotEnsemble, bins=None):
    """Rows ``(bin_center, count_prep0, count_prep1)`` on the discrimination axis."""
    x0, x1 = project(ens0.values, report.axis), project(ens1.values, report.axis)
    edges = report.fit.edges if report.fit is not None and bins is None else np.histogram_bin_edges(
        np.concatenate([x0, x1]), bins=bins or "fd")
    c0 = np.histogram(x0, edges)[0]
    c1 = np.histogram(x1, edges)[0]
    centers = 0.5 * (edges[1:] + edges[:-1])
    return list(zip(centers.tolist(), c0.tolist(), c1.tolist()))


# -- duration sweep -------------------------------------------------------------------


def sweep_duration(
    cfg: Config,
    durations: Sequence[float],
    *,
    mode: str = "max_signal",
    n_shots: int = 20000,
    seed: int = 0,
    t1: bool = True,
    kerr: bool = True,
    peak_photons: float | None = None,
) -> list[dict]:
    """One row per pulse length at a fixed designed peak photon number."""
    if mode not in ("max_signal", "error"):
        raise ValueError("mode must be 'max_signal' or 'error'")
    target = peak_photons if peak_photons is not None else cfg.simulation.target_peak_photons
    if target is None:
        raise ValueError("need a peak photon number (argument or simulation.target_peak_photons)")
    rows = []
    for tp in durations:
        tf = scale_to_peak(cfg.trial.with_duration(tp), cfg.branches, cfg.kappa, target)
        setup = _with_trial(cfg, tf, kerr)
        snr = matched_filter_snr(setup.weights, setup.signal, cfg.detection.eta)
        sim = simulate_branches(setup.pulse, cfg.branches, cfg.kappa, tp, oversample=cfg.simulation.oversample,
                                noise_floor=cfg.resonator.noise_floor_photons)
        row = {
            "t_p_s": float(tp),
            "t_p_kappa": float(tp * cfg.kappa),
            "amplitude": abs(setup.trial.amplitude),
            "peak_signal": float(np.max(np.abs(setup.signal.samples))),
            "snr": snr,
            "gaussian_error": gaussian_error(snr),
            "reset_contrast_db": float(min(sim.reset_contrast_db)),
            "peak_photons": float(max(sim.peak_photons)),
        }
        if mode == "error":
            e0 = simulate_shots(cfg, 0, n_shots, seed=seed, t1=t1, setup=setup)
            e1 = simulate_shots(cfg, 1, n_shots, seed=seed, t1=t1, setup=setup, first_shot=n_shots)
            rep = assignment_error(e0, e1)
            row["assignment_error"] = rep.error
            row["p_1_given_0"] = rep.p10
            row["p_0_given_1"] = rep.p01
        rows.append(row)
    return rows


def _with_trial(cfg: Config, tf: TrialFunction, kerr: bool) -> ReadoutSetup:
    from dataclasses import replace

    plain = replace(cfg, simulation=replace(cfg.simulation, target_peak_photons=None))
    return prepare_readout(plain, trial=tf, kerr=kerr)


# -- calibrations ---------------------------------------------------------------------


class IllConditionedError(ValueError):
    pass


@dataclass(frozen=True)
class ChainFit:
    alpha: float
    phi: float
    beta: float
    theta: float
    condition: float

    def chain(self, eta: float = 1.0) -> DetectionChain:
        return DetectionChain(self.alpha, self.phi, self.beta, self.theta, eta)


def fit_detection_chain(a_in: Waveform, a_out: Waveform, kappa: float, branch: StateBranch, *, method: str = "ode", max_condition: float = 1e8) -> ChainFit:
    """Linear least squares for the direct and cavity gains of the output chain."""
    a_in.require_same_grid(a_out)
    a = propagate_linear(a_in, BranchResponse(branch, kappa), method)
    design = np.column_stack([a_in.samples, a.samples])
    scale = np.linalg.norm(design, axis=0)
    if np.any(scale == 0):
        raise IllConditionedError("a regressor is identically zero")
    normed = design / scale
    cond = float(np.linalg.cond(normed))
    if not np.isfinite(cond) or cond > max_condition:
        raise IllConditionedError(f"regressors nearly collinear (condition number {cond:.3e})")
    coef, *_ = np.linalg.lstsq(normed, a_out.samples, rcond=None)
    g_direct, g_cavity = coef / scale
    return ChainFit(abs(g_direct), float(-np.angle(g_direct)), abs(g_cavity), float(-np.angle(g_cavity)), cond)


@dataclass
class ACStarkResult:
    amplitudes: np.ndarray
    photons: np.ndarray
    power_pW: np.ndarray
    shift: np.ndarray  # rad/s
    slope: float  # (rad/s) per pW
    photons_per_pW: float
    shift_per_photon: float  # rad/s per photon, expected 2 chi
    chi: float

    def to_dict(self) -> dict:
        return {
            "chi_hz": self.chi / (2 * math.pi),
            "slope_hz_per_pw": self.slope / (2 * math.pi),
            "photons_per_pw": self.photons_per_pW,
            "shift_per_photon_hz": self.shift_per_photon / (2 * math.pi),
            "points": [
                {"amplitude": float(a), "photons": float(n), "power_pw": float(p), "ac_stark_shift_hz": float(s / (2 * math.pi))}
                for a, n, p, s in zip(self.amplitudes, self.photons, self.power_pW, self.shift)
            ],
        }


def qubit_chi(branches: Sequence[StateBranch]) -> float:
    """Half the splitting between the first two branches."""
    return 0.5 * abs(branches[0].chi - branches[1].chi)


def ac_stark_calibration(
    cfg: Config,
    amplitudes: Sequence[float],
    *,
    branch: int = 0,
    duration_kappa: float = 20.0,
    photons_per_pW: float | None = None,
    chi: float | None = None,
) -> ACStarkResult:
    """Square-pulse photon-number calibration through the ac-Stark shift ``2 chi n``.

    Each drive amplitude is simulated to (near) steady state; the detected
    power is ``n / photons_per_pW``. Fitting the shift against power gives
    ``2 chi * photons_per_pW``.
    """
    if duration_kappa < 5.0:
        raise ValueError("square pulse must last at least 5 cavity lifetimes")
    kappa = cfg.kappa
    gain = photons_per_pW if photons_per_pW is not None else cfg.detection.photons_per_pW
    chi = chi if chi is not None else qubit_chi(cfg.branches)
    b = cfg.branch(branch)
    dt = cfg.simulation.dt
    n_samp = int(math.ceil(duration_kappa / (kappa * dt))) + 1
    photons = []
    for amp in amplitudes:
        drive = Waveform(np.full(n_samp, complex(amp)), dt)
        a = evolve_branch(drive, b, kappa, oversample=cfg.simulation.oversample)
        photons.append(abs(a.samples[-1]) ** 2)
    photons = np.array(photons)
    shift = 2.0 * chi * photons
    power = photons / gain
    kerr_shift = 4.0 * abs(b.zeta) * photons
    if np.any(kerr_shift > 0.05 * np.abs(shift)):
        warnings.warn("Kerr shift exceeds 5% of the ac-Stark shift; calibration is nonlinear", stacklevel=2)
    slope = float(np.polyfit(power, shift, 1)[0])
    per_photon = float(np.polyfit(photons, shift, 1)[0])
    return ACStarkResult(np.asarray(amplitudes, float), photons, power, shift, slope, slope / (2.0 * chi), per_photon, chi)

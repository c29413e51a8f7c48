"""Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``PASS``/``FAIL`` line with the measured numbers,
whether or not it fails.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import erfc

from drachma.dynamics import evolve_branch, simulate_branches
from drachma.measurement import (
    ac_stark_calibration,
    assignment_error,
    fit_detection_chain,
    fit_double_gaussian,
    matched_filter_snr,
    prepare_readout,
    project,
    readout_signal,
    simulate_shots,
    sweep_duration,
)
from drachma.model import TWO_PI, DetectionChain, StateBranch, TrialFunction, Waveform, load_bundled
from drachma.response import BranchResponse, output_field, propagate_linear
from drachma.synthesis import (
    conventional_pulse,
    designed_fields,
    kerr_scan,
    pulse_grid,
    scale_to_peak,
    synth_kerr,
    synth_multi,
    synth_single,
    trial_eval,
)

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail

    return emit


def qubit():
    return load_bundled("paper_qubit.json")


def linear(branches):
    return [StateBranch(b.label, b.chi, 0.0, b.decay_rate, b.decay_target) for b in branches]


def test_01_linear_nullification(verdict):
    start = time.perf_counter()
    cfg = qubit()
    kappa = cfg.kappa
    plant = linear(cfg.branches)
    tf = TrialFunction(1.0, 3, 1e-6)
    res = simulate_branches(synth_multi(tf, plant, kappa), plant, kappa, tf.duration, tail=0.0)
    ratios = [m.residual / m.peak for m in res.metrics]
    single = synth_single(tf, plant[0], kappa, tail=2e-6)
    a = evolve_branch(single, plant[0], kappa)
    target = trial_eval(tf, a.t)
    dev = float(np.max(np.abs(a.samples - target)) / np.max(np.abs(target)))
    elapsed = time.perf_counter() - start
    ok = max(ratios) <= 1e-10 and dev <= 1e-6 and elapsed < 1.0
    verdict(1, ok, f"residual/peak {max(ratios):.2e} (<=1e-10), single-state deviation {dev:.2e} (<=1e-6), "
                   f"{elapsed:.2f} s")


def test_02_qutrit_nullification(verdict):
    start = time.perf_counter()
    cfg = load_bundled("paper_qutrit.json")
    plant = linear(cfg.branches)
    res = simulate_branches(synth_multi(cfg.trial, plant, cfg.kappa), plant, cfg.kappa, cfg.trial.duration, tail=0.0)
    ratios = [m.residual / m.peak for m in res.metrics]
    elapsed = time.perf_counter() - start
    verdict(2, max(ratios) <= 1e-9 and elapsed < 1.0,
            f"residual/peak per branch {[f'{r:.1e}' for r in ratios]} (<=1e-9), {elapsed:.2f} s")


def test_03_kerr_correction(verdict):
    start = time.perf_counter()
    cfg = qubit()
    kappa = cfg.kappa
    tf = scale_to_peak(cfg.trial.with_duration(500e-9), cfg.branches, kappa, 200.0)

    def contrast(pulse):
        return simulate_branches(pulse, cfg.branches, kappa, tf.duration, tail=0.0).reset_contrast_db

    one = contrast(synth_kerr(tf, cfg.branches, kappa, 1))
    fixed = contrast(synth_kerr(tf, cfg.branches, kappa, 5, strict=False))
    plain = contrast(synth_multi(tf, cfg.branches, kappa))
    best = one if min(one) >= 30 else fixed
    elapsed = time.perf_counter() - start
    ok = min(best) >= 30 and min(plain) <= min(best) - 10 and elapsed < 10
    verdict(3, ok, f"one-step {[round(c, 1) for c in one]} dB, fixed-point {[round(c, 1) for c in fixed]} dB, "
                   f"zeta=0 pulse {[round(c, 1) for c in plain]} dB, {elapsed:.1f} s")


def test_04_conventional_decay(verdict):
    # sin^4 drive of 1 us; the peak is set to 50 photons (criterion asks for >~ 10)
    start = time.perf_counter()
    cfg = qubit()
    tf = TrialFunction(1.0, 4, 1e-6)
    b = linear(cfg.branches)[0]
    pulse = conventional_pulse(tf, b, cfg.kappa, 50.0)
    res = simulate_branches(pulse, [b], cfg.kappa, tf.duration, tail=12 / cfg.kappa)
    m = res.metrics[0]
    elapsed = time.perf_counter() - start
    ok = m.floor_reached and 8 <= m.time_to_floor <= 10 and m.peak >= 10 and elapsed < 1.0
    verdict(4, ok, f"time to 5e-3 photons {m.time_to_floor:.2f}/kappa after the pulse (peak {m.peak:.1f}), "
                   f"{elapsed:.2f} s")


def test_05_difference_identity(verdict):
    cfg = qubit()
    plant = linear(cfg.branches)
    tf = TrialFunction(1.0, 3, 1e-6)
    t, _, _ = pulse_grid(tf.duration)
    a0, a1 = (f[0] for f in designed_fields(tf, plant, cfg.kappa, t))
    expected = 1j * (plant[0].chi - plant[1].chi) * trial_eval(tf, t) / math.sqrt(cfg.kappa)
    peak = float(np.max(np.abs(expected)))
    dev = float(np.max(np.abs((a1 - a0) - expected))) / peak
    # the simulated fields carry the drive-discretization error on top
    pulse = synth_multi(tf, plant, cfg.kappa)
    s0, s1 = (evolve_branch(pulse, b, cfg.kappa).samples for b in plant)
    sim_dev = float(np.max(np.abs((s1 - s0) - expected))) / peak
    z = readout_signal(tf, plant, cfg.kappa, DetectionChain.ideal(cfg.kappa))
    z_dev = float(np.max(np.abs(z.samples - math.sqrt(cfg.kappa) * expected))) / (math.sqrt(cfg.kappa) * peak)
    verdict(5, dev <= 1e-6 and z_dev <= 1e-6,
            f"designed fields {dev:.1e}, readout signal {z_dev:.1e} (<=1e-6 of peak); simulated 1 ns grid {sim_dev:.1e}")


def test_06_method_equivalence(verdict):
    rng = np.random.default_rng(20240611)
    cfg = qubit()
    resp = BranchResponse(linear(cfg.branches)[0], cfg.kappa)
    n, dt = 2000, 1e-9
    t = np.arange(n) * dt
    env = np.sin(np.pi * t / t[-1]) ** 4
    worst = 0.0
    for _ in range(50):
        x = sum(rng.normal() * np.exp(-2j * np.pi * rng.uniform(-5e6, 5e6) * t + 1j * rng.uniform(0, TWO_PI))
                for _ in range(8))
        wf = Waveform(env * x, dt)
        ys = [propagate_linear(wf, resp, m).samples for m in ("convolution", "spectral", "ode")]
        peak = max(np.max(np.abs(y)) for y in ys)
        worst = max(worst, *(np.max(np.abs(ys[i] - ys[j])) / peak for i, j in ((0, 1), (0, 2), (1, 2))))

    coarse = Waveform((env * np.exp(-2j * np.pi * 2e6 * t))[::4], 4 * dt)
    exact = propagate_linear(coarse, resp, "convolution").samples
    hs, errs = [], []
    for osamp in (1, 2, 4, 8):
        hs.append(coarse.dt / osamp)
        errs.append(np.max(np.abs(propagate_linear(coarse, resp, "ode", oversample=osamp).samples - exact)))
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    verdict(6, worst <= 1e-6 and 3.5 <= slope <= 4.5,
            f"max pairwise relative deviation {worst:.1e} over 50 inputs (<=1e-6), RK4 slope {slope:.2f}")


def test_07_statistical_stack(verdict):
    start = time.perf_counter()
    cfg = qubit()
    cfg = cfg.with_branches(linear(cfg.branches))
    cfg = replace(cfg, simulation=replace(cfg.simulation, target_peak_photons=None))
    setup = prepare_readout(cfg, kerr=False)
    snr = matched_filter_snr(setup.weights, setup.signal, cfg.detection.eta)
    cfg = cfg.with_trial(cfg.trial.scaled(4.0 / snr))
    setup = prepare_readout(cfg, kerr=False)
    snr = matched_filter_snr(setup.weights, setup.signal, cfg.detection.eta)
    n = 100_000
    e0 = simulate_shots(cfg, 0, n, seed=7, t1=False, setup=setup)
    e1 = simulate_shots(cfg, 1, n, seed=7, t1=False, setup=setup, first_shot=n)
    rep = assignment_error(e0, e1)
    p = 0.5 * erfc(math.sqrt(2))
    sigma = math.sqrt(p * (1 - p) / (2 * n))
    # true means: the noiseless shot values on the same axis
    m0, m1 = (simulate_shots(cfg, s, 1, t1=False, noise=False, setup=setup).values[0] for s in (0, 1))
    true0, true1 = project([m0, m1], rep.axis)
    sep = true1 - true0
    mean_err = max(abs(rep.fit.mu0 - true0), abs(rep.fit.mu1 - true1)) / sep
    elapsed = time.perf_counter() - start
    ok = abs(rep.error - p) <= 3 * sigma and mean_err <= 5e-3 and elapsed < 30
    verdict(7, ok, f"SNR {snr:.4f}, error {rep.error:.5f} vs {p:.5f} +/- {3 * sigma:.5f}, fitted mean offset "
                   f"{mean_err:.1e} of separation (<=5e-3), {elapsed:.1f} s")


def test_08_t1_floor(verdict):
    start = time.perf_counter()
    base = qubit()
    t_p = 2.7 / base.kappa
    base = base.with_trial(base.trial.with_duration(t_p))
    setup = prepare_readout(base)
    n = 100_000
    e0 = simulate_shots(base, 0, n, seed=3, setup=setup)
    xs, p01 = [], []
    at_50 = None
    for t1 in (25e-6, 50e-6, 100e-6):
        b0, b1 = base.branches
        cfg = base.with_branches([b0, replace(b1, decay_rate=1.0 / t1)])
        e1 = simulate_shots(cfg, 1, n, seed=3, setup=setup, first_shot=n)
        rep = assignment_error(e0, e1)
        xs.append(t_p / t1)
        p01.append(rep.p01)
        if t1 == 50e-6:
            at_50 = rep
    slope, icpt = np.polyfit(xs, p01, 1)
    pred = slope * np.array(xs) + icpt
    r2 = 1 - np.sum((np.array(p01) - pred) ** 2) / np.sum((np.array(p01) - np.mean(p01)) ** 2)
    elapsed = time.perf_counter() - start
    ok = r2 >= 0.99 and at_50.error < 0.01 and elapsed < 300
    verdict(8, ok, f"P(0|1) {[round(p, 5) for p in p01]} vs Tp/T1 {[round(x, 4) for x in xs]}: R^2 {r2:.4f} (>=0.99); "
                   f"reference-point total error {at_50.error:.4f} (<0.01; Gaussian part alone "
                   f"{at_50.error_overlap:.4f}), {elapsed:.0f} s")


def test_09_calibration_round_trips(verdict):
    cfg = qubit()
    b = linear(cfg.branches)[0]
    chain = DetectionChain(1.0, 0.3, 0.5 * math.sqrt(cfg.kappa), -0.7)
    n, dt = 20000, 1e-9
    t = np.arange(n) * dt
    env = np.sin(np.pi * t / t[-1]) ** 2
    drive = Waveform(1e3 * env * (1 + 0.5 * np.exp(-1j * b.chi * t) + 0.5 * np.exp(2j * math.pi * 1e6 * t)), dt)
    clean = output_field(evolve_branch(drive, b, cfg.kappa), drive, chain)
    f = fit_detection_chain(drive, clean, cfg.kappa, b)
    got = np.array([f.alpha, f.phi, f.beta, f.theta])
    want = np.array([chain.alpha, chain.phi, chain.beta, chain.theta])
    noiseless = float(np.max(np.abs(got - want) / np.abs(want)))

    rng = np.random.default_rng(40)
    rms = math.sqrt(np.mean(np.abs(clean.samples) ** 2))
    s = rms * 10 ** (-40 / 20) / math.sqrt(2)
    noisy = clean.with_samples(clean.samples + s * (rng.standard_normal(n) + 1j * rng.standard_normal(n)))
    fn = fit_detection_chain(drive, noisy, cfg.kappa, b)
    # complex gains: magnitude and phase errors together
    gain_err = max(abs(fn.alpha * np.exp(-1j * fn.phi) - chain.direct_gain) / chain.alpha,
                   abs(fn.beta * np.exp(-1j * fn.theta) - chain.cavity_gain) / chain.beta)

    lin_cfg = cfg.with_branches(linear(cfg.branches))
    gain = 12.4
    ac = ac_stark_calibration(lin_cfg, [150, 300, 450, 600, 750], photons_per_pW=gain)
    gain_rel = abs(ac.photons_per_pW - gain) / gain
    chi = 0.5 * abs(lin_cfg.branches[0].chi - lin_cfg.branches[1].chi)
    slope_rel = abs(ac.shift_per_photon - 2 * chi) / (2 * chi)
    ok = noiseless <= 1e-9 and gain_err <= 1e-3 and gain_rel <= 1e-3 and slope_rel <= 1e-3
    verdict(9, ok, f"chain noiseless {noiseless:.1e} (<=1e-9), 40 dB complex-gain error {gain_err:.1e} (<=1e-3); "
                   f"photons/pW {gain_rel:.1e}, 2chi slope {slope_rel:.1e} (<=1e-3)")


def test_10_zeta_scan(verdict):
    start = time.perf_counter()
    cfg = qubit()
    tf = scale_to_peak(cfg.trial.with_duration(500e-9), cfg.branches, cfg.kappa, 200.0)
    grid = [b.zeta * np.array([0.5, 0.75, 1.0, 1.25, 1.5]) for b in cfg.branches]
    res = kerr_scan(tf, cfg.branches, cfg.kappa, grid)
    want = tuple(b.zeta for b in cfg.branches)
    elapsed = time.perf_counter() - start
    ok = np.allclose(res.best, want, rtol=1e-12) and elapsed < 120
    verdict(10, ok, f"argmax {tuple(round(z / TWO_PI, 2) for z in res.best)} Hz vs plant "
                    f"{tuple(round(z / TWO_PI, 2) for z in want)} Hz at {res.best_contrast_db:.1f} dB, {elapsed:.1f} s")


def test_11_signal_vs_duration(verdict):
    cfg = qubit()
    durations = [250e-9, 500e-9, 1000e-9, 1500e-9]
    rows = sweep_duration(cfg, durations, peak_photons=200.0)
    sig = [r["peak_signal"] for r in rows]
    monotone = all(b > a for a, b in zip(sig, sig[1:]))
    proportional = sig[2] * 250 / 1000
    secant = sig[2] - (sig[3] - sig[2]) / 500 * 750
    ratio = sig[0] / proportional
    ok = monotone and ratio < 0.5
    verdict(11, ok, f"peak signal {[round(s) for s in sig]} monotone={monotone}; S(250)/linear-from-1000ns "
                    f"{ratio:.3f} (<0.5; secant reading {sig[0] / secant:.3f})")

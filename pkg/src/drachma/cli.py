"""Command-line entry point: ``drachma <command> CONFIG --out-dir DIR [...]``."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import evolve_branch, simulate_branches
from .io import FLUX_UNITS, FIELD_UNITS, read_waveform_csv, write_json, write_manifest, write_table_csv, write_waveform_csv
from .measurement import (
    IllConditionedError,
    ac_stark_calibration,
    assignment_error,
    fit_detection_chain,
    gaussian_error,
    histogram_table,
    matched_filter_snr,
    prepare_readout,
    simulate_shots,
    sweep_duration,
)
from .model import TWO_PI, Config, ConfigError, StateBranch, Waveform, load_config
from .response import GridTooCoarseError, output_field
from .synthesis import (
    KerrConvergenceError,
    SmoothnessError,
    conventional_pulse,
    kerr_scan,
    scale_to_peak,
    synth_kerr,
    synth_multi,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class _Run:
    """Collects outputs of one command and writes the manifest last."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = argv
        self.out_dir = Path(args.out_dir)
        self.outputs: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(p)
        return p

    def finish(self, seed=None):
        write_manifest(self.out_dir, command=self.args.command, argv=self.argv, config_path=self.args.config,
                       seed=seed, outputs=self.outputs)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _has_kerr(cfg: Config) -> bool:
    return any(b.zeta != 0 for b in cfg.branches)


def _scaled_trial(cfg: Config):
    tf = cfg.trial
    if cfg.simulation.target_peak_photons is not None:
        tf = scale_to_peak(tf, cfg.branches, cfg.kappa, cfg.simulation.target_peak_photons)
    return tf


def _synth(cfg: Config, kerr: bool, iterations: int):
    tf = _scaled_trial(cfg)
    sim = cfg.simulation
    if kerr:
        return tf, synth_kerr(tf, cfg.branches, cfg.kappa, iterations, dt=sim.dt, oversample=sim.oversample)
    return tf, synth_multi(tf, cfg.branches, cfg.kappa, dt=sim.dt)


# -- commands -----------------------------------------------------------------------


def cmd_synth(cfg: Config, run: _Run):
    a = run.args
    tf, pulse = _synth(cfg, a.kerr, a.iterations)
    write_waveform_csv(run.path(a.out), pulse, FLUX_UNITS)
    write_json(run.path("synth.json"), {
        "kerr": a.kerr,
        "iterations": a.iterations if a.kerr else 0,
        "t_p_s": tf.duration,
        "trial_amplitude_re": tf.amplitude.real,
        "trial_amplitude_im": tf.amplitude.imag,
        "exponent_m": tf.exponent_m,
        "n_samples": len(pulse),
        "dt_s": pulse.dt,
    })
    run.finish()


def cmd_simulate(cfg: Config, run: _Run):
    a = run.args
    sim = cfg.simulation
    if a.pulse:
        pulse = read_waveform_csv(a.pulse)
        t_p = pulse.t[-1]
        kind = "file"
    elif a.conventional:
        tf = cfg.trial
        if a.exponent is not None:
            tf = replace(tf, exponent_m=a.exponent)
        if a.tp is not None:
            tf = tf.with_duration(a.tp * 1e-9)
        peak = a.peak if a.peak is not None else (sim.target_peak_photons or 10.0)
        pulse = conventional_pulse(tf, cfg.branches[0], cfg.kappa, peak, dt=sim.dt, oversample=sim.oversample)
        t_p = tf.duration
        kind = "conventional"
    else:
        tf, pulse = _synth(cfg, _has_kerr(cfg) and not a.linear, a.iterations)
        t_p = tf.duration
        kind = "drachma-kerr" if _has_kerr(cfg) and not a.linear else "drachma"
    tail = a.tail / cfg.kappa
    res = simulate_branches(pulse, cfg.branches, cfg.kappa, t_p, tail=tail, chain=cfg.detection,
                            noise_floor=cfg.resonator.noise_floor_photons, oversample=sim.oversample)
    report = res.report()
    report["pulse"] = kind
    report["tail_kappa_inv"] = a.tail
    write_json(run.path("simulation.json"), report)
    for lab, fld, out in zip(res.labels, res.fields, res.outputs):
        write_waveform_csv(run.path(f"field_branch{lab}.csv"), fld, FIELD_UNITS)
        write_waveform_csv(run.path(f"output_branch{lab}.csv"), out, FLUX_UNITS)
    run.finish()


def cmd_shots(cfg: Config, run: _Run):
    a = run.args
    setup = prepare_readout(cfg, kerr=not a.linear, iterations=a.iterations)
    t1 = not a.no_t1
    if a.t1 is not None:
        cfg = _with_t1(cfg, a.t1 * 1e-6)
    e0 = simulate_shots(cfg, cfg.branches[0].label, a.n, seed=a.seed, t1=t1, setup=setup)
    e1 = simulate_shots(cfg, cfg.branches[1].label, a.n, seed=a.seed, t1=t1, setup=setup, first_shot=a.n)
    rep = assignment_error(e0, e1)
    write_table_csv(run.path("histogram.csv"), ["bin_center", "count_prep0", "count_prep1"],
                    histogram_table(rep, e0, e1))
    out = rep.to_dict()
    snr = matched_filter_snr(setup.weights, setup.signal, cfg.detection.eta)
    out.update({"n_shots_per_state": a.n, "seed": a.seed, "t1_enabled": t1, "snr": snr,
                "gaussian_error": gaussian_error(snr), "jump_fraction_prep1": float(np.mean(e1.jumped))})
    write_json(run.path("assignment.json"), out)
    run.finish(a.seed)


def _with_t1(cfg: Config, t1: float) -> Config:
    """Set the decay of every branch that decays to rate 1/t1."""
    if t1 <= 0:
        raise ConfigError("t1", "must be > 0")
    branches = [
        StateBranch(b.label, b.chi, b.zeta, 1.0 / t1, b.decay_target) if b.decay_rate > 0 else b
        for b in cfg.branches
    ]
    if all(b.decay_rate == 0 for b in cfg.branches):
        branches[1] = StateBranch(branches[1].label, branches[1].chi, branches[1].zeta, 1.0 / t1, branches[0].label)
    return cfg.with_branches(branches)


def cmd_sweep(cfg: Config, run: _Run):
    a = run.args
    if a.t1 is not None:
        cfg = _with_t1(cfg, a.t1 * 1e-6)
    rows = sweep_duration(cfg, [x * 1e-9 for x in a.tp_list], mode=a.mode, n_shots=a.n, seed=a.seed,
                          t1=not a.no_t1, kerr=not a.linear, peak_photons=a.peak)
    header = list(rows[0].keys())
    write_table_csv(run.path("sweep.csv"), header, [[r[k] for k in header] for r in rows])
    run.finish(a.seed if a.mode == "error" else None)


def _parse_grid(text: str, n: int) -> list[np.ndarray]:
    """``lo:hi:steps`` per branch in Hz, separated by commas."""
    parts = text.split(",")
    if len(parts) != n:
        raise ConfigError("grid", f"need {n} ranges, got {len(parts)}")
    out = []
    for p in parts:
        fields = p.split(":")
        if len(fields) == 1:
            out.append(np.array([float(fields[0])]) * TWO_PI)
            continue
        if len(fields) != 3:
            raise ConfigError("grid", f"range {p!r} is not lo:hi:steps")
        lo, hi, steps = float(fields[0]), float(fields[1]), int(fields[2])
        if steps < 1:
            raise ConfigError("grid", "steps must be >= 1")
        out.append(np.linspace(lo, hi, steps) * TWO_PI)
    return out


def cmd_scan_zeta(cfg: Config, run: _Run):
    a = run.args
    if a.grid:
        grid = _parse_grid(a.grid, len(cfg.branches))
    else:
        grid = [b.zeta + np.linspace(-0.5, 0.5, 5) * max(abs(b.zeta), TWO_PI * 50.0) for b in cfg.branches]
    tf = _scaled_trial(cfg)
    res = kerr_scan(tf, cfg.branches, cfg.kappa, grid, iterations=a.iterations, dt=cfg.simulation.dt,
                    oversample=cfg.simulation.oversample)
    header = [f"zeta{b.label}_hz" for b in cfg.branches] + ["contrast_db"]
    rows = [[z / TWO_PI for z in r[:-1]] + [r[-1]] for r in res.rows()]
    write_table_csv(run.path("scan.csv"), header, rows)
    write_json(run.path("best.json"), {
        "best_zeta_hz": {str(b.label): z / TWO_PI for b, z in zip(cfg.branches, res.best)},
        "best_contrast_db": res.best_contrast_db,
    })
    run.finish()


def cmd_calibrate(cfg: Config, run: _Run):
    a = run.args
    sim = cfg.simulation
    if a.mode == "chain":
        # synthetic transmission record: a square probe with soft edges, then ring-down
        n = int(round(a.duration_kappa / (cfg.kappa * sim.dt))) + 1
        t = np.arange(n) * sim.dt
        t_on = 0.5 * t[-1]
        probe = np.where(t <= t_on, np.sin(np.pi * np.minimum(t / t_on, 0.5)) ** 2, 0.0) + 0j
        drive = Waveform(a.drive_amplitude * probe, sim.dt)
        branch = cfg.branches[a.branch]
        field = evolve_branch(drive, StateBranch(branch.label, branch.chi), cfg.kappa, oversample=sim.oversample)
        measured = output_field(field, drive, cfg.detection)
        if a.snr_db is not None:
            rng = np.random.default_rng(a.seed)
            rms = math.sqrt(float(np.mean(np.abs(measured.samples) ** 2)))
            sigma = rms * 10 ** (-a.snr_db / 20) / math.sqrt(2)
            measured = measured.with_samples(measured.samples + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n)))
        fit = fit_detection_chain(drive, measured, cfg.kappa, StateBranch(branch.label, branch.chi), method="ode")
        det = cfg.detection
        write_json(run.path("calibration.json"), {
            "mode": "chain",
            "fitted": {"alpha": fit.alpha, "phi_rad": fit.phi, "beta": fit.beta, "theta_rad": fit.theta},
            "injected": {"alpha": det.alpha, "phi_rad": det.phi, "beta": det.beta, "theta_rad": det.theta},
            "condition_number": fit.condition,
            "snr_db": a.snr_db,
        })
        run.finish(a.seed if a.snr_db is not None else None)
        return
    amps = a.amplitudes if a.amplitudes else list(np.linspace(0.1, 1.0, 6) * a.drive_amplitude)
    res = ac_stark_calibration(cfg, amps, branch=cfg.branches[a.branch].label, duration_kappa=a.duration_kappa)
    out = res.to_dict()
    out["mode"] = "acstark"
    write_json(run.path("calibration.json"), out)
    run.finish()


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drachma", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(name, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.add_argument("config", help="JSON configuration file")
        sp.add_argument("--out-dir", required=True, help="directory for all outputs (created if missing)")
        return sp

    sp = common("synth", "synthesize a readout pulse")
    sp.add_argument("--kerr", action="store_true", help="apply the Kerr correction with the config's zeta values")
    sp.add_argument("--iterations", type=_positive_int, default=1, help="Kerr fixed-point iterations (default 1)")
    sp.add_argument("--out", default="pulse.csv", help="pulse file name inside --out-dir")
    sp.set_defaults(func=cmd_synth)

    sp = common("simulate", "simulate the intra-cavity field of every branch")
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--pulse", help="drive waveform CSV (t_ns,re,im)")
    src.add_argument("--auto", action="store_true", help="synthesize the pulse from the config (default)")
    src.add_argument("--conventional", action="store_true", help="drive with the bare trial shape (no shaping)")
    sp.add_argument("--linear", action="store_true", help="with --auto, ignore zeta during synthesis")
    sp.add_argument("--iterations", type=_positive_int, default=1, help="Kerr iterations for --auto")
    sp.add_argument("--peak", type=float, help="peak photons for --conventional (default: config target)")
    sp.add_argument("--exponent", type=_positive_int, help="--conventional: override the sine exponent m")
    sp.add_argument("--tp", type=float, help="--conventional: override the duration in ns")
    sp.add_argument("--tail", type=float, default=10.0, help="silence after the pulse, in 1/kappa (default 10)")
    sp.set_defaults(func=cmd_simulate)

    sp = common("shots", "single-shot readout histograms and assignment error")
    sp.add_argument("--n", type=_positive_int, default=100000, help="shots per prepared state")
    sp.add_argument("--seed", type=int, default=0, help="random seed")
    sp.add_argument("--t1", type=float, help="override T1 in microseconds")
    sp.add_argument("--no-t1", action="store_true", help="disable relaxation")
    sp.add_argument("--linear", action="store_true", help="use the pulse synthesized without Kerr terms")
    sp.add_argument("--iterations", type=_positive_int, default=1, help="Kerr iterations")
    sp.set_defaults(func=cmd_shots)

    sp = common("sweep", "sweep the pulse duration at fixed peak photon number")
    sp.add_argument("--tp-list", type=_floats, required=True, help="comma-separated durations in ns")
    sp.add_argument("--mode", choices=["max_signal", "error"], default="max_signal")
    sp.add_argument("--peak", type=float, help="peak photons (default: config target)")
    sp.add_argument("--n", type=_positive_int, default=20000, help="shots per state in error mode")
    sp.add_argument("--seed", type=int, default=0, help="random seed")
    sp.add_argument("--t1", type=float, help="override T1 in microseconds")
    sp.add_argument("--no-t1", action="store_true", help="disable relaxation")
    sp.add_argument("--linear", action="store_true", help="synthesize without Kerr terms")
    sp.set_defaults(func=cmd_sweep)

    sp = common("scan-zeta", "grid scan of synthesis Kerr constants against the config plant")
    sp.add_argument("--grid", help="per-branch lo:hi:steps in Hz, comma separated (default: 5 points, +/-50%%)")
    sp.add_argument("--iterations", type=_positive_int, default=1, help="Kerr iterations per candidate")
    sp.set_defaults(func=cmd_scan_zeta)

    sp = common("calibrate", "detection-chain or ac-Stark calibration on synthetic data")
    sp.add_argument("--mode", choices=["chain", "acstark"], required=True)
    sp.add_argument("--branch", type=int, default=0, help="branch index used for the calibration")
    sp.add_argument("--drive-amplitude", type=float, default=1e3, help="probe amplitude in sqrt(photons/s)")
    sp.add_argument("--amplitudes", type=_floats, help="acstark: comma-separated drive amplitudes")
    sp.add_argument("--duration-kappa", type=float, default=20.0, help="probe length in 1/kappa")
    sp.add_argument("--snr-db", type=float, help="chain: add white noise at this SNR")
    sp.add_argument("--seed", type=int, default=0, help="random seed for --snr-db")
    sp.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        args.func(cfg, _Run(args, argv))
    except (GridTooCoarseError, KerrConvergenceError, IllConditionedError, FloatingPointError, ArithmeticError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, SmoothnessError, ValueError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

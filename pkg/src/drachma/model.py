"""Domain types, unit conventions and config loading.

Config files carry ordinary frequencies in Hz; every internal quantity is an
angular rate in rad/s. The conversion is always ``TWO_PI * hz`` (one
multiplication, nothing else), and serialization picks the Hz decimal that
maps back onto the stored rad/s value bit-for-bit.

Field amplitudes are in units of sqrt(photons), so ``abs(a)**2`` is the
intra-cavity photon number.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Invalid configuration value or unparseable config file."""

    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field_name = field_name
        self.reason = reason


def hz_to_rad(hz: float) -> float:
    return TWO_PI * float(hz)


def rad_to_hz(rad: float) -> float:
    """Inverse of :func:`hz_to_rad`.

    Several neighbouring floats can map to the same angular value; the one
    with the shortest decimal form wins, so hand-written Hz values survive a
    Hz -> rad -> Hz round trip exactly.
    """
    rad = float(rad)
    hz = rad / TWO_PI
    cands = [hz]
    for direction in (math.inf, -math.inf):
        c = hz
        for _ in range(4):
            c = math.nextafter(c, direction)
            cands.append(c)
    exact = [c for c in cands if TWO_PI * c == rad]
    if not exact:
        return hz
    return min(exact, key=lambda c: (len(repr(c)), abs(c - hz)))


@dataclass(frozen=True)
class ResonatorParams:
    kappa: float
    carrier_detuning: float = 0.0
    noise_floor_photons: float = 5e-3

    def __post_init__(self):
        if not self.kappa > 0:
            raise ConfigError("resonator.kappa", "must be > 0")
        if not self.noise_floor_photons > 0:
            raise ConfigError("resonator.noise_floor_photons", "must be > 0")

    @property
    def tau(self) -> float:
        """Cavity ring-down time 1/kappa in seconds."""
        return 1.0 / self.kappa


@dataclass(frozen=True)
class StateBranch:
    """Cavity response conditioned on one qubit state.

    ``chi`` and ``zeta`` are angular rates relative to the carrier;
    ``decay_rate`` is a plain rate (1/s) towards ``decay_target``.
    """

    label: int
    chi: float
    zeta: float = 0.0
    decay_rate: float = 0.0
    decay_target: int | None = None

    def __post_init__(self):
        if self.decay_rate < 0:
            raise ConfigError(f"branches[{self.label}].decay_rate", "must be >= 0")
        if self.decay_rate > 0:
            if self.decay_target is None:
                raise ConfigError(
                    f"branches[{self.label}].decay_target",
                    "required when decay_rate > 0",
                )
            if self.decay_target == self.label:
                raise ConfigError(
                    f"branches[{self.label}].decay_target", "must differ from label"
                )


def validate_branches(branches: Sequence[StateBranch], *, warn_duplicates=True) -> tuple[StateBranch, ...]:
    branches = tuple(branches)
    if not branches:
        raise ConfigError("branches", "at least one branch is required")
    labels = [b.label for b in branches]
    if len(set(labels)) != len(labels):
        raise ConfigError("branches", f"duplicate labels {labels}")
    for b in branches:
        if b.decay_rate > 0 and b.decay_target not in labels:
            raise ConfigError(
                f"branches[{b.label}].decay_target",
                f"unknown state {b.decay_target}",
            )
    chis = [b.chi for b in branches]
    if warn_duplicates and len(set(chis)) != len(chis):
        warnings.warn(
            "duplicate dispersive shifts in branch set; states are indistinguishable",
            stacklevel=2,
        )
    return branches


@dataclass(frozen=True)
class TrialFunction:
    """Target intra-cavity envelope ``amplitude * sin(pi t / duration)**m`` on [0, duration]."""

    amplitude: complex
    exponent_m: int
    duration: float

    def __post_init__(self):
        if int(self.exponent_m) != self.exponent_m or self.exponent_m < 1:
            raise ConfigError("trial.exponent_m", "must be a positive integer")
        if not self.duration > 0:
            raise ConfigError("trial.duration_s", "must be > 0")
        object.__setattr__(self, "exponent_m", int(self.exponent_m))
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    def check_smoothness(self, n_states: int):
        if self.exponent_m <= n_states:
            raise ConfigError(
                "trial.exponent_m",
                f"smoothness violation: exponent {self.exponent_m} must exceed "
                f"the number of states {n_states}",
            )

    def scaled(self, factor: complex) -> "TrialFunction":
        return replace(self, amplitude=self.amplitude * factor)

    def with_duration(self, duration: float) -> "TrialFunction":
        return replace(self, duration=float(duration))


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled complex envelope; sample k sits at ``t0 + k * dt``."""

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("waveform needs a non-empty 1-D sample array")
        if not self.dt > 0:
            raise ValueError("waveform dt must be > 0")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self):
        return self.samples.size

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) * self.dt

    @property
    def photons(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def same_grid(self, other: "Waveform") -> bool:
        return len(self) == len(other) and self.dt == other.dt and self.t0 == other.t0

    def require_same_grid(self, other: "Waveform"):
        if not self.same_grid(other):
            raise ValueError(
                f"grid mismatch: ({len(self)}, {self.dt}, {self.t0}) vs "
                f"({len(other)}, {other.dt}, {other.t0})"
            )

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.dt, self.t0)

    def padded(self, n_total: int) -> "Waveform":
        """Zero-extend to ``n_total`` samples (no-op if already that long)."""
        extra = n_total - len(self)
        if extra <= 0:
            return self
        return self.with_samples(np.concatenate([self.samples, np.zeros(extra, complex)]))

    def index_at(self, t: float) -> int:
        return int(round((t - self.t0) / self.dt))

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return self.same_grid(other) and np.array_equal(self.samples, other.samples)

    __hash__ = None


@dataclass(frozen=True)
class DetectionChain:
    """``a_out = alpha e^{-i phi} a_in + beta e^{-i theta} a``.

    ``beta`` carries units of sqrt(rate); the ideal input-output boundary is
    ``alpha = 0, beta = sqrt(kappa), theta = 0``.
    """

    alpha: float = 0.0
    phi: float = 0.0
    beta: float = 1.0
    theta: float = 0.0
    eta: float = 1.0
    photons_per_pW: float = 12.4

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("detection.alpha", "must be >= 0")
        if not self.beta > 0:
            raise ConfigError("detection.beta", "must be > 0")
        if not 0 < self.eta <= 1:
            raise ConfigError("detection.eta", "must lie in (0, 1]")
        if not self.photons_per_pW > 0:
            raise ConfigError("detection.photons_per_pw", "must be > 0")

    @classmethod
    def ideal(cls, kappa: float, eta: float = 1.0) -> "DetectionChain":
        return cls(alpha=0.0, phi=0.0, beta=math.sqrt(kappa), theta=0.0, eta=eta)

    @classmethod
    def feedline(cls, kappa: float, alpha: float = 1.0, phi=0.0, theta=0.0, eta=1.0) -> "DetectionChain":
        """Single-ended drive through the feed line: cavity path about half the direct one."""
        return cls(alpha=alpha, phi=phi, beta=0.5 * alpha * math.sqrt(kappa), theta=theta, eta=eta)

    @classmethod
    def charge_line(cls, kappa: float, beta_rel: float = 1.0, leak=1e-2, phi=0.0, theta=0.0, eta=1.0) -> "DetectionChain":
        """Drive via the qubit charge line: direct leakage far below the cavity path."""
        beta = beta_rel * math.sqrt(kappa)
        return cls(alpha=leak * beta_rel, phi=phi, beta=beta, theta=theta, eta=eta)

    @property
    def direct_gain(self) -> complex:
        return self.alpha * np.exp(-1j * self.phi)

    @property
    def cavity_gain(self) -> complex:
        return self.beta * np.exp(-1j * self.theta)


@dataclass(frozen=True)
class SimulationSettings:
    """Grid and drive knobs; optional ``simulation`` block of the config."""

    dt: float = 1e-9
    oversample: int = 10
    tail_kappa: float = 10.0
    target_peak_photons: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("simulation.dt_s", "must be > 0")
        if int(self.oversample) < 1:
            raise ConfigError("simulation.oversample", "must be >= 1")
        if self.tail_kappa < 0:
            raise ConfigError("simulation.tail_kappa", "must be >= 0")


@dataclass(frozen=True)
class Config:
    resonator: ResonatorParams
    branches: tuple[StateBranch, ...]
    trial: TrialFunction
    detection: DetectionChain
    simulation: SimulationSettings = field(default_factory=SimulationSettings)

    def __post_init__(self):
        object.__setattr__(self, "branches", validate_branches(self.branches))
        self.trial.check_smoothness(len(self.branches))

    def __iter__(self):
        # unpacks as (resonator, branches, trial, detection)
        return iter((self.resonator, self.branches, self.trial, self.detection))

    @property
    def kappa(self) -> float:
        return self.resonator.kappa

    def branch(self, label: int) -> StateBranch:
        for b in self.branches:
            if b.label == label:
                return b
        raise KeyError(label)

    def with_branches(self, branches) -> "Config":
        return replace(self, branches=tuple(branches))

    def with_trial(self, trial: TrialFunction) -> "Config":
        return replace(self, trial=trial)


def _get(block: dict, key: str, prefix: str, default: Any = ...):
    if key in block:
        return block[key]
    if default is ...:
        raise ConfigError(f"{prefix}.{key}", "missing")
    return default


def _number(value, name) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(name, "must be finite")
    return float(value)


def config_from_dict(data: dict) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "top level must be an object")
    for key in ("resonator", "branches", "trial", "detection"):
        if key not in data:
            raise ConfigError(key, "missing section")

    r = data["resonator"]
    resonator = ResonatorParams(
        kappa=hz_to_rad(_number(_get(r, "kappa_hz", "resonator"), "resonator.kappa_hz")),
        carrier_detuning=hz_to_rad(
            _number(_get(r, "carrier_detuning_hz", "resonator", 0.0), "resonator.carrier_detuning_hz")
        ),
        noise_floor_photons=_number(
            _get(r, "noise_floor_photons", "resonator", 5e-3), "resonator.noise_floor_photons"
        ),
    )

    if not isinstance(data["branches"], list):
        raise ConfigError("branches", "must be a list")
    branches = []
    for i, b in enumerate(data["branches"]):
        pre = f"branches[{i}]"
        label = _get(b, "label", pre)
        if isinstance(label, bool) or not isinstance(label, int):
            raise ConfigError(f"{pre}.label", "must be an integer")
        target = _get(b, "decay_target", pre, None)
        if target is not None and (isinstance(target, bool) or not isinstance(target, int)):
            raise ConfigError(f"{pre}.decay_target", "must be an integer or null")
        branches.append(
            StateBranch(
                label=label,
                chi=hz_to_rad(_number(_get(b, "chi_hz", pre), f"{pre}.chi_hz")),
                zeta=hz_to_rad(_number(_get(b, "zeta_hz", pre, 0.0), f"{pre}.zeta_hz")),
                # a rate, not an angular frequency: no 2*pi
                decay_rate=_number(_get(b, "decay_rate_hz", pre, 0.0), f"{pre}.decay_rate_hz"),
                decay_target=target,
            )
        )

    t = data["trial"]
    m = _get(t, "exponent_m", "trial")
    if isinstance(m, bool) or not isinstance(m, int):
        raise ConfigError("trial.exponent_m", "must be an integer")
    trial = TrialFunction(
        amplitude=complex(
            _number(_get(t, "amplitude_re", "trial", 1.0), "trial.amplitude_re"),
            _number(_get(t, "amplitude_im", "trial", 0.0), "trial.amplitude_im"),
        ),
        exponent_m=m,
        duration=_number(_get(t, "duration_s", "trial"), "trial.duration_s"),
    )

    d = data["detection"]
    detection = DetectionChain(
        alpha=_number(_get(d, "alpha", "detection", 0.0), "detection.alpha"),
        phi=_number(_get(d, "phi_rad", "detection", 0.0), "detection.phi_rad"),
        beta=_number(_get(d, "beta", "detection"), "detection.beta"),
        theta=_number(_get(d, "theta_rad", "detection", 0.0), "detection.theta_rad"),
        eta=_number(_get(d, "eta", "detection", 1.0), "detection.eta"),
        photons_per_pW=_number(_get(d, "photons_per_pw", "detection", 12.4), "detection.photons_per_pw"),
    )

    s = data.get("simulation", {})
    peak = s.get("target_peak_photons")
    simulation = SimulationSettings(
        dt=_number(s.get("dt_s", 1e-9), "simulation.dt_s"),
        oversample=int(_number(s.get("oversample", 10), "simulation.oversample")),
        tail_kappa=_number(s.get("tail_kappa", 10.0), "simulation.tail_kappa"),
        target_peak_photons=None if peak is None else _number(peak, "simulation.target_peak_photons"),
    )
    return Config(resonator, tuple(branches), trial, detection, simulation)


def config_to_dict(cfg: Config) -> dict:
    r, branches, trial, d = cfg
    s = cfg.simulation
    sim = {"dt_s": s.dt, "oversample": s.oversample, "tail_kappa": s.tail_kappa}
    if s.target_peak_photons is not None:
        sim["target_peak_photons"] = s.target_peak_photons
    return {
        "resonator": {
            "kappa_hz": rad_to_hz(r.kappa),
            "carrier_detuning_hz": rad_to_hz(r.carrier_detuning),
            "noise_floor_photons": r.noise_floor_photons,
        },
        "branches": [
            {
                "label": b.label,
                "chi_hz": rad_to_hz(b.chi),
                "zeta_hz": rad_to_hz(b.zeta),
                "decay_rate_hz": b.decay_rate,
                "decay_target": b.decay_target,
            }
            for b in branches
        ],
        "trial": {
            "amplitude_re": trial.amplitude.real,
            "amplitude_im": trial.amplitude.imag,
            "exponent_m": trial.exponent_m,
            "duration_s": trial.duration,
        },
        "detection": {
            "alpha": d.alpha,
            "phi_rad": d.phi,
            "beta": d.beta,
            "theta_rad": d.theta,
            "eta": d.eta,
            "photons_per_pw": d.photons_per_pW,
        },
        "simulation": sim,
    }


def load_config(path) -> Config:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"parse failure: {exc}") from exc
    return config_from_dict(data)


def dump_config(cfg: Config, path=None) -> str:
    text = json.dumps(config_to_dict(cfg), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def bundled_config_path(name: str) -> Path:
    """Path of a config shipped with the package (``paper_qubit`` or ``paper_qutrit``)."""
    if not name.endswith(".json"):
        name += ".json"
    return Path(__file__).parent / "configs" / name


def load_bundled(name: str) -> Config:
    return load_config(bundled_config_path(name))

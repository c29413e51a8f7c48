"""CSV/JSON writers, waveform reader and run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import Waveform

FIELD_UNITS = "sqrt(photons)"
FLUX_UNITS = "sqrt(photons/s)"
MANIFEST_NAME = "manifest.json"


def _fmt(x: float) -> str:
    return repr(float(x))


def write_waveform_csv(path, wf: Waveform, units: str = FIELD_UNITS) -> Path:
    path = Path(path)
    t_ns = wf.t * 1e9
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# units: {units}\n")
        fh.write(f"# dt_s: {_fmt(wf.dt)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_ns", "re", "im"])
        for t, v in zip(t_ns, wf.samples):
            w.writerow([_fmt(t), _fmt(v.real), _fmt(v.imag)])
    return path


def read_waveform_csv(path) -> Waveform:
    """Inverse of :func:`write_waveform_csv`; the ``# dt_s`` line wins over time differences."""
    path = Path(path)
    dt = None
    rows = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                if key.strip() == "dt_s":
                    dt = float(val)
                continue
            if line.startswith("t_ns"):
                continue
            rows.append([float(x) for x in line.split(",")])
    if not rows:
        raise ValueError(f"{path}: no samples")
    arr = np.array(rows)
    t = arr[:, 0] * 1e-9
    if dt is None:
        if len(t) < 2:
            raise ValueError(f"{path}: cannot infer time step from one sample")
        steps = np.diff(t)
        dt = float(np.mean(steps))
        if np.max(np.abs(steps - dt)) > 1e-6 * dt:
            raise ValueError(f"{path}: non-uniform time axis")
    return Waveform(arr[:, 1] + 1j * arr[:, 2], dt, float(t[0]))


def write_table_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def environment_info() -> dict:
    import scipy

    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "machine": platform.machine(),
    }


def write_manifest(out_dir, *, command: str, argv: Sequence[str], config_path, seed, outputs: Sequence[Path]) -> Path:
    from . import __version__

    out_dir = Path(out_dir)
    payload = {
        "command": command,
        "argv": list(argv),
        "config_path": str(config_path),
        "config_sha256": sha256_file(config_path),
        "seed": seed,
        "tool_version": __version__,
        "environment": environment_info(),
        "outputs": [{"file": Path(p).name, "sha256": sha256_file(p)} for p in sorted(outputs)],
    }
    return write_json(out_dir / MANIFEST_NAME, payload)

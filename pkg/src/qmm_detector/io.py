"""Output bundles: CSV tables, npz dumps and a run manifest."""
from __future__ import annotations

import csv
import json
import platform
import subprocess
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def write_columns(path: Path, columns: Mapping[str, Sequence]) -> Path:
    """Write equal-length columns as CSV with a header row."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    n = {len(d) for d in data}
    if len(n) > 1:
        raise ValueError(f"columns have different lengths: {sorted(n)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow([_fmt(v) for v in row])
    return path


def write_rows(path: Path, rows: Sequence[Mapping]) -> Path:
    """Write a list of dicts as CSV; the header is the union of keys in order."""
    names: list[str] = []
    for r in rows:
        names.extend(k for k in r if k not in names)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in names])
    return path


def read_csv(path: Path) -> dict[str, np.ndarray]:
    """Columns of a numeric CSV written by :func:`write_columns`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for i, name in enumerate(header):
        col = [r[i] for r in body]
        try:
            out[name] = np.array([float(c) for c in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def dump_arrays(path: Path, **arrays) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(path, **arrays)
    return path


def git_revision(cwd: Path | None = None) -> str:
    try:
        res = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=cwd or Path(__file__).parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() if res.returncode == 0 else "unknown"


def write_manifest(out_dir: Path, config: dict, seeds: Mapping, outputs: Sequence[str],
                   summary: Mapping | None = None) -> Path:
    manifest = {
        "package_version": __version__,
        "git_revision": git_revision(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seeds": dict(seeds),
        "config": config,
        "outputs": sorted(outputs),
        "summary": dict(summary or {}),
    }
    path = out_dir / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")

"""Experiment configuration: presets, YAML loading and full resolution.

A config file is YAML with four sections (``params``, ``run``, ``analysis``
and top-level keys ``experiment``, ``seed``, ``workers``, ``output``).  Every
section is merged over the preset of the chosen experiment, and the merged
result is what gets echoed next to the outputs.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .models import ModelParams

EXPERIMENTS = ("fig2-resonant", "fig2-mismatch", "fig3-uncoupled", "fig3-coupled", "oracle-suite", "custom")

TWO_PI = 2 * math.pi
_DT = TWO_PI / 200

_FIG2_RUN = {
    "photons": [0, 1, 5],
    "n_traj": 20,
    "duration_periods": 500,
    "warmup_periods": 300,
    "dt": _DT,
    "stride": 10,
    "batch_size": 20,
    "method": "auto",
    "qubit_state": "plus",
    "fock_input": False,
    "auto_truncation": True,
    # per-photon truncation overrides; the input mode is also raised
    # automatically to hold the initial coherent state
    "truncation": {0: {"m_b": 8}, 1: {"m_b": 8}, 5: {"m_b": 14}},
}

_FIG3_PARAMS = {
    "eps": 0.0,
    "delta": 1.0,
    "noise_D": 0.002,
    "drive_freq": 0.8,
    "g_a": 0.0,
    "g_b": 0.0,
}

PRESETS: dict[str, dict] = {
    "fig2-resonant": {
        "params": {"n_qubits": 2, "omega_a": 0.5, "omega_b": 0.5, "g_a": 0.01, "g_b": 0.01,
                   "gamma_z": 1e-3, "gamma_xy": 1e-3, "gamma_b": 5e-4, "m_a": 8, "m_b": 6},
        "run": _FIG2_RUN,
        "analysis": {"window": "hann", "segments": 8, "band_halfwidth": 0.1},
    },
    "fig2-mismatch": {
        "params": {"n_qubits": 2, "omega_a": 0.099, "omega_b": 0.1, "g_a": 0.01, "g_b": 0.01,
                   "gamma_z": 1e-3, "gamma_xy": 1e-3, "gamma_b": 1e-4, "m_a": 8, "m_b": 6},
        "run": _FIG2_RUN,
        "analysis": {"window": "hann", "segments": 8, "band_halfwidth": 0.05},
    },
    "fig3-uncoupled": {
        "params": dict(_FIG3_PARAMS, n_qubits=9, drive_amp=0.002, g_qq=0.0),
        "run": {"duration_periods": 2000, "warmup_periods": 200, "dt": _DT, "stride": 10,
                "realizations": 100, "block": 100},
        "analysis": {"window": "hann", "segments": 8, "signal_halfwidth": 1,
                     "baseline_band": [[0.72, 0.78], [0.82, 0.88]], "noise_band": [0.3, 2.0]},
    },
    "fig3-coupled": {
        "params": dict(_FIG3_PARAMS, n_qubits=2, drive_amp=0.05, g_qq=0.0),
        "run": {"duration_periods": 2000, "warmup_periods": 200, "dt": _DT, "stride": 10,
                "realizations": 100, "block": 100, "g_values": [0.0, 0.025, 0.05, 0.075, 0.1]},
        "analysis": {"window": "hann", "segments": 8, "signal_halfwidth": 1,
                     "baseline_band": [[0.72, 0.78], [0.82, 0.88]], "noise_band": [0.3, 2.0]},
    },
    "oracle-suite": {
        "params": {},
        "run": {"damping_traj": 2000},
        "analysis": {},
    },
    "custom": {
        "params": {},
        "run": dict(_FIG2_RUN, photons=[1], truncation={}),
        "analysis": {"window": "hann", "segments": 8, "band_halfwidth": 0.1},
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "truncation":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


PARAM_NAMES = {f.name for f in fields(ModelParams)}
# envelopes are callables: allowed in the echo as null, never swept
_FIXED = {"f_envelope", "h_envelope"}


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1
    output: str = "output"

    def model_params(self, **overrides) -> ModelParams:
        p = dict(self.params)
        p.update(overrides)
        try:
            return ModelParams(**p)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid params: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "workers": self.workers,
            "output": str(self.output),
            "params": self.model_params().to_dict(),
            "run": copy.deepcopy(self.run),
            "analysis": copy.deepcopy(self.analysis),
        }

    def dump(self) -> str:
        return yaml.safe_dump(_plain(self.to_dict()), sort_keys=False)

    def with_overrides(self, section: str, **values) -> "ExperimentConfig":
        data = {"params": self.params, "run": self.run, "analysis": self.analysis}
        data[section] = _merge(data[section], values)
        return ExperimentConfig(self.experiment, data["params"], data["run"], data["analysis"],
                                self.seed, self.workers, self.output)

    def sweepable(self) -> list[str]:
        return sorted((PARAM_NAMES - _FIXED) | set(self.run))


def _plain(obj):
    if isinstance(obj, dict):
        return {(k if isinstance(k, (str, int)) else str(k)): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def resolve(data: dict) -> ExperimentConfig:
    """Merge a raw mapping over its experiment preset and validate it."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    exp = data.get("experiment")
    if exp not in PRESETS:
        raise ConfigError(f"unknown experiment {exp!r}; choose one of {', '.join(EXPERIMENTS)}")
    unknown = set(data) - {"experiment", "params", "run", "analysis", "seed", "workers", "output"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    preset = PRESETS[exp]
    params = _merge(preset["params"], data.get("params") or {})
    bad = set(params) - PARAM_NAMES
    if bad:
        raise ConfigError(f"unknown model parameters: {sorted(bad)}")
    if any(params.get(k) is not None for k in _FIXED):
        raise ConfigError("envelopes cannot be set from a config file")
    cfg = ExperimentConfig(
        experiment=exp,
        params=params,
        run=_merge(preset["run"], data.get("run") or {}),
        analysis=_merge(preset["analysis"], data.get("analysis") or {}),
        seed=int(data.get("seed", 0)),
        workers=int(data.get("workers", 1)),
        output=str(data.get("output", "output")),
    )
    cfg.model_params()  # validate
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def load(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    return resolve(data or {})


def preset(experiment: str, **top) -> ExperimentConfig:
    return resolve(dict(top, experiment=experiment))

"""Experiment protocols: each turns a resolved config into an output bundle.

A bundle is a directory holding ``config.yaml`` (the fully resolved config),
CSV series and spectra, ``summary.csv``/``summary.txt`` and
``manifest.json``.  Nothing time-dependent is written, so the same config
always produces byte-identical files.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .config import ConfigError, ExperimentConfig, PARAM_NAMES
from .master import averaged_response, run_coupled_pair, run_uncoupled_ensemble
from .parallel import parallel_map
from .qsd import LEAKAGE_LIMIT, RunConfig, run_ensemble
from .spectral import Spectrum, mean_spectrum, psd, snr

log = logging.getLogger(__name__)


@dataclass
class Bundle:
    out_dir: Path
    files: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    ok: bool = True
    messages: list = field(default_factory=list)

    def add(self, path: Path) -> None:
        self.files.append(str(path.relative_to(self.out_dir)))

    def fail(self, msg: str) -> None:
        self.ok = False
        self.messages.append(msg)


def _tag(v) -> str:
    return f"{v:g}" if isinstance(v, (int, float)) else str(v)


def _spectrum(series: np.ndarray, dt: float, analysis: dict, name: str) -> Spectrum:
    return psd(series, dt, window=analysis.get("window", "hann"), segments=int(analysis.get("segments", 8)),
               name=name)


# --------------------------------------------------------------- QSD (fig2, custom)


def _truncation(run: dict, photons) -> dict:
    table = run.get("truncation") or {}
    for key in (photons, int(photons) if float(photons).is_integer() else None, str(photons)):
        if key is not None and key in table:
            return dict(table[key])
    return {}


def _run_qsd(cfg: ExperimentConfig, b: Bundle) -> None:
    run, an = cfg.run, cfg.analysis
    photons = list(run["photons"])
    if not photons:
        raise ConfigError("run.photons must not be empty")
    base = cfg.model_params()
    half = float(an.get("band_halfwidth", 0.1))
    band = (base.omega_b - half, base.omega_b + half)
    rows = []
    for p in photons:
        params = cfg.model_params(**_truncation(run, p))
        rc = RunConfig(params=params, photons=float(p), fock_input=bool(run.get("fock_input", False)),
                       qubit_state=run.get("qubit_state", "plus"),
                       duration_periods=float(run["duration_periods"]),
                       warmup_periods=float(run["warmup_periods"]), dt=float(run["dt"]),
                       stride=int(run["stride"]), seed=cfg.seed, method=run.get("method", "auto"),
                       auto_truncation=bool(run.get("auto_truncation", True)))
        rp = rc.resolved_params()
        log.info("photons=%g: dim=%d (m_a=%d, m_b=%d), %d trajectories, %d steps", p,
                 2 ** rp.n_qubits * rp.m_a * rp.m_b, rp.m_a, rp.m_b, run["n_traj"], rc.n_steps)
        ens = run_ensemble(rc, int(run["n_traj"]), batch_size=int(run.get("batch_size", 32)),
                           workers=cfg.workers)
        mean = ens.mean
        tag = _tag(p)
        cols = {"time": mean.times, "in_window": mean.in_window.astype(int)}
        for name in mean.observables:
            cols[f"mean_{name}"] = mean.observables[name]
            cols[f"stderr_{name}"] = ens.stderr[name]
        b.add(io.write_columns(b.out_dir / f"series_photons{tag}.csv", cols))
        stack = {name: np.stack([r.observables[name] for r in ens.records])
                 for name in ("x_b", "p_b", "n_a", "n_b", "S_z")}
        b.add(io.dump_arrays(b.out_dir / f"trajectories_photons{tag}.npz", times=mean.times,
                             in_window=mean.in_window, seeds=np.array([r.seed for r in ens.records]), **stack))
        sdt = mean.sample_dt
        sx = _spectrum(stack["x_b"][:, mean.in_window], sdt, an, "x_b")
        sp = _spectrum(stack["p_b"][:, mean.in_window], sdt, an, "p_b")
        b.add(io.write_columns(b.out_dir / f"spectra_photons{tag}.csv",
                               {"omega": sx.freqs, "psd_x_b": sx.psd, "psd_p_b": sp.psd}))
        row = {
            "photons": float(p), "m_a": rp.m_a, "m_b": rp.m_b, "n_traj": len(ens.records),
            "band_lo": band[0], "band_hi": band[1],
            "band_power_x_b": sx.band_power(*band), "band_power_p_b": sp.band_power(*band),
            "peak_omega_x_b": sx.peak_frequency(0.0, 2 * base.omega_b + 0.5),
            "leakage_a": mean.leakage_a, "leakage_b": mean.leakage_b,
            "max_norm_drift": float(np.max(mean.norm_drift)), "flagged": mean.flagged,
        }
        row["band_power_total"] = row["band_power_x_b"] + row["band_power_p_b"]
        rows.append(row)
        if ens.flagged:
            b.fail(f"photons={p}: truncation leakage above {LEAKAGE_LIMIT:g} "
                   f"(a: {mean.leakage_a:.2e}, b: {mean.leakage_b:.2e}); raise m_a/m_b")
    ref = next((r for r in rows if r["photons"] == 0), None)
    for r in rows:
        for q in ("x_b", "p_b", "total"):
            key = f"band_power_{q}"
            r[f"ratio_{q}_vs_0"] = r[key] / ref[key] if ref and ref[key] > 0 else float("nan")
    b.rows = rows
    b.add(io.write_rows(b.out_dir / "summary.csv", rows))
    signal = next((r for r in rows if r["photons"] > 0), rows[0])
    b.summary = {
        "snr": signal["ratio_total_vs_0"],
        "amplitude": math.sqrt(2.0 * signal["band_power_total"]),
    }


# --------------------------------------------------------------- fig3 chains


def _chain_periods(cfg: ExperimentConfig) -> tuple[float, float]:
    p = cfg.model_params()
    period = 2 * math.pi / p.qubit_splitting(0)
    return float(cfg.run["duration_periods"]) * period, float(cfg.run["warmup_periods"]) * period


def _blocks(n: int, size: int) -> list[list[int]]:
    if n < 1:
        raise ConfigError("run.realizations must be >= 1")
    size = max(1, int(size))
    return [list(range(i, min(i + size, n))) for i in range(0, n, size)]


def _uncoupled_job(args):
    params, n, duration, dt, reals, seed, stride, warmup = args
    return run_uncoupled_ensemble(params, n, duration, dt, reals, seed, stride, warmup)


def _coupled_job(args):
    params, duration, dt, reals, seed, stride, warmup = args
    return run_coupled_pair(params, duration, dt, reals, seed, stride, warmup, keep_bloch=0 in reals)


def _signal_metrics(spec: Spectrum, params, an: dict) -> dict:
    h = int(an.get("signal_halfwidth", 1))
    rep = snr(spec, params.drive_freq, h, an["baseline_band"])
    i0 = int(np.argmin(np.abs(spec.freqs - params.drive_freq)))
    lo = spec.freqs[max(i0 - h, 0)]
    hi = spec.freqs[min(i0 + h, len(spec.freqs) - 1)]
    nb = an.get("noise_band", [0.0, float(spec.freqs[-1])])
    return {
        "snr": rep.snr, "amplitude": rep.amplitude, "signal_power": rep.signal_power,
        "baseline_power": rep.baseline_power, "signal_omega": rep.signal_freq,
        "noise_peak_omega": spec.peak_frequency(nb[0], nb[1], exclude=[(lo - 1e-12, hi + 1e-12)]),
    }


def _run_uncoupled(cfg: ExperimentConfig, b: Bundle) -> None:
    run, an = cfg.run, cfg.analysis
    params = cfg.model_params()
    n_max = params.n_qubits
    duration, warmup = _chain_periods(cfg)
    dt, stride = float(run["dt"]), int(run["stride"])
    tasks = [(params, n_max, duration, dt, reals, cfg.seed, stride, warmup)
             for reals in _blocks(int(run["realizations"]), run.get("block", 25))]
    parts = parallel_map(_uncoupled_job, tasks, workers=cfg.workers)
    times, win = parts[0].times, parts[0].in_window
    sz = np.concatenate([r.sz for r in parts], axis=0)
    cols = {"time": times, "in_window": win.astype(int)}
    for j in range(n_max):
        cols[f"sz_q{j}_r0"] = sz[0, j]
    cols["S_z_r0"] = sz[0].sum(axis=0)
    cols["S_z_mean"] = sz.sum(axis=1).mean(axis=0)
    b.add(io.write_columns(b.out_dir / "series.csv", cols))
    sdt = dt * stride
    spectra, rows = {}, []
    for n in range(1, n_max + 1):
        total = sz[:, :n, :].sum(axis=1)[:, win]
        spec = _spectrum(total, sdt, an, f"N={n}")
        spectra[f"psd_N{n}"] = spec.psd
        rows.append(dict(n_qubits=n, **_signal_metrics(spec, params, an)))
    for r in rows:
        r["snr_ratio_vs_1"] = r["snr"] / rows[0]["snr"]
    b.add(io.write_columns(b.out_dir / "spectra.csv", {"omega": spec.freqs, **spectra}))
    b.add(io.write_rows(b.out_dir / "summary.csv", rows))
    b.rows = rows
    last = rows[-1]
    b.summary = {"snr": last["snr"], "amplitude": last["amplitude"], "snr_ratio_vs_1": last["snr_ratio_vs_1"],
                 "noise_peak_omega": last["noise_peak_omega"]}


def _run_coupled(cfg: ExperimentConfig, b: Bundle) -> None:
    run, an = cfg.run, cfg.analysis
    base = cfg.model_params()
    g_values = run.get("g_values")
    g_values = [base.g_qq] if g_values is None else list(g_values)
    if not g_values:
        raise ConfigError("run.g_values must not be empty (use null to take params.g_qq)")
    duration, warmup = _chain_periods(cfg)
    dt, stride = float(run["dt"]), int(run["stride"])
    blocks = _blocks(int(run["realizations"]), run.get("block", 25))
    spectra, rows = {}, []
    for g in g_values:
        params = base.with_(g_qq=float(g))
        parts = parallel_map(_coupled_job, [(params, duration, dt, reals, cfg.seed, stride, warmup)
                                            for reals in blocks], workers=cfg.workers)
        times, win = parts[0].times, parts[0].in_window
        sz = np.concatenate([r.sz for r in parts], axis=0)
        tag = _tag(float(g))
        b.add(io.write_columns(b.out_dir / f"series_g{tag}.csv",
                               {"time": times, "in_window": win.astype(int), "S_z_r0": sz[0],
                                "S_z_mean": sz.mean(axis=0)}))
        b.add(io.dump_arrays(b.out_dir / f"bloch_g{tag}_r0.npz", times=times, bloch=parts[0].bloch))
        spec = _spectrum(sz[:, win], dt * stride, an, f"g={tag}")
        spectra[f"psd_g{tag}"] = spec.psd
        row = dict(g_qq=float(g), **_signal_metrics(spec, params, an))
        row["averaged_amplitude"] = abs(averaged_response(params)) * params.drive_amp
        rows.append(row)
    b.add(io.write_columns(b.out_dir / "spectra.csv", {"omega": spec.freqs, **spectra}))
    b.add(io.write_rows(b.out_dir / "summary.csv", rows))
    b.rows = rows
    b.summary = {k: rows[0][k] for k in ("snr", "amplitude", "noise_peak_omega")}


def _run_oracles(cfg: ExperimentConfig, b: Bundle) -> None:
    from .oracle_suite import run_suite

    results = run_suite(seed=cfg.seed, damping_traj=int(cfg.run.get("damping_traj", 2000)),
                        workers=cfg.workers)
    rows = [r.as_row() for r in results]
    b.rows = rows
    b.add(io.write_rows(b.out_dir / "oracle_table.csv", rows))
    for r in results:
        if not r.passed:
            b.fail(f"oracle check failed: {r.name} ({r.value:.3e} vs {r.tolerance:.1e})")
    b.summary = {"checks": len(rows), "passed": sum(r.passed for r in results)}


_PROTOCOLS = {
    "fig2-resonant": _run_qsd,
    "fig2-mismatch": _run_qsd,
    "custom": _run_qsd,
    "fig3-uncoupled": _run_uncoupled,
    "fig3-coupled": _run_coupled,
    "oracle-suite": _run_oracles,
}


def _prepare_dir(out: Path) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _summary_text(cfg: ExperimentConfig, b: Bundle) -> str:
    lines = [f"experiment: {cfg.experiment}", f"seed: {cfg.seed}", f"status: {'ok' if b.ok else 'FAILED'}"]
    lines += [f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}" for k, v in b.summary.items()]
    for r in b.rows:
        lines.append("  " + " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    lines += [f"! {m}" for m in b.messages]
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> Bundle:
    """Run one experiment and write its bundle; ``bundle.ok`` is False when a
    leakage monitor or oracle check failed."""
    out = _prepare_dir(Path(out_dir if out_dir is not None else cfg.output))
    b = Bundle(out)
    (out / "config.yaml").write_text(cfg.dump())
    b.add(out / "config.yaml")
    _PROTOCOLS[cfg.experiment](cfg, b)
    (out / "summary.txt").write_text(_summary_text(cfg, b))
    b.add(out / "summary.txt")
    seeds = {"master": cfg.seed}
    if cfg.experiment in ("fig2-resonant", "fig2-mismatch", "custom"):
        seeds["trajectories"] = f"{cfg.seed} + i, i < {cfg.run['n_traj']}"
    elif cfg.experiment.startswith("fig3"):
        seeds["noise"] = f"SeedSequence([{cfg.seed}, realization, qubit])"
    io.write_manifest(out, cfg.to_dict(), seeds, b.files + ["manifest.json"],
                      {**b.summary, "ok": b.ok, "messages": b.messages})
    return b


def sweepable(cfg: ExperimentConfig) -> list[str]:
    return cfg.sweepable()


def sweep(cfg: ExperimentConfig, parameter: str, values: Sequence, out_dir: str | Path | None = None) -> Bundle:
    """One bundle per value in ``<out>/<parameter>=<value>/`` plus
    ``aggregate.csv`` with columns ``value, snr, amplitude`` (and any further
    headline metrics of the protocol)."""
    valid = cfg.sweepable()
    if parameter not in valid:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; valid names: {', '.join(valid)}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = _prepare_dir(Path(out_dir if out_dir is not None else cfg.output))
    agg = Bundle(out)
    rows = []
    for v in values:
        if parameter in PARAM_NAMES:
            sub = cfg.with_overrides("params", **{parameter: v})
            if cfg.experiment == "fig3-coupled" and parameter == "g_qq":
                sub = sub.with_overrides("run", g_values=None)
        else:
            sub = cfg.with_overrides("run", **{parameter: v})
        bundle = run_experiment(sub, out / f"{parameter}={_tag(v)}")
        rows.append({"value": v, **bundle.summary})
        if not bundle.ok:
            for m in bundle.messages:
                agg.fail(f"{parameter}={v}: {m}")
    agg.rows = rows
    agg.add(io.write_rows(out / "aggregate.csv", rows))
    (out / "config.yaml").write_text(cfg.dump())
    return agg

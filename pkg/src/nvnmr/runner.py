"""Run a configured experiment and write its artifact bundle."""

from __future__ import annotations

import dataclasses
import json
import os
import platform
import warnings
from importlib import metadata

import numpy as np
import scipy

from . import fisher as fi
from . import noise as nz
from . import quantum as qs
from . import spectral as spc
from .config import ConfigError, ExperimentConfig
from .seeding import seed_sequence
from .signal import (
    RegimeWarning,
    accumulated_phase,
    hartmann_hahn_probability,
    measurement_probability,
    regime_flags,
    strong_coupling_probability,
    weak_coupling_probability,
)
from .trace import ProbabilityTrace

TIME_COL = "t [time]"
FREQ_COL = "omega [rad/time]"


class InvariantError(RuntimeError):
    """An output violated an internal invariant (non-finite value, bad shape)."""


def sub_seed(master: int, component: str) -> int:
    return int(seed_sequence(master, component).generate_state(1, np.uint32)[0])


# -- writers -------------------------------------------------------------------

def write_csv(path, header, columns):
    cols = [np.asarray(c, dtype=float) for c in columns]
    data = np.column_stack(cols)
    if not np.all(np.isfinite(data)):
        raise InvariantError(f"non-finite value in {os.path.basename(path)}")
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            raise InvariantError("non-finite value in JSON output")
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"artifact": pkg, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def read_trace_csv(path, tau=None) -> ProbabilityTrace:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times, values = data[:, 0], data[:, 1]
    return ProbabilityTrace(times, values, tau if tau is not None else float(times[1] - times[0]))


# -- pipelines -----------------------------------------------------------------

def _phase_probability(t, p, m):
    return measurement_probability(accumulated_phase(t, p, m), p.phi_m)


_CLOSED = {
    "closed_form": lambda t, p, m: strong_coupling_probability(t, p, m),
    "weak": lambda t, p, m: weak_coupling_probability(t, p, m),
    "hartmann_hahn": lambda t, p, m: hartmann_hahn_probability(t, p),
}


def _ensemble(cfg):
    return dataclasses.replace(cfg.ensemble, seed=sub_seed(cfg.seed, "ensemble"))


def _sigma(noise):
    return getattr(noise, "sigma", getattr(noise, "half_width", None))


def simulate_trace(cfg: ExperimentConfig) -> tuple[ProbabilityTrace, dict]:
    p, m = cfg.protocol, cfg.micro
    t = p.shot_times()
    info = {}
    if cfg.model == "ensemble":
        trace = nz.average_over_macroscopic(_phase_probability, cfg.noise, _ensemble(cfg), t, p, m)
        return trace, info
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        values = _CLOSED[cfg.model](t, p, m)
    sigma = _sigma(cfg.noise)
    flags = regime_flags(p, m, weak=cfg.model == "weak", sigma=sigma, t_min=float(t[0]))
    trace = ProbabilityTrace(t, values, p.tau, flags=tuple(flags))
    n_spot = int(cfg.analysis.get("spot_checks", 0))
    if n_spot and cfg.model == "closed_form" and sigma:
        info["spot_check"] = _spot_check(cfg, trace, n_spot)
    return trace, info


def _spot_check(cfg, trace, n_spot):
    """Monte Carlo average of the per-offset probability at a subset of times."""
    sigma = _sigma(cfg.noise)
    t_min = float(cfg.analysis.get("spot_check_min_sigma_t", 50.0)) / sigma
    idx = np.flatnonzero(trace.times >= t_min)
    idx = idx[np.linspace(0, idx.size - 1, min(n_spot, idx.size)).astype(int)]
    ens = _ensemble(cfg)
    if ens.method != "monte_carlo":
        ens = dataclasses.replace(ens, method="monte_carlo")
    mc = nz.average_over_macroscopic(_phase_probability, cfg.noise, ens, trace.times[idx],
                                     cfg.protocol, cfg.micro)
    z = np.abs(mc.values - trace.values[idx]) / np.maximum(mc.stderr, 1e-300)
    return {"n_points": int(idx.size), "n_samples": ens.n_samples,
            "max_abs_diff": float(np.max(np.abs(mc.values - trace.values[idx]))),
            "max_z": float(z.max()), "fraction_within_4_se": float(np.mean(z <= 4.0))}


def _beat(p):
    return abs(p.omega_r)


def _analyse(trace, cfg, beat):
    a = cfg.analysis
    spec = spc.compute_spectrum(trace, window=a.get("window", "boxcar"), detrend=a.get("detrend", True))
    report = spc.detect_harmonics(spec, beat, int(a.get("max_harmonic", 4)))
    top = report.peaks[0] if report.peaks else None
    fund = report.harmonic(1)
    ratios = {str(pk.harmonic): pk.magnitude / fund.magnitude for pk in report.harmonics
              if pk.harmonic != 1 and fund.magnitude > 0}
    summary = {
        "largest_peak": top.to_dict() if top else None,
        "largest_peak_bin_offset": (abs(top.frequency - beat) / spec.bin_width) if top else None,
        "fundamental": fund.to_dict(),
        "harmonic_ratios": ratios,
        "bin_width": spec.bin_width,
    }
    return spec, report, summary


def run_trace(cfg):
    trace, info = simulate_trace(cfg)
    spec, report, summary = _analyse(trace, cfg, _beat(cfg.protocol))
    tables = {
        "trace.csv": ([TIME_COL, "P [probability]"], [trace.times, trace.values]),
        "spectrum.csv": ([FREQ_COL, "magnitude [probability]"], [spec.freqs, spec.mags]),
    }
    return tables, report.to_dict(), {**summary, **info, "flags": list(trace.flags)}


def run_amplification(cfg):
    p = cfg.protocol
    alphas = [float(a) for a in cfg.analysis.get("alphas", [1, 2, 4, 8])]
    large = cfg.analysis.get("large_alpha")
    runs = alphas + ([float(large)] if large is not None else [])
    beat = _beat(p)
    rows, traces, spectra = [], [], []
    for alpha in runs:
        q = dataclasses.replace(p, alpha=alpha)
        sub = dataclasses.replace(cfg, protocol=q)
        trace, _ = simulate_trace(sub)
        spec, report, _ = _analyse(trace, sub, beat)
        half, fund = report.harmonic(0.5), report.harmonic(1)
        rows.append({"alpha": alpha, "half_beat": half.to_dict(), "beat": fund.to_dict(),
                     "phase_scale": abs(q.g) * q.tau * alpha})
        traces.append(trace.values)
        spectra.append(spec.mags)
    x = np.array(alphas)
    y = np.array([r["half_beat"]["magnitude"] for r in rows[:len(alphas)]])
    slope = float(x @ y / (x @ x))
    ss_res = float(np.sum((y - slope * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    fit = {"slope": slope, "r2": 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0,
           "predicted_slope": 2.0 * (p.g * p.tau) ** 2}
    names = [f"P(alpha={a:g}) [probability]" for a in runs]
    tables = {
        "trace.csv": ([TIME_COL] + names, [p.shot_times()] + traces),
        "spectrum.csv": ([FREQ_COL] + [n.replace("P(", "magnitude(") for n in names], [spec.freqs] + spectra),
    }
    large_row = rows[-1] if large is not None else None
    summary = {"half_beat_fit": fit, "large_alpha": large_row}
    return tables, {"expected_beat": beat, "alpha_table": rows}, summary


def run_ou_decay(cfg):
    p = cfg.protocol
    if not isinstance(cfg.noise, nz.OrnsteinUhlenbeck):
        raise ConfigError("ou_decay needs noise.kind = 'ou'")
    ratios = [float(r) for r in cfg.analysis.get("tau_t_ratios", [0.1, 1.0, 10.0])]
    n_paths = int(cfg.analysis.get("n_paths", 200))
    beat = _beat(p)
    rows, traces, spectra = [], [], []
    for i, r in enumerate(ratios):
        noise = nz.OrnsteinUhlenbeck(r * p.tau, cfg.noise.diffusion, seed=sub_seed(cfg.seed, f"ou-{i}"))
        trace = nz.ou_ensemble_trace(p, noise, n_paths)
        spec = spc.compute_spectrum(trace)
        amp = spc.beat_amplitude(trace, beat)
        sigma = float(np.sqrt(noise.stationary_variance))
        static = nz.static_ensemble_beat_amplitude(p.g, p.tau, p.delta1, p.delta2, sigma)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            pred = nz.beat_amplitude_decay_prediction(p.g, p.tau, sigma)
        rows.append({"tau_t_over_tau": r, "correlation_time": noise.correlation_time,
                     "sigma": sigma, "amplitude": amp, "static_amplitude": static,
                     "ratio_to_static": amp / static, "prediction": pred})
        traces.append(trace.values)
        spectra.append(spec.mags)
    amps = np.array([row["amplitude"] for row in rows])
    slope = float(np.polyfit(np.log(ratios), np.log(amps), 1)[0])
    names = [f"tau_t/tau={r:.4g}" for r in ratios]
    tables = {
        "trace.csv": ([TIME_COL] + [f"P({n}) [probability]" for n in names], [p.shot_times()] + traces),
        "spectrum.csv": ([FREQ_COL] + [f"magnitude({n}) [probability]" for n in names], [spec.freqs] + spectra),
    }
    summary = {"slope": slope, "n_paths": n_paths,
               "max_static_deviation": float(max(abs(row["ratio_to_static"] - 1) for row in rows))}
    return tables, {"expected_beat": beat, "amplitude_table": rows}, summary


def run_xy_readout(cfg):
    p = cfg.protocol
    spec_n = qs.NucleusSpec((p.g, p.g), (p.delta1, p.delta2))
    t = p.shot_times()
    beat = _beat(p)
    out, peaks, spectra, traces = {}, {}, [], []
    for basis in ("X", "Y"):
        trace = ProbabilityTrace(t, qs.multinucleus_readout(spec_n, p.tau, t, basis), p.tau)
        spec = spc.compute_spectrum(trace)
        report = spc.detect_harmonics(spec, beat, 2)
        larmor = [spc._peak_at(spec, d, None) for d in (p.delta1, p.delta2)]
        peaks[basis] = {"beat": report.harmonic(1).to_dict(), "larmor": [pk.to_dict() for pk in larmor],
                        "peaks": [pk.to_dict() for pk in report.peaks]}
        out[basis] = {"beat_present": report.harmonic(1).present,
                      "larmor_present": all(pk.present for pk in larmor)}
        traces.append(trace.values)
        spectra.append(spec.mags)
    tables = {
        "trace.csv": ([TIME_COL, "P_x [probability]", "P_y [probability]"], [t] + traces),
        "spectrum.csv": ([FREQ_COL, "magnitude_x [probability]", "magnitude_y [probability]"], [spec.freqs] + spectra),
    }
    return tables, {"expected_beat": beat, **peaks}, out


def run_fisher(cfg):
    p = cfg.protocol
    a = cfg.analysis
    amps = a.get("amplitudes")
    sc = fi.FisherScenario(a.get("readout", "SensingX"), p, amplitudes=tuple(amps) if amps else None,
                           noisy_omega_s=bool(a.get("noisy_omega_s", True)),
                           delta_width=cfg.micro.delta_width)
    res = fi.fisher_information_sum(sc, p.n_shots)
    summary = {"scenario": {"readout": sc.readout.value, "noisy_omega_s": sc.noisy_omega_s,
                            "couplings": list(sc.couplings), "omega_r": sc.omega_r, "omega_s": sc.omega_s},
               "result": res.to_dict()}
    n_phases = int(a.get("n_phases", 64))
    if a.get("n_values") and a.get("tau_values"):
        fit = fi.fit_scaling(sc, a["n_values"], a["tau_values"], n_phases)
        summary["scaling_fit"] = dataclasses.asdict(fit)
        summary["weak_prefactor"] = p.g**2 / 3.0
    strong = a.get("strong")
    if strong:
        q = dataclasses.replace(p, g=float(strong["g"]))
        sc2 = dataclasses.replace(sc, params=q)
        fit2 = fi.fit_scaling(sc2, strong.get("n_values", a.get("n_values", [100, 1000])),
                              strong["tau_values"], n_phases)
        summary["strong_scaling_fit"] = dataclasses.asdict(fit2)
        summary["strong_g_tau"] = q.g * q.tau
    tables = {"per_shot.csv": ([TIME_COL, "fisher_information [time^2]"], [res.times, res.per_shot])}
    return tables, None, summary


def run_quantum(cfg):
    p = cfg.protocol
    a = cfg.analysis
    spec_n = qs.NucleusSpec(tuple(a.get("couplings", (1.0, 1.0))),
                            tuple(a.get("larmor", (p.delta1, p.delta2))), a.get("axis", "+x"))
    steps = int(a.get("steps", p.n_shots))
    cols, header, summary = [], [TIME_COL], {}
    for h in a.get("hamiltonians", list(qs.HAMILTONIANS)):
        res = qs.evolve_exact(qs.SpinEnsembleState.initial(spec_n), spec_n, h, p.g, p.tau, steps,
                              reset=a.get("reset", "expectation"), co_evolve=bool(a.get("co_evolve", False)),
                              seed=sub_seed(cfg.seed, "quantum"))
        if not cols:
            cols.append(res.times)
        cols += [res.prob_z, res.prob_x, res.sensor_purity, res.nuclear_purity, res.polarization.mean(axis=1)]
        header += [f"{h}_{n}" for n in ("P_z [probability]", "P_x [probability]", "sensor_purity [1]",
                                        "nuclear_purity [1]", "mean_polarization [1]")]
        summary[h] = {"final_sensor_purity": float(res.sensor_purity[-1]),
                      "min_sensor_purity": float(res.sensor_purity.min()),
                      "final_nuclear_purity": float(res.nuclear_purity[-1]),
                      "final_polarization": res.polarization[-1].tolist()}
    return {"quantum.csv": (header, cols)}, None, summary


PIPELINES = {
    "trace": run_trace,
    "amplification": run_amplification,
    "ou_decay": run_ou_decay,
    "xy_readout": run_xy_readout,
    "fisher": run_fisher,
    "quantum": run_quantum,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Run ``cfg``; when ``out_dir`` is given write the bundle there.

    Returns the summary dictionary. The summary embeds the full resolved
    config, so it is enough to re-run the experiment bit-identically.
    """
    tables, peaks, results = PIPELINES[cfg.kind](cfg)
    summary = {"config": cfg.to_dict(), "versions": versions(), "results": results,
               "files": sorted(list(tables) + (["peaks.json"] if peaks is not None else []) + ["summary.json"])}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for name, (header, columns) in tables.items():
            write_csv(os.path.join(out_dir, name), header, columns)
        if peaks is not None:
            write_json(os.path.join(out_dir, "peaks.json"), peaks)
        write_json(os.path.join(out_dir, "summary.json"), summary)
    return _clean(summary)

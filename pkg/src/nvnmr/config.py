"""Experiment configuration: JSON (de)serialisation, presets and validation."""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import noise as nz
from .signal import MicroNoise, ProtocolParams, regime_flags

log = logging.getLogger(__name__)

KINDS = ("trace", "amplification", "ou_decay", "xy_readout", "fisher", "quantum")
MODELS = ("closed_form", "weak", "ensemble", "hartmann_hahn")

_NOISE_TAGS = {
    "none": nz.NoNoise,
    "uniform_offset": nz.UniformOffset,
    "gaussian": nz.GaussianMacroscopic,
    "uniform": nz.UniformMacroscopic,
    "ou": nz.OrnsteinUhlenbeck,
}


class ConfigError(ValueError):
    pass


def noise_to_dict(noise) -> dict:
    tag = {v: k for k, v in _NOISE_TAGS.items()}[type(noise)]
    return {"kind": tag, **dataclasses.asdict(noise)}


def noise_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", "none")
    if kind not in _NOISE_TAGS:
        raise ConfigError(f"unknown noise kind {kind!r}; expected one of {sorted(_NOISE_TAGS)}")
    try:
        noise = _NOISE_TAGS[kind](**d)
    except TypeError as exc:
        raise ConfigError(f"noise: {exc}") from None
    return noise


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``kind`` selects the pipeline, ``model`` the probability model of
    ``trace`` runs. ``analysis`` carries pipeline-specific options.
    """

    protocol: ProtocolParams
    micro: MicroNoise = MicroNoise()
    noise: object = nz.NoNoise()
    ensemble: nz.EnsembleSpec = nz.EnsembleSpec()
    kind: str = "trace"
    model: str = "closed_form"
    analysis: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0
    preset: str | None = None

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "kind": self.kind,
            "model": self.model,
            "seed": self.seed,
            "protocol": dataclasses.asdict(self.protocol),
            "micro": dataclasses.asdict(self.micro),
            "noise": noise_to_dict(self.noise),
            "ensemble": dataclasses.asdict(self.ensemble),
            "analysis": copy.deepcopy(self.analysis),
            "output": copy.deepcopy(self.output),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        unknown = set(d) - {"preset", "kind", "model", "seed", "protocol", "micro",
                            "noise", "ensemble", "analysis", "output"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            protocol = ProtocolParams(**d["protocol"])
            micro = MicroNoise(**d.get("micro", {}))
            ensemble = nz.EnsembleSpec(**d.get("ensemble", {}))
        except KeyError:
            raise ConfigError("config needs a 'protocol' section") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        noise = noise_from_dict(d.get("noise", {"kind": "none"}))
        try:
            nz.check_noise(noise)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        cfg = cls(protocol=protocol, micro=micro, noise=noise, ensemble=ensemble,
                  kind=d.get("kind", "trace"), model=d.get("model", "closed_form"),
                  analysis=d.get("analysis", {}), output=d.get("output", {}),
                  seed=int(d.get("seed", 0)), preset=d.get("preset"))
        if cfg.kind not in KINDS:
            raise ConfigError(f"unknown kind {cfg.kind!r}; expected one of {KINDS}")
        if cfg.kind == "trace" and cfg.model not in MODELS:
            raise ConfigError(f"unknown model {cfg.model!r}; expected one of {MODELS}")
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


# -- presets -------------------------------------------------------------------

def _fig3(g):
    return {
        "kind": "trace", "model": "closed_form",
        "protocol": {"g": g, "tau": 5e-3, "delta1": 100.0, "delta2": 100.01, "n_shots": 1_000_000},
        "micro": {"delta_width": 1e-6},
        "noise": {"kind": "gaussian", "sigma": 1.0},
        "ensemble": {"method": "monte_carlo", "n_samples": 10_000},
        "analysis": {"max_harmonic": 4, "spot_checks": 1000, "spot_check_min_sigma_t": 50.0},
    }


PRESETS = {
    "fig3_weak": _fig3(1.0),
    "fig3_strong": _fig3(1000.0),
    "fig4_amplification": {
        "kind": "amplification", "model": "ensemble",
        "protocol": {"g": 1.0, "tau": 5e-3, "delta1": 100.0, "delta2": 99.0, "n_shots": 10_000},
        "noise": {"kind": "gaussian", "sigma": 0.1},
        "ensemble": {"method": "monte_carlo", "n_samples": 2000},
        "analysis": {"alphas": [1.0, 2.0, 4.0, 8.0], "large_alpha": 1000.0},
    },
    "si_ou_decay": {
        "kind": "ou_decay",
        "protocol": {"g": 1e-2, "tau": 5e-3, "delta1": 100.0, "delta2": 99.0, "n_shots": 10_000},
        "noise": {"kind": "ou", "correlation_time": 5e-3, "diffusion": 1e5},
        "analysis": {"tau_t_ratios": [float(r) for r in np.logspace(-1, 2, 7)], "n_paths": 200},
    },
    "si_xy_readout": {
        "kind": "xy_readout",
        "protocol": {"g": float(2 * np.pi * 1e-3 * 10), "tau": 0.5,
                     "delta1": float(2 * np.pi * 0.71126), "delta2": float(2 * np.pi * 0.71),
                     "n_shots": 40_000},
    },
    "fisher_scaling": {
        "kind": "fisher",
        "protocol": {"g": 0.1, "tau": 0.01, "delta1": 1.0, "delta2": 0.5, "n_shots": 1000},
        "analysis": {"readout": "SensingX", "noisy_omega_s": True,
                     "n_values": [100, 300, 1000, 3000, 10000],
                     "tau_values": [0.003, 0.01, 0.03], "n_phases": 64,
                     "strong": {"g": 1000.0, "tau_values": [0.01, 0.0316, 0.1]}},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _overrides(base, over, prefix=""):
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            yield from _overrides(base[k], v, f"{prefix}{k}.")
        elif base.get(k, object()) != v:
            yield f"{prefix}{k}"


def resolve(raw: dict, preset: str | None = None, seed: int | None = None) -> dict:
    """Expand a preset (explicit fields override it, with a warning)."""
    raw = copy.deepcopy(raw or {})
    name = preset if preset is not None else raw.get("preset")
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
        physics = {k: v for k, v in raw.items() if k in ("protocol", "micro", "noise", "ensemble", "model", "kind")}
        for key in _overrides(PRESETS[name], physics):
            log.warning("explicit field %s overrides preset %s", key, name)
        raw = _merge(PRESETS[name], raw)
        raw["preset"] = name
    if seed is not None:
        raw["seed"] = int(seed)
    return raw


def validate_config(raw: dict) -> dict:
    """Report violated invariants (``errors``) and regime warnings.

    Never raises: every problem becomes an entry of the report.
    """
    errors, warnings_ = [], []
    try:
        resolved = resolve(raw)
    except ConfigError as exc:
        return {"errors": [str(exc)], "warnings": [], "ok": False}
    try:
        cfg = ExperimentConfig.from_dict(resolved)
    except ConfigError as exc:
        errors.append(str(exc))
        return {"errors": errors, "warnings": warnings_, "ok": False}
    p = cfg.protocol
    sigma = getattr(cfg.noise, "sigma", getattr(cfg.noise, "half_width", None))
    weak = cfg.kind == "trace" and cfg.model == "weak"
    warnings_ += regime_flags(p, cfg.micro, weak=weak, sigma=sigma,
                              t_min=p.tau if sigma is not None else None)
    if not weak and cfg.analysis.get("weak_analysis"):
        warnings_ += [f for f in regime_flags(p, cfg.micro, weak=True) if f.startswith("weak")]
    if cfg.kind == "ou_decay" and not isinstance(cfg.noise, nz.OrnsteinUhlenbeck):
        errors.append("ou_decay needs noise.kind = 'ou'")
    if cfg.kind == "trace" and cfg.model == "ensemble" and isinstance(cfg.noise, (nz.OrnsteinUhlenbeck, nz.UniformOffset)):
        errors.append("ensemble model averages static macroscopic offsets only")
    return {"errors": errors, "warnings": sorted(set(warnings_)), "ok": not errors}


def load_config(path: str | None, preset: str | None = None, seed: int | None = None) -> ExperimentConfig:
    raw = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
    if not raw and preset is None:
        raise ConfigError(f"need --config or --preset; available presets: {sorted(PRESETS)}")
    return ExperimentConfig.from_dict(resolve(raw, preset, seed))

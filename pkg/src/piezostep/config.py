"""Configuration defaults, YAML loading, and object builders.

The synthetic plant constants are documented defaults of the simulation and
are not claims about any particular hardware. A YAML file overrides any
subset of the defaults; section hashes drive the pipeline cache.
"""

from __future__ import annotations

import copy
import hashlib
import json

import yaml

from .controller import ELEMENTS, ControllerConfig, ConstantModel
from .plant import ElementTruth, PlantConfig
from .waveforms import WaveformSpec

# Clamp truths are strongly direction-dependent; the c1 split is chosen so
# the up/down displacement path integrals cancel over the anti-windup
# voltage span (190 V with the default bounds), keeping the clamp positions
# from wandering while the saturated law rides the bounds.
DEFAULTS = {
    "plant": {
        "sample_rate": 10000.0,
        "amplifier_range": [-100.0, 100.0],
        "elements": {
            "S1": {"c0": {"+": 12.0e-9, "-": 12.0e-9},
                   "c1": {"+": 4.0e-9, "-": 4.0e-9},
                   "c2": {"+": 3.0e-9, "-": 3.0e-9},
                   "lam": 40.0, "s": 25000.0},
            "S2": {"c0": {"+": 12.0e-9, "-": 12.0e-9},
                   "c1": {"+": 4.0e-9, "-": 4.0e-9},
                   "c2": {"+": 3.0e-9, "-": 3.0e-9},
                   "lam": 40.0, "s": 25000.0},
            "C1": {"c0": {"+": 10.5e-9, "-": 9.5e-9},
                   "c1": {"+": 3.0e-9, "-": 7.7915e-9},
                   "c2": {"+": 2.0e-9, "-": 2.0e-9},
                   "lam": 40.0, "s": 25000.0},
            "C2": {"c0": {"+": 10.5e-9, "-": 9.5e-9},
                   "c1": {"+": 3.0e-9, "-": 7.7915e-9},
                   "c2": {"+": 2.0e-9, "-": 2.0e-9},
                   "lam": 40.0, "s": 25000.0},
        },
        "clamp_thresholds": {"C1": -2.5e-7, "C2": -2.5e-7},
        "current_gains": {"S1": 1.0, "S2": 1.0, "C1": 1.0, "C2": 1.0},
        "disturbance": {
            "+": [[1, 2.2e-7, 0.3], [2, 9.0e-8, 1.7], [3, 4.0e-8, 2.9], [5, 1.5e-8, 4.4]],
            "-": [[1, 2.8e-7, 5.9], [2, 1.1e-7, 0.8], [4, 3.0e-8, 2.2]],
        },
        "sensor_cutoff_hz": 100.0,
        "sensor_delay": 1,
        "noise_std": 5.0e-10,
        "seed": 2024,
    },
    # Collection-time strokes are sized so the constant-model voltages ride
    # the anti-windup bounds: the identification data then covers the full
    # absement range the production law visits.
    "waveforms": {
        "stroke_min": {e: -1.0e-5 for e in ELEMENTS},
        "stroke_max": {e: 1.0e-5 for e in ELEMENTS},
    },
    "controller": {
        "bound_fraction": 0.05,          # anti-windup bounds this far inside the amplifier range
        "constant_gain": 1.5e-8,         # m/V, used during data collection
        "gain_floor_fraction": 1e-3,
    },
    "identification": {
        "f_min": 0.3,
        "f_max": 100.0,
        "count": 52,
        "steps_per_frequency": 3,
        "centers": [12, 12],
        "lut_nodes": [64, 64],
    },
    "strokes": {
        "safety": 1.0005,
        "warm_start": True,
    },
    "sensor_id": {
        "n_bins": 40,
        "f_lo": 1.0,
        "f_hi_fraction": 0.15,           # of Nyquist
        "amplitude": 0.15,               # V per excited line
        "realizations": 8,
        "periods": 4,
        "discard_periods": 1,
        "order": 3,
        "disengage_voltage": -30.0,
        "ramp_seconds": 0.2,
        "settle_seconds": 0.1,
    },
    "ilc": {
        "f_train": 2.0,
        "n_trials": 20,
        "n_gamma": 180,
        "beta": 0.2,
        "q_cutoff_hz": 500.0,
        "q_order": 2,
        "steps": 6,
        "exclude_steps": 1,
        "seed_policy": "fixed",
    },
    "sweep": {
        "f_lo": 0.4,
        "f_hi": 100.0,
        "points": 10,
        "steps": 3,
        "settle_steps": 1,
    },
    "certificates": {
        "horizon": 2000,
        "n_gamma": 90,
        "f_cycles": 2.0,                 # stepping cycles covered by the horizon
    },
    "seed": 2024,
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path=None, overrides=None):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        cfg = _merge(cfg, data)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def config_hash(obj):
    """Stable hash of any JSON-serializable configuration fragment."""
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def build_plant_config(cfg):
    p = cfg["plant"]
    elements = {}
    for e, t in p["elements"].items():
        elements[e] = ElementTruth(
            c0=dict(t["c0"]), c1=dict(t["c1"]), c2=dict(t["c2"]),
            lam=float(t["lam"]), s=float(t["s"]),
        )
    return PlantConfig(
        sample_rate=float(p["sample_rate"]),
        elements=elements,
        clamp_thresholds=dict(p["clamp_thresholds"]),
        current_gains=dict(p["current_gains"]),
        disturbance={d: [tuple(row) for row in rows] for d, rows in p["disturbance"].items()},
        sensor_cutoff_hz=float(p["sensor_cutoff_hz"]),
        sensor_delay=int(p["sensor_delay"]),
        noise_std=float(p["noise_std"]),
        seed=int(p["seed"]),
        amplifier_range=tuple(p["amplifier_range"]),
    )


def build_wave_spec(cfg):
    w = cfg["waveforms"]
    return WaveformSpec(dict(w["stroke_min"]), dict(w["stroke_max"]))


def anti_windup_bounds(cfg):
    lo, hi = cfg["plant"]["amplifier_range"]
    margin = cfg["controller"]["bound_fraction"] * (hi - lo) / 2.0
    u_min = {e: lo + margin for e in ELEMENTS}
    u_max = {e: hi - margin for e in ELEMENTS}
    return u_min, u_max


def build_controller_config(cfg, models=None):
    """Controller configuration; constant collection models unless given."""
    u_min, u_max = anti_windup_bounds(cfg)
    if models is None:
        c = cfg["controller"]["constant_gain"]
        models = {e: ConstantModel(c) for e in ELEMENTS}
    return ControllerConfig(
        sample_rate=float(cfg["plant"]["sample_rate"]),
        models=models,
        u_min=u_min,
        u_max=u_max,
        amplifier_range=tuple(cfg["plant"]["amplifier_range"]),
        gain_floor_fraction=float(cfg["controller"]["gain_floor_fraction"]),
    )

"""Artifact persistence: CSV for array-like data, JSON for metadata.

All writers format floats with 17 significant digits (exact float64
round-trip) and fixed key ordering, so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .controller import ELEMENTS
from .identify import HysteresisDataset, KernelModel, LookupTable2D
from .ilc import CompensationProfile
from .sensorid import FrequencyResponse, SensorModel
from .strokes import StrokeLUT


def _fmt(x):
    return f"{float(x):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    return header, rows


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# -- hysteresis datasets ----------------------------------------------------

def save_datasets(path, datasets, sample_rate):
    rows = []
    ts = 1.0 / sample_rate
    for e in ELEMENTS:
        d = datasets[e]
        for k in range(len(d)):
            rows.append((e, _fmt(k * ts), _fmt(d.udot[k]), _fmt(d.absement[k]),
                         _fmt(d.current[k]), "+" if d.direction[k] >= 0 else "-",
                         "1" if d.included[k] else "0"))
    _write_csv(path, ["element", "t (s)", "udot (V/s)", "ua (V)", "i (A)",
                      "direction", "included"], rows)


def load_datasets(path):
    _, rows = _read_csv(path)
    cols = {e: {"udot": [], "ua": [], "i": [], "dir": []} for e in ELEMENTS}
    for row in rows:
        e = row[0]
        cols[e]["udot"].append(float(row[2]))
        cols[e]["ua"].append(float(row[3]))
        cols[e]["i"].append(float(row[4]))
        cols[e]["dir"].append(1 if row[5] == "+" else -1)
    return {
        e: HysteresisDataset(e, np.array(c["udot"]), np.array(c["ua"]),
                             np.array(c["i"]), direction=np.array(c["dir"]))
        for e, c in cols.items()
    }


# -- kernel models and lookup tables ---------------------------------------

def save_kernel_models(path, models, provenance=None):
    payload = {"provenance": provenance or {}, "elements": {}}
    for e, m in models.items():
        payload["elements"][e] = {
            "centers": m.centers.tolist(),
            "sf2": m.sf2,
            "l1": m.l1,
            "l2": m.l2,
            "ridge": m.ridge,
            "theta": {d: m.theta[d].tolist() for d in ("+", "-")},
        }
    write_json(path, payload)


def load_kernel_models(path):
    payload = read_json(path)
    models = {}
    for e, m in payload["elements"].items():
        models[e] = KernelModel(
            centers=np.array(m["centers"]),
            sf2=m["sf2"], l1=m["l1"], l2=m["l2"],
            theta={d: np.array(v) for d, v in m["theta"].items()},
            ridge=m["ridge"],
        )
    return models


def save_luts(path, luts, provenance=None):
    """``luts``: element -> direction -> LookupTable2D, one long-format CSV."""
    rows = []
    for e in ELEMENTS:
        for d in ("+", "-"):
            t = luts[e][d]
            for i, r in enumerate(t.rate_axis):
                for j, a in enumerate(t.absement_axis):
                    rows.append((e, d, _fmt(r), _fmt(a), _fmt(t.values[i, j])))
    _write_csv(path, ["element", "direction", "udot (V/s)", "ua (V)", "gain (m/V)"], rows)
    if provenance is not None:
        write_json(os.path.splitext(path)[0] + ".meta.json", provenance)


def load_luts(path):
    _, rows = _read_csv(path)
    acc = {}
    for e, d, r, a, v in rows:
        acc.setdefault((e, d), []).append((float(r), float(a), float(v)))
    luts = {e: {} for e in ELEMENTS}
    for (e, d), triples in acc.items():
        rates = np.array(sorted({t[0] for t in triples}))
        uas = np.array(sorted({t[1] for t in triples}))
        vals = np.empty((len(rates), len(uas)))
        ri = {r: i for i, r in enumerate(rates)}
        ai = {a: j for j, a in enumerate(uas)}
        for r, a, v in triples:
            vals[ri[r], ai[a]] = v
        luts[e][d] = LookupTable2D(rates, uas, vals)
    return luts


# -- stroke lookup tables ---------------------------------------------------

def save_stroke_lut(path, lut):
    rows = []
    for i, f in enumerate(lut.frequencies):
        for e in ELEMENTS:
            rows.append((_fmt(f), e, _fmt(lut.stroke_min[e][i]), _fmt(lut.stroke_max[e][i])))
    _write_csv(path, ["f_alpha (Hz)", "element", "r_min (m)", "r_max (m)"], rows)


def load_stroke_lut(path):
    _, rows = _read_csv(path)
    freqs = sorted({float(r[0]) for r in rows})
    fi = {f: i for i, f in enumerate(freqs)}
    mins = {e: np.empty(len(freqs)) for e in ELEMENTS}
    maxs = {e: np.empty(len(freqs)) for e in ELEMENTS}
    for f, e, lo, hi in rows:
        mins[e][fi[float(f)]] = float(lo)
        maxs[e][fi[float(f)]] = float(hi)
    return StrokeLUT(np.array(freqs), mins, maxs)


# -- frequency responses and sensor models ----------------------------------

def save_frf(path, frf):
    rows = [(_fmt(w), _fmt(v.real), _fmt(v.imag), _fmt(s))
            for w, v, s in zip(frf.omega, frf.values, frf.variance)]
    _write_csv(path, ["omega (rad/sample)", "re", "im", "variance"], rows)


def load_frf(path, n_realizations=1):
    _, rows = _read_csv(path)
    w = np.array([float(r[0]) for r in rows])
    v = np.array([float(r[1]) + 1j * float(r[2]) for r in rows])
    s = np.array([float(r[3]) for r in rows])
    return FrequencyResponse(w, v, n_realizations, s)


def save_sensor_model(path, model, provenance=None):
    write_json(path, {
        "b": model.b.tolist(),
        "a": model.a.tolist(),
        "relative_degree": model.relative_degree,
        "sample_rate": model.sample_rate,
        "fit_error": None if model.fit_error is None else model.fit_error.tolist(),
        "provenance": provenance or {},
    })


def load_sensor_model(path):
    p = read_json(path)
    return SensorModel(np.array(p["b"]), np.array(p["a"]), p["relative_degree"],
                       p["sample_rate"],
                       None if p["fit_error"] is None else np.array(p["fit_error"]))


# -- compensation profiles ---------------------------------------------------

def save_profiles(path, profiles):
    rows = []
    for d in ("+", "-"):
        p = profiles.get(d)
        if p is None:
            continue
        for c, g in enumerate(p.gamma):
            rows.append((d, str(c), _fmt(c * p.spacing), _fmt(g), _fmt(p.f_train)))
    _write_csv(path, ["direction", "node", "alpha (rad)", "gamma (m/s)", "f_train (Hz)"], rows)


def load_profiles(path):
    _, rows = _read_csv(path)
    acc = {}
    for d, node, _alpha, g, ftr in rows:
        acc.setdefault(d, {"g": {}, "f": float(ftr)})["g"][int(node)] = float(g)
    out = {}
    for d, data in acc.items():
        gamma = np.array([data["g"][i] for i in range(len(data["g"]))])
        out[d] = CompensationProfile(gamma, d, data["f"])
    return out


def save_rmsd_history(path, histories):
    """``histories``: direction -> array of per-trial RMSD values."""
    rows = []
    for d in ("+", "-"):
        if d not in histories:
            continue
        for j, v in enumerate(histories[d]):
            rows.append((d, str(j), _fmt(v)))
    _write_csv(path, ["direction", "trial", "rmsd (m)"], rows)

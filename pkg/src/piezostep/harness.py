"""Strategy comparison, the end-to-end artifact pipeline, and caching.

Three feedforward strategies are compared: constant-gain inversion (S1),
rate-dependent hysteresis inversion from the fitted lookup tables (S2), and
S2 plus the learned angle-domain compensation (S3). The pipeline runs
collect -> fit -> strokes -> sensor -> ilc -> certify -> sweep, persists
every intermediate, and reuses cached stages whose configuration hash is
unchanged.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import storage
from .config import (
    anti_windup_bounds,
    build_controller_config,
    build_plant_config,
    build_wave_spec,
    config_hash,
)
from .controller import ELEMENTS, ConstantModel, ControllerState, control_step
from .identify import (
    LutHandle,
    build_direction_luts,
    collect_dataset,
    default_centers,
    default_hyperparams,
    fit_model,
    frequency_grid,
)
from .ilc import (
    basis_matrix,
    check_convergence_freq,
    lift,
    make_filters,
    projection_certificates,
    run_ilc,
)
from .metrics import rmsd
from .plant import Plant, Sensor
from .sensorid import average_sensor_frf, bla, fit_parametric, multisine
from .strokes import build_stroke_lut
from .waveforms import (
    TWO_PI,
    integrate_reference,
    modified_shear_reference,
    nominal_waveform,
    wrap_angle,
)

STRATEGIES = ("S1", "S2", "S3")


class MissingArtifactError(RuntimeError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


def derive_seed(master, *key):
    """Stable uint32 seed for a named cell of the experiment plan."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1)[0])


def lut_models(luts):
    return {e: {d: LutHandle(luts[e][d]) for d in ("+", "-")} for e in ELEMENTS}


def s1_constants(luts):
    """Constant models at the midrange of each element's fitted surfaces."""
    out = {}
    for e in ELEMENTS:
        vals = np.concatenate([luts[e]["+"].values.ravel(), luts[e]["-"].values.ravel()])
        out[e] = ConstantModel(0.5 * (vals.min() + vals.max()))
    return out


# ---------------------------------------------------------------------------
# sensor identification experiment
# ---------------------------------------------------------------------------

def measure_shear_frf(plant_config, shear, idcfg, master_seed):
    """BLA of one shear's voltage-to-measured-position response.

    The shear's own clamp stays at its rest (engaged) voltage while the
    opposite clamp is ramped away from the mover and held; the shear is
    excited with periodic random-phase multisines, one fresh plant per
    realization.
    """
    fs = plant_config.sample_rate
    period = int(round(fs / idcfg["f_lo"]))
    f_hi = idcfg["f_hi_fraction"] * fs / 2.0
    bins = np.unique(np.round(np.geomspace(1.0, f_hi / idcfg["f_lo"], idcfg["n_bins"]))).astype(int)
    ramp_n = int(round(idcfg["ramp_seconds"] * fs))
    settle_n = int(round(idcfg["settle_seconds"] * fs))
    other_clamp = "C2" if shear == "S1" else "C1"
    hold = idcfg["disengage_voltage"]
    n_per = idcfg["periods"]
    u_records, y_records = [], []
    shear_idx = 0 if shear == "S1" else 1
    for r in range(idcfg["realizations"]):
        plant = Plant(plant_config, seed=derive_seed(master_seed, 40, shear_idx, r))
        rng = np.random.default_rng(derive_seed(master_seed, 41, shear_idx, r))
        x = multisine(period, bins, idcfg["amplitude"], rng)
        cmd = {e: 0.0 for e in ELEMENTS}
        for k in range(ramp_n):
            cmd[other_clamp] = hold * (k + 1) / ramp_n
            plant.step(cmd)
        for _ in range(settle_n):
            plant.step(cmd)
        u_rec = np.empty(n_per * period)
        y_rec = np.empty(n_per * period)
        for k in range(n_per * period):
            cmd[shear] = x[k % period]
            y, _ = plant.step(cmd)
            u_rec[k] = x[k % period]
            y_rec[k] = y
        u_records.append(u_rec)
        y_records.append(y_rec)
    return bla(u_records, y_records, period, bins,
               discard_periods=idcfg["discard_periods"])


def identify_sensor(plant_config, idcfg, master_seed):
    frf_s1 = measure_shear_frf(plant_config, "S1", idcfg, master_seed)
    frf_s2 = measure_shear_frf(plant_config, "S2", idcfg, master_seed)
    ghat_frf = average_sensor_frf(frf_s1, frf_s2, 1.0 / plant_config.sample_rate)
    model = fit_parametric(ghat_frf, idcfg["order"], plant_config.sample_rate)
    return frf_s1, frf_s2, ghat_frf, model


def predicted_reference(f_alpha, n_samples, ts, spec, thresholds, controller_config,
                        ghat, alpha0=0.0):
    """Mover reference predicted by the control law and its own gain models.

    Runs the law plant-free over the nominal waveforms and accumulates the
    model-implied element displacements (the plant recursion with the fitted
    gain in place of the truth), then applies the kinematics and the sensor
    model. Saturation stalls and the realized engagement timing are thereby
    part of the reference, so the tracking error contains only disturbance
    and model mismatch; with saturation inactive and matched engagement it
    reduces to the sensor-filtered nominal rate.
    """
    from .controller import AbsementTracker, select_direction_model
    from .plant import kappa

    state = ControllerState()
    positions = {e: 0.0 for e in ELEMENTS}
    trackers = {e: AbsementTracker() for e in ELEMENTS}
    alphas = np.empty(n_samples)
    rate = np.empty(n_samples)
    a = alpha0
    for k in range(n_samples):
        alphas[k] = a
        rates = nominal_waveform(a, f_alpha, spec)
        u_before = dict(state.u_prev)
        u_cmd = control_step(state, controller_config, rates)
        el_rate = {}
        for e in ELEMENTS:
            du = u_cmd[e] - u_before[e]
            tracker = trackers[e]
            ua = tracker.update(u_cmd[e])
            handle = select_direction_model(controller_config.models[e],
                                            1.0 if tracker.sign >= 0 else -1.0)
            dy = handle.gain(abs(du) / ts, ua) * du
            positions[e] += dy
            el_rate[e] = dy / ts
        rate[k] = kappa((el_rate["S1"], el_rate["S2"]),
                        (positions["C1"], positions["C2"]),
                        (thresholds["C1"], thresholds["C2"]))
        a = wrap_angle(a + TWO_PI * f_alpha * ts)
    filt = ghat.as_filter() if hasattr(ghat, "as_filter") else ghat
    return filt.apply(rate), alphas, rate


# ---------------------------------------------------------------------------
# strategy sweep
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    strategy: str
    direction: str
    frequencies: np.ndarray
    rmsd_mean: np.ndarray
    rmsd_2std: np.ndarray
    per_step: dict = field(default_factory=dict)     # f -> list of per-step RMSD
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.rmsd_mean < 0):
            raise ValueError("RMSD must be nonnegative")


def _run_cell(plant_cfg, controller_cfg, spec, profiles, ghat, f_signed,
              steps, settle_steps, seed):
    fs = plant_cfg.sample_rate
    n_step = int(round(fs / abs(f_signed)))
    n = (settle_steps + steps) * n_step
    r, alphas, _ = predicted_reference(f_signed, n, 1.0 / fs, spec,
                                       plant_cfg.clamp_thresholds, controller_cfg, ghat)
    plant = Plant(plant_cfg, seed=seed)
    state = ControllerState()
    y = np.empty(n)
    for k in range(n):
        a = alphas[k]
        if profiles is None:
            rates = nominal_waveform(a, f_signed, spec)
        else:
            rates = modified_shear_reference(a, f_signed, spec, profiles)
        u = control_step(state, controller_cfg, rates)
        y[k], _ = plant.step(u, a, f_signed)
    eps = r - y
    out = []
    for s in range(settle_steps, settle_steps + steps):
        out.append(rmsd(eps[s * n_step:(s + 1) * n_step]))
    return out, eps


def strategy_sweep(cfg, luts, stroke_lut, profiles, ghat, frequencies=None,
                   directions=("+", "-"), strategies=STRATEGIES):
    """Per-step RMSD of the requested strategies over the frequency grid."""
    plant_cfg = build_plant_config(cfg)
    spec_default = build_wave_spec(cfg)
    sweep = cfg["sweep"]
    if frequencies is None:
        frequencies = np.geomspace(sweep["f_lo"], sweep["f_hi"], sweep["points"])
    frequencies = np.asarray(frequencies, dtype=float)
    steps = sweep["steps"]
    settle = sweep["settle_steps"]
    master = cfg["seed"]

    need = {"S1": (luts,), "S2": (luts, stroke_lut), "S3": (luts, stroke_lut, profiles)}
    reports = []
    for strategy in strategies:
        for artifact, name in zip(need[strategy], ("hysteresis fit", "stroke table", "profiles")):
            if artifact is None:
                raise MissingArtifactError(f"{strategy} requires the '{name}' stage")
        if strategy == "S1":
            models = s1_constants(luts)
        else:
            models = lut_models(luts)
        for direction in directions:
            sgn = 1.0 if direction == "+" else -1.0
            means = np.empty(len(frequencies))
            bands = np.empty(len(frequencies))
            per_step = {}
            for i, f in enumerate(frequencies):
                spec_run = spec_default if strategy == "S1" else stroke_lut.spec_at(f)
                prof = profiles if strategy == "S3" else None
                controller_cfg = build_controller_config(cfg, models=models)
                seed = derive_seed(master, 60, STRATEGIES.index(strategy),
                                   0 if direction == "+" else 1, i)
                vals, _ = _run_cell(plant_cfg, controller_cfg, spec_run, prof, ghat,
                                    sgn * f, steps, settle, seed)
                per_step[float(f)] = vals
                means[i] = float(np.mean(vals))
                bands[i] = 2.0 * float(np.std(vals))
            reports.append(ExperimentReport(
                strategy=strategy, direction=direction, frequencies=frequencies.copy(),
                rmsd_mean=means, rmsd_2std=bands, per_step=per_step,
                provenance={"seed": master},
            ))
    return reports


def save_reports(path, reports):
    rows = []
    for rep in reports:
        for f in rep.frequencies:
            for s, v in enumerate(rep.per_step[float(f)]):
                rows.append((rep.strategy, rep.direction, f"{f:.17g}", str(s), f"{v:.17g}"))
    storage._write_csv(path, ["strategy", "direction", "f_alpha (Hz)", "step", "rmsd (m)"], rows)


def save_report_summary(path, reports):
    rows = []
    for rep in reports:
        for i, f in enumerate(rep.frequencies):
            rows.append((rep.strategy, rep.direction, f"{f:.17g}",
                         f"{rep.rmsd_mean[i]:.17g}", f"{rep.rmsd_2std[i]:.17g}"))
    storage._write_csv(path, ["strategy", "direction", "f_alpha (Hz)",
                              "rmsd_mean (m)", "rmsd_2std (m)"], rows)


# ---------------------------------------------------------------------------
# pipeline with stage caching
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    datasets: dict = None
    models: dict = None
    luts: dict = None
    stroke_lut: object = None
    frfs: tuple = None
    sensor_model: object = None
    profiles: dict = None
    rmsd_histories: dict = None
    certificates: dict = None
    reports: list = None
    stages_run: list = field(default_factory=list)
    stages_cached: list = field(default_factory=list)


class Pipeline:
    """Executes the artifact stages in order with hash-keyed caching."""

    def __init__(self, cfg, out_dir, quiet=False):
        self.cfg = cfg
        self.out = out_dir
        self.quiet = quiet
        os.makedirs(out_dir, exist_ok=True)
        self.manifest_path = os.path.join(out_dir, "manifest.json")
        self.manifest = (storage.read_json(self.manifest_path)
                         if os.path.exists(self.manifest_path) else {"stages": {}})

    def _log(self, msg):
        if not self.quiet:
            print(msg, flush=True)

    def _stage_dir(self, name):
        d = os.path.join(self.out, name)
        os.makedirs(d, exist_ok=True)
        return d

    def _fresh(self, name, key, outputs):
        entry = self.manifest["stages"].get(name)
        if entry is None or entry["key"] != key:
            return False
        return all(os.path.exists(os.path.join(self.out, p)) for p in entry["outputs"]) \
            and entry["outputs"] == outputs

    def _record(self, name, key, outputs):
        self.manifest["stages"][name] = {"key": key, "outputs": outputs}
        storage.write_json(self.manifest_path, self.manifest)

    def stage_keys(self):
        """Configuration hash per stage, chained through the dependencies."""
        cfg = self.cfg
        keys = {}
        keys["collect"] = config_hash({
            "plant": cfg["plant"], "waveforms": cfg["waveforms"],
            "controller": cfg["controller"],
            "grid": {k: cfg["identification"][k] for k in ("f_min", "f_max", "count",
                                                           "steps_per_frequency")},
            "seed": cfg["seed"],
        })
        keys["fit"] = config_hash({
            "upstream": keys["collect"],
            "fit": {k: cfg["identification"][k] for k in ("centers", "lut_nodes")},
        })
        keys["strokes"] = config_hash({
            "upstream": keys["fit"],
            "strokes": cfg["strokes"],
            "grid": {k: cfg["identification"][k] for k in ("f_min", "f_max", "count")},
            "bounds": cfg["controller"]["bound_fraction"],
        })
        keys["sensor"] = config_hash({
            "plant": cfg["plant"], "sensor_id": cfg["sensor_id"], "seed": cfg["seed"],
        })
        keys["ilc"] = config_hash({
            "upstream": [keys["fit"], keys["strokes"], keys["sensor"]],
            "ilc": cfg["ilc"],
        })
        keys["certify"] = config_hash({
            "upstream": keys["sensor"],
            "certificates": cfg["certificates"],
            "ilc": {k: cfg["ilc"][k] for k in ("beta", "q_cutoff_hz", "q_order", "f_train")},
        })
        keys["sweep"] = config_hash({
            "upstream": [keys["fit"], keys["strokes"], keys["ilc"]],
            "sweep": cfg["sweep"],
        })
        return keys

    # -- stages -------------------------------------------------------------

    def run(self, through="sweep"):
        order = ["collect", "fit", "strokes", "sensor", "ilc", "certify", "sweep"]
        if through not in order:
            raise ValueError(f"unknown stage '{through}'")
        result = PipelineResult()
        keys = self.stage_keys()
        storage.write_json(os.path.join(self.out, "config.resolved.json"), self.cfg)
        for name in order[: order.index(through) + 1]:
            fn = getattr(self, f"_stage_{name}")
            try:
                fn(result, keys[name])
            except Exception as exc:
                if isinstance(exc, StageError):
                    raise
                raise StageError(name, exc) from exc
        return result

    def _stage_collect(self, result, key):
        out = self._stage_dir("collect")
        rel = ["collect/datasets.csv"]
        if self._fresh("collect", key, rel):
            result.datasets = storage.load_datasets(os.path.join(out, "datasets.csv"))
            result.stages_cached.append("collect")
            return
        self._log("collect: running constant-model stepping experiment")
        cfg = self.cfg
        plant_cfg = build_plant_config(cfg)
        plant = Plant(plant_cfg, seed=derive_seed(cfg["seed"], 10))
        controller_cfg = build_controller_config(cfg)
        spec = build_wave_spec(cfg)
        ident = cfg["identification"]
        grid = frequency_grid(ident["f_min"], ident["f_max"], ident["count"])
        datasets = collect_dataset(plant, controller_cfg, spec, grid,
                                   ident["steps_per_frequency"])
        storage.save_datasets(os.path.join(out, "datasets.csv"), datasets,
                              plant_cfg.sample_rate)
        self._record("collect", key, rel)
        result.datasets = datasets
        result.stages_run.append("collect")

    def _stage_fit(self, result, key):
        out = self._stage_dir("fit")
        rel = ["fit/kernel_models.json", "fit/luts.csv"]
        if self._fresh("fit", key, rel):
            result.models = storage.load_kernel_models(os.path.join(out, "kernel_models.json"))
            result.luts = storage.load_luts(os.path.join(out, "luts.csv"))
            result.stages_cached.append("fit")
            return
        self._log("fit: kernel least squares per element and direction")
        ident = self.cfg["identification"]
        models, luts = {}, {}
        for e in ELEMENTS:
            ds = result.datasets[e]
            centers = default_centers(ds, tuple(ident["centers"]))
            hyper = default_hyperparams(ds, centers)
            models[e] = fit_model(ds, centers, hyper)
            luts[e] = build_direction_luts(models[e], ds, tuple(ident["lut_nodes"]))
        storage.save_kernel_models(os.path.join(out, "kernel_models.json"), models,
                                   provenance={"key": key})
        storage.save_luts(os.path.join(out, "luts.csv"), luts, provenance={"key": key})
        self._record("fit", key, rel)
        result.models, result.luts = models, luts
        result.stages_run.append("fit")

    def _stage_strokes(self, result, key):
        out = self._stage_dir("strokes")
        rel = ["strokes/stroke_lut.csv"]
        if self._fresh("strokes", key, rel):
            result.stroke_lut = storage.load_stroke_lut(os.path.join(out, "stroke_lut.csv"))
            result.stages_cached.append("strokes")
            return
        self._log("strokes: sizing spans against the anti-windup bounds")
        cfg = self.cfg
        ident = cfg["identification"]
        grid = frequency_grid(ident["f_min"], ident["f_max"], ident["count"])
        u_min, u_max = anti_windup_bounds(cfg)
        models = lut_models(result.luts)
        lut = build_stroke_lut(grid.positive, models, (u_min, u_max),
                               build_wave_spec(cfg), cfg["plant"]["sample_rate"],
                               warm_start=cfg["strokes"]["warm_start"],
                               safety=cfg["strokes"]["safety"])
        storage.save_stroke_lut(os.path.join(out, "stroke_lut.csv"), lut)
        self._record("strokes", key, rel)
        result.stroke_lut = lut
        result.stages_run.append("strokes")

    def _stage_sensor(self, result, key):
        out = self._stage_dir("sensor")
        rel = ["sensor/frf_s1.csv", "sensor/frf_s2.csv", "sensor/ghat_frf.csv",
               "sensor/sensor_model.json"]
        if self._fresh("sensor", key, rel):
            result.sensor_model = storage.load_sensor_model(
                os.path.join(out, "sensor_model.json"))
            result.frfs = tuple(
                storage.load_frf(os.path.join(out, p)) for p in
                ("frf_s1.csv", "frf_s2.csv", "ghat_frf.csv"))
            result.stages_cached.append("sensor")
            return
        self._log("sensor: multisine identification of the position chain")
        cfg = self.cfg
        plant_cfg = build_plant_config(cfg)
        frf_s1, frf_s2, ghat_frf, model = identify_sensor(plant_cfg, cfg["sensor_id"],
                                                          cfg["seed"])
        storage.save_frf(os.path.join(out, "frf_s1.csv"), frf_s1)
        storage.save_frf(os.path.join(out, "frf_s2.csv"), frf_s2)
        storage.save_frf(os.path.join(out, "ghat_frf.csv"), ghat_frf)
        storage.save_sensor_model(os.path.join(out, "sensor_model.json"), model,
                                  provenance={"key": key})
        self._record("sensor", key, rel)
        result.frfs = (frf_s1, frf_s2, ghat_frf)
        result.sensor_model = model
        result.stages_run.append("sensor")

    def _stage_ilc(self, result, key):
        out = self._stage_dir("ilc")
        rel = ["ilc/profiles.csv", "ilc/rmsd_history.csv"]
        if self._fresh("ilc", key, rel):
            result.profiles = storage.load_profiles(os.path.join(out, "profiles.csv"))
            result.stages_cached.append("ilc")
            return
        self._log("ilc: learning angle-domain compensation in both directions")
        cfg = self.cfg
        plant_cfg = build_plant_config(cfg)
        icfg = cfg["ilc"]
        filters = make_filters(result.sensor_model, icfg["beta"],
                               icfg["q_cutoff_hz"], icfg["q_order"])
        models = lut_models(result.luts)
        profiles, histories = {}, {}
        for direction, sgn in (("+", 1.0), ("-", -1.0)):
            f_run = sgn * icfg["f_train"]
            spec_run = result.stroke_lut.spec_at(f_run)
            controller_cfg = build_controller_config(cfg, models=models)
            base = derive_seed(cfg["seed"], 50, 0 if direction == "+" else 1)
            n_total = icfg["steps"] * int(round(plant_cfg.sample_rate / abs(f_run)))
            r, alphas, _ = predicted_reference(
                f_run, n_total, 1.0 / plant_cfg.sample_rate, spec_run,
                plant_cfg.clamp_thresholds, controller_cfg, result.sensor_model)
            res = run_ilc(
                lambda seed: Plant(plant_cfg, seed=seed),
                controller_cfg, spec_run, plant_cfg.clamp_thresholds,
                result.sensor_model, filters, f_run,
                icfg["n_trials"], icfg["n_gamma"], steps=icfg["steps"],
                exclude_steps=icfg["exclude_steps"], seed_policy=icfg["seed_policy"],
                base_seed=base, reference=(r, alphas),
            )
            profiles[direction] = res.profile
            histories[direction] = res.rmsd_history
        storage.save_profiles(os.path.join(out, "profiles.csv"), profiles)
        storage.save_rmsd_history(os.path.join(out, "rmsd_history.csv"), histories)
        self._record("ilc", key, rel)
        result.profiles = profiles
        result.rmsd_histories = histories
        result.stages_run.append("ilc")

    def _stage_certify(self, result, key):
        out = self._stage_dir("certify")
        rel = ["certify/certificates.json"]
        if self._fresh("certify", key, rel):
            result.certificates = storage.read_json(os.path.join(out, "certificates.json"))
            result.stages_cached.append("certify")
            return
        self._log("certify: convergence certificates")
        cfg = self.cfg
        plant_cfg = build_plant_config(cfg)
        icfg = cfg["ilc"]
        ccfg = cfg["certificates"]
        filters = make_filters(result.sensor_model, icfg["beta"],
                               icfg["q_cutoff_hz"], icfg["q_order"])
        g_true = Sensor(plant_cfg.sensor_cutoff_hz, plant_cfg.sample_rate,
                        delay=plant_cfg.sensor_delay, noise_std=0.0).transfer_filter()
        n = ccfg["horizon"]
        ts = 1.0 / plant_cfg.sample_rate
        f_cert = ccfg["f_cycles"] * plant_cfg.sample_rate / n
        alphas = np.mod(TWO_PI * f_cert * ts * np.arange(n), TWO_PI)
        psi = basis_matrix(alphas, ccfg["n_gamma"])
        report = projection_certificates(
            psi,
            lift(result.sensor_model.as_filter(), n),
            lift(g_true, n),
            lift(filters.robustness, n),
            lift(filters.learning, n),
        )
        sup = check_convergence_freq(filters.robustness, filters.learning, g_true)
        cert = {
            "horizon": report.horizon,
            "n_gamma": report.n_gamma,
            "idempotency_defect": report.idempotency_defect,
            "spectral_radius_projector": report.spectral_radius_projector,
            "sigma_max_projector": report.sigma_max_projector,
            "sigma_max_iteration": report.sigma_max_iteration,
            "sigma_max_iteration_restricted": report.sigma_max_iteration_restricted,
            "freq_condition_sup": sup,
            "freq_condition_met": sup < 1.0,
            "lemma_condition_met": report.sigma_max_iteration_restricted < 1.0,
        }
        storage.write_json(os.path.join(out, "certificates.json"), cert)
        self._record("certify", key, rel)
        result.certificates = cert
        result.stages_run.append("certify")

    def _stage_sweep(self, result, key):
        out = self._stage_dir("sweep")
        rel = ["sweep/report.csv", "sweep/summary.csv"]
        if self._fresh("sweep", key, rel):
            result.stages_cached.append("sweep")
            return
        self._log("sweep: comparing strategies over the frequency grid")
        reports = strategy_sweep(self.cfg, result.luts, result.stroke_lut,
                                 result.profiles, result.sensor_model)
        save_reports(os.path.join(out, "report.csv"), reports)
        save_report_summary(os.path.join(out, "summary.csv"), reports)
        self._record("sweep", key, rel)
        result.reports = reports
        result.stages_run.append("sweep")


def unified_pipeline(cfg, out_dir, through="sweep", quiet=False):
    """Run all stages in order; cached stages are reused byte-identically."""
    return Pipeline(cfg, out_dir, quiet=quiet).run(through=through)

"""Current-based hysteresis identification.

Sweeps the drive frequency over a signed logarithmic grid while the
constant-gain control law runs, records per-element (voltage rate,
absement, current) triples, fits direction-split kernel least-squares gain
surfaces, and compiles them to bilinear lookup tables for real-time use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .controller import ELEMENTS, ControllerState, control_step
from .waveforms import CommutationState, advance_alpha, nominal_waveform


class FittingError(RuntimeError):
    pass


class LutBuildError(RuntimeError):
    pass


@dataclass(frozen=True)
class FrequencyGrid:
    """Signed logarithmic drive-frequency grid."""

    f_min: float
    f_max: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("need at least two grid frequencies")
        if not 0.0 < self.f_min < self.f_max:
            raise ValueError("require 0 < f_min < f_max")

    @property
    def positive(self):
        i = np.arange(self.count)
        return self.f_min * (self.f_max / self.f_min) ** (i / (self.count - 1))

    @property
    def signed(self):
        """Collection order: each magnitude forward then backward."""
        out = []
        for f in self.positive:
            out.extend((f, -f))
        return np.array(out)

    def __len__(self):
        return 2 * self.count


def frequency_grid(f_min, f_max, count):
    return FrequencyGrid(f_min, f_max, count)


def observed_gain(current, udot, threshold):
    """|i/udot| when the rate magnitude clears the threshold, else None."""
    if abs(udot) < threshold:
        return None
    return abs(current / udot)


@dataclass
class HysteresisDataset:
    """Per-element identification samples with rate-exclusion bookkeeping."""

    element: str
    udot: np.ndarray
    absement: np.ndarray
    current: np.ndarray
    direction: np.ndarray = None          # +1 / -1 per sample
    threshold: float = None
    exclusion_fraction: float = 0.01

    def __post_init__(self):
        self.udot = np.asarray(self.udot, dtype=float)
        self.absement = np.asarray(self.absement, dtype=float)
        self.current = np.asarray(self.current, dtype=float)
        if self.direction is None:
            self.direction = np.where(self.udot >= 0.0, 1, -1)
        self.direction = np.asarray(self.direction)
        if self.threshold is None:
            nz = np.abs(self.udot[self.udot != 0.0])
            self.threshold = self.exclusion_fraction * (np.median(nz) if nz.size else 0.0)
        self.included = np.abs(self.udot) >= self.threshold
        self.observed = np.full(self.udot.shape, np.nan)
        m = self.included
        self.observed[m] = np.abs(self.current[m] / self.udot[m])

    def samples(self, direction=None):
        """(inputs, observations) of included samples, optionally one direction."""
        mask = self.included.copy()
        if direction == "+":
            mask &= self.direction >= 0
        elif direction == "-":
            mask &= self.direction < 0
        x = np.column_stack([np.abs(self.udot[mask]), self.absement[mask]])
        return x, self.observed[mask]

    def __len__(self):
        return len(self.udot)


def collect_dataset(plant, controller_config, spec, grid, n_steps, record_trace=False):
    """Run the constant-model stepping experiment over the signed grid.

    The experiment is continuous: plant, controller, and commutation state
    carry over between frequencies. Returns a dict of per-element datasets
    (and the Trace when requested).
    """
    import array

    from .plant import TraceRecorder

    fs = plant.config.sample_rate
    ts = 1.0 / fs
    state = ControllerState()
    comm = CommutationState()
    cols = {e: {k: array.array("d") for k in ("udot", "ua", "i")} for e in ELEMENTS}
    recorder = TraceRecorder() if record_trace else None
    t = 0.0
    for f in grid.signed:
        n = int(math.floor(n_steps * fs / abs(f)))
        for _ in range(n):
            alpha = comm.alpha
            rates = nominal_waveform(alpha, f, spec)
            u_before = dict(state.u_prev)
            u_cmd = control_step(state, controller_config, rates)
            y, currents = plant.step(u_cmd, alpha, f)
            udot = {e: (u_cmd[e] - u_before[e]) / ts for e in ELEMENTS}
            ua = {e: state.trackers[e].absement for e in ELEMENTS}
            for e in ELEMENTS:
                c = cols[e]
                c["udot"].append(udot[e])
                c["ua"].append(ua[e])
                c["i"].append(currents[e])
            if recorder is not None:
                recorder.record(t, alpha, u_cmd, currents, udot, ua, plant.y_true, y, 0.0)
            comm = advance_alpha(comm, f, ts)
            t += ts
    datasets = {
        e: HysteresisDataset(
            e,
            np.frombuffer(cols[e]["udot"], dtype=float).copy(),
            np.frombuffer(cols[e]["ua"], dtype=float).copy(),
            np.frombuffer(cols[e]["i"], dtype=float).copy(),
        )
        for e in ELEMENTS
    }
    if record_trace:
        return datasets, recorder.finish()
    return datasets


def kernel(x, xp, sf2, l1, l2):
    """Squared-exponential kernel with per-axis length scales."""
    d1 = (x[0] - xp[0]) / l1
    d2 = (x[1] - xp[1]) / l2
    return sf2 * math.exp(-0.5 * (d1 * d1 + d2 * d2))


def kernel_matrix(x, centers, sf2, l1, l2):
    """n x m matrix of kernel evaluations (vectorized)."""
    x = np.atleast_2d(x)
    d1 = (x[:, 0:1] - centers[None, :, 0]) / l1
    d2 = (x[:, 1:2] - centers[None, :, 1]) / l2
    return sf2 * np.exp(-0.5 * (d1 * d1 + d2 * d2))


def default_centers(dataset, shape=(12, 12)):
    """Regular grid of kernel centers over the visited input bounding box."""
    x, _ = dataset.samples()
    if x.shape[0] == 0:
        raise FittingError(f"{dataset.element}: no included samples")
    r = np.linspace(x[:, 0].min(), x[:, 0].max(), shape[0])
    a = np.linspace(x[:, 1].min(), x[:, 1].max(), shape[1])
    rr, aa = np.meshgrid(r, a, indexing="ij")
    return np.column_stack([rr.ravel(), aa.ravel()])


def default_hyperparams(dataset, centers):
    """Length scales at half the center spacing; signal variance from data."""
    r = np.unique(centers[:, 0])
    a = np.unique(centers[:, 1])
    l1 = 0.5 * (r[1] - r[0]) if len(r) > 1 else max(r[0], 1.0)
    l2 = 0.5 * (a[1] - a[0]) if len(a) > 1 else max(a[0], 1.0)
    _, m = dataset.samples()
    sf2 = float(np.var(m))
    if sf2 <= 0.0:
        sf2 = float(np.mean(m) ** 2) or 1.0
    return sf2, l1, l2


@dataclass
class KernelModel:
    """Direction-split linear-in-parameters gain surface."""

    centers: np.ndarray
    sf2: float
    l1: float
    l2: float
    theta: dict                      # '+'/'-' -> weight vector
    ridge: float = None              # None means the data-scaled default was used

    def predict(self, x, direction):
        k = kernel_matrix(x, self.centers, self.sf2, self.l1, self.l2)
        return k @ self.theta[direction]

    def handles(self):
        return {d: KernelHandle(self, d) for d in ("+", "-")}


class KernelHandle:
    """Single-direction evaluation handle for the control law."""

    __slots__ = ("model", "direction", "median_gain")

    def __init__(self, model, direction):
        self.model = model
        self.direction = direction
        self.median_gain = float(np.median(model.predict(model.centers, direction)))

    def gain(self, rate_abs, absement):
        m = self.model
        acc = 0.0
        th = m.theta[self.direction]
        c = m.centers
        inv1 = 1.0 / m.l1
        inv2 = 1.0 / m.l2
        for i in range(c.shape[0]):
            d1 = (rate_abs - c[i, 0]) * inv1
            d2 = (absement - c[i, 1]) * inv2
            acc += th[i] * math.exp(-0.5 * (d1 * d1 + d2 * d2))
        return m.sf2 * acc


def ridge_parameter(design, scale=1e-8):
    """Default ridge: scale * trace(K^T K) / n_centers."""
    return scale * float(np.sum(design * design)) / design.shape[1]


def fit_model(dataset, centers, hyperparams, ridge=None):
    """Direction-split regularized least squares via an orthogonal factorization."""
    sf2, l1, l2 = hyperparams
    theta = {}
    m_centers = centers.shape[0]
    for direction in ("+", "-"):
        x, m = dataset.samples(direction)
        if x.shape[0] < m_centers:
            raise FittingError(
                f"{dataset.element}{direction}: {x.shape[0]} samples for {m_centers} centers"
            )
        design = kernel_matrix(x, centers, sf2, l1, l2)
        lam = ridge_parameter(design) if ridge is None else ridge
        if lam > 0.0:
            aug = np.vstack([design, math.sqrt(lam) * np.eye(m_centers)])
            rhs = np.concatenate([m, np.zeros(m_centers)])
        else:
            aug, rhs = design, m
        sol, _, rank, _ = linalg.lstsq(aug, rhs, lapack_driver="gelsd")
        if rank < m_centers:
            raise FittingError(f"{dataset.element}{direction}: rank-deficient fit ({rank}/{m_centers})")
        theta[direction] = sol
    return KernelModel(centers, sf2, l1, l2, theta, ridge)


def fit_ramberg_osgood(dataset, exponent_bounds=(0.05, 2.0)):
    """Rate-independent power-law gain h1 + h2*ua^h3 via separable least squares."""
    x, m = dataset.samples()
    if x.shape[0] == 0:
        raise FittingError(f"{dataset.element}: empty dataset")
    ua = x[:, 1]
    if np.ptp(ua) == 0.0:
        raise FittingError(f"{dataset.element}: degenerate data (single absement value)")

    def inner(h3):
        design = np.column_stack([np.ones_like(ua), np.power(ua, h3)])
        coef, _, _, _ = linalg.lstsq(design, m, lapack_driver="gelsd")
        res = design @ coef - m
        return float(res @ res), coef

    result = optimize.minimize_scalar(
        lambda h3: inner(h3)[0], bounds=exponent_bounds, method="bounded",
        options={"xatol": 1e-10},
    )
    h3 = float(result.x)
    _, coef = inner(h3)
    return float(coef[0]), float(coef[1]), h3


def ramberg_osgood_predict(h, ua):
    h1, h2, h3 = h
    return h1 + h2 * np.power(ua, h3)


@dataclass
class LookupTable2D:
    """Bilinear gain table over (|udot|, absement); out-of-range queries clamp."""

    rate_axis: np.ndarray
    absement_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.rate_axis = np.asarray(self.rate_axis, dtype=float)
        self.absement_axis = np.asarray(self.absement_axis, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.rate_axis) <= 0) or np.any(np.diff(self.absement_axis) <= 0):
            raise ValueError("axes must be strictly increasing")
        if self.values.shape != (len(self.rate_axis), len(self.absement_axis)):
            raise ValueError("value matrix shape does not match axes")
        if np.any(self.values <= 0.0):
            raise LutBuildError("lookup table holds non-positive gains")

    def eval(self, rate_abs, absement):
        return lut_eval(self, rate_abs, absement)

    def eval_many(self, rate_abs, absement):
        r = np.clip(rate_abs, self.rate_axis[0], self.rate_axis[-1])
        a = np.clip(absement, self.absement_axis[0], self.absement_axis[-1])
        i = np.clip(np.searchsorted(self.rate_axis, r, side="right") - 1, 0, len(self.rate_axis) - 2)
        j = np.clip(np.searchsorted(self.absement_axis, a, side="right") - 1, 0, len(self.absement_axis) - 2)
        t1 = (r - self.rate_axis[i]) / (self.rate_axis[i + 1] - self.rate_axis[i])
        t2 = (a - self.absement_axis[j]) / (self.absement_axis[j + 1] - self.absement_axis[j])
        v = self.values
        return ((1 - t1) * ((1 - t2) * v[i, j] + t2 * v[i, j + 1])
                + t1 * ((1 - t2) * v[i + 1, j] + t2 * v[i + 1, j + 1]))


def lut_eval(table, rate_abs, absement):
    """Scalar bilinear interpolation with edge clamping."""
    ra = table.rate_axis
    aa = table.absement_axis
    r = min(max(rate_abs, ra[0]), ra[-1])
    a = min(max(absement, aa[0]), aa[-1])
    i = int(np.searchsorted(ra, r, side="right")) - 1
    j = int(np.searchsorted(aa, a, side="right")) - 1
    i = min(max(i, 0), len(ra) - 2)
    j = min(max(j, 0), len(aa) - 2)
    t1 = (r - ra[i]) / (ra[i + 1] - ra[i])
    t2 = (a - aa[j]) / (aa[j + 1] - aa[j])
    v = table.values
    return ((1 - t1) * ((1 - t2) * v[i, j] + t2 * v[i, j + 1])
            + t1 * ((1 - t2) * v[i + 1, j] + t2 * v[i + 1, j + 1]))


class LutHandle:
    """LookupTable2D wrapped for the control law."""

    __slots__ = ("table", "median_gain")

    def __init__(self, table):
        self.table = table
        self.median_gain = float(np.median(table.values))

    def gain(self, rate_abs, absement):
        return lut_eval(self.table, rate_abs, absement)


def build_lut(model, rate_axis, absement_axis):
    """Evaluate the kernel model on the grid, one table per direction."""
    rr, aa = np.meshgrid(rate_axis, absement_axis, indexing="ij")
    pts = np.column_stack([rr.ravel(), aa.ravel()])
    tables = {}
    for direction in ("+", "-"):
        vals = model.predict(pts, direction).reshape(len(rate_axis), len(absement_axis))
        if np.any(vals <= 0.0):
            raise LutBuildError(f"direction {direction}: non-positive gain at a grid node")
        tables[direction] = LookupTable2D(np.array(rate_axis, dtype=float),
                                          np.array(absement_axis, dtype=float), vals)
    return tables


def default_lut_axes(centers, shape=(64, 64)):
    r = np.linspace(centers[:, 0].min(), centers[:, 0].max(), shape[0])
    a = np.linspace(centers[:, 1].min(), centers[:, 1].max(), shape[1])
    return r, a


def build_direction_luts(model, dataset, shape=(64, 64)):
    """Per-direction tables over each direction's own visited region.

    The two stepping directions visit different rate bands (slow traces one
    way, fast retraces the other), so a shared grid would force the fit to
    extrapolate far outside its support; queries beyond a direction's box
    clamp to its edge.
    """
    tables = {}
    for direction in ("+", "-"):
        x, _ = dataset.samples(direction)
        if x.shape[0] == 0:
            raise LutBuildError(f"{dataset.element}{direction}: no included samples")
        r = np.linspace(x[:, 0].min(), x[:, 0].max(), shape[0])
        a = np.linspace(x[:, 1].min(), x[:, 1].max(), shape[1])
        vals = model.predict(
            np.column_stack([g.ravel() for g in np.meshgrid(r, a, indexing="ij")]),
            direction).reshape(shape)
        if np.any(vals <= 0.0):
            raise LutBuildError(f"direction {direction}: non-positive gain at a grid node")
        tables[direction] = LookupTable2D(r, a, vals)
    return tables

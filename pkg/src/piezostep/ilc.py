"""Iterative learning of the angle-domain compensation function.

A piecewise-linear rate profile on a fixed angle grid is refined over
repeated stepping trials: the measured tracking error is filtered through a
learning filter (an approximate sensor inverse scaled by a learning gain)
and a robustness lowpass, then projected back onto the profile basis in a
sensor-weighted least-squares sense. Companion routines compute the
finite-horizon and frequency-domain convergence certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal

from .controller import ControllerState, control_step
from .lti import DiscreteFilter, butter_lowpass
from .metrics import rmsd
from .waveforms import TWO_PI, integrate_reference, modified_shear_reference, wrap_angle

EXPLICIT_MATRIX_CAP = 4000


class ProjectionError(RuntimeError):
    pass


class IlcDivergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


class FilterDesignError(RuntimeError):
    pass


@dataclass
class LiftedOperator:
    """Finite-horizon view of a causal LTI filter.

    Holds the impulse-response coefficients over the horizon; application is
    matrix-free (the filter recursion), the explicit lower-triangular
    Toeplitz matrix is built on demand and capped in size.
    """

    filter: DiscreteFilter
    horizon: int
    impulse: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        self.impulse = self.filter.impulse(self.horizon)

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if len(x) != self.horizon:
            raise ValueError("signal length must equal the horizon")
        return self.filter.apply(x)

    def apply_columns(self, mat):
        return signal.lfilter(self.filter.b, self.filter.a, np.asarray(mat, dtype=float), axis=0)

    def matrix(self):
        if self.horizon > EXPLICIT_MATRIX_CAP:
            raise ValueError(
                f"explicit matrix capped at N={EXPLICIT_MATRIX_CAP}; reduce the horizon"
            )
        return linalg.toeplitz(self.impulse, np.zeros(self.horizon))


def lift(filt, horizon):
    """Lift a DiscreteFilter (or (b, a) pair) to the finite horizon."""
    if not isinstance(filt, DiscreteFilter):
        filt = DiscreteFilter(*filt)
    return LiftedOperator(filt, horizon)


@dataclass
class CompensationProfile:
    """Piecewise-linear, 2pi-periodic rate compensation on a fixed angle grid."""

    gamma: np.ndarray
    direction: str = "+"
    f_train: float = 1.0

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.ndim != 1 or len(self.gamma) < 2:
            raise ValueError("profile needs at least two grid values")
        if self.f_train <= 0:
            raise ValueError("training drive frequency must be positive")

    @property
    def n_gamma(self):
        return len(self.gamma)

    @property
    def spacing(self):
        return TWO_PI / self.n_gamma

    def rate(self, alpha):
        a = wrap_angle(alpha)
        d = self.spacing
        c = int(a / d)
        if c >= self.n_gamma:
            c = self.n_gamma - 1
        w = (a - c * d) / d
        return (1.0 - w) * self.gamma[c] + w * self.gamma[(c + 1) % self.n_gamma]

    def rates(self, alphas):
        return basis_matrix(alphas, self.n_gamma) @ self.gamma

    @classmethod
    def zero(cls, n_gamma, direction="+", f_train=1.0):
        return cls(np.zeros(n_gamma), direction, f_train)


def basis_matrix(alphas, n_gamma):
    """Rows of wraparound linear-interpolation weights; each row sums to 1."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas < 0.0) or np.any(alphas >= TWO_PI):
        raise ValueError("angles must lie in [0, 2pi)")
    d = TWO_PI / n_gamma
    c = np.minimum((alphas / d).astype(int), n_gamma - 1)
    w = (alphas - c * d) / d
    psi = np.zeros((len(alphas), n_gamma))
    rows = np.arange(len(alphas))
    psi[rows, c] = 1.0 - w
    psi[rows, (c + 1) % n_gamma] = w
    return psi


@dataclass
class IlcFilters:
    learning: DiscreteFilter
    robustness: DiscreteFilter
    beta: float
    delay: int


def design_L(sensor_model, beta):
    """Learning filter: delayed stable inverse of the sensor model, scaled.

    Zeros of the model outside the unit circle are reflected inside with
    magnitude matching before inversion; the model's relative degree sets
    the delay that keeps the inverse causal, and is built into the returned
    filter. Returns ``(filter, delay)``.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError("learning gain must lie in (0, 1]")
    from .sensorid import reflect_unstable_poles

    b_g = np.asarray(sensor_model.b, dtype=float)
    a_g = np.asarray(sensor_model.a, dtype=float)
    d = sensor_model.relative_degree
    b_proper = b_g[d:]
    if len(b_proper) == 0 or b_proper[0] == 0.0:
        raise FilterDesignError("model has zero leading impulse coefficient beyond its delay")
    b_stab, gain = reflect_unstable_poles(b_proper)
    num = np.concatenate([np.zeros(d), beta * a_g])
    den = b_stab * gain
    filt = DiscreteFilter(num, den)
    if not filt.is_stable(tol=1e-9):
        raise FilterDesignError("learning filter unstable after zero reflection")
    return filt, d


def design_Q(cutoff_hz, order, sample_rate):
    """Unity-DC-gain robustness lowpass."""
    return butter_lowpass(cutoff_hz, sample_rate, order=order)


def make_filters(sensor_model, beta, q_cutoff_hz, q_order):
    l_filter, d = design_L(sensor_model, beta)
    q_filter = design_Q(q_cutoff_hz, q_order, sensor_model.sample_rate)
    return IlcFilters(l_filter, q_filter, beta, d)


def ilc_update(profile_time, eps, filters):
    """One application of the update law, computed by causal filtering."""
    eps = np.asarray(eps, dtype=float)
    learned = filters.learning.apply(eps)
    return filters.robustness.apply(np.asarray(profile_time, dtype=float) + learned)


def _as_filter(ghat):
    if isinstance(ghat, LiftedOperator):
        return ghat.filter
    if isinstance(ghat, DiscreteFilter):
        return ghat
    return ghat.as_filter()


def project(f_time, psi, ghat):
    """Sensor-weighted projection of a rate signal onto the profile basis.

    Minimizes the two-norm of the sensor-filtered residual; the filtered
    basis is formed by column-wise causal filtering, so no
    horizon-by-horizon matrix is materialized.
    """
    filt = _as_filter(ghat)
    f_time = np.asarray(f_time, dtype=float)
    b = signal.lfilter(filt.b, filt.a, np.asarray(psi, dtype=float), axis=0)
    z = signal.lfilter(filt.b, filt.a, f_time)
    gamma, _, rank, _ = linalg.lstsq(b, z, lapack_driver="gelsd")
    if rank < psi.shape[1]:
        raise ProjectionError(f"filtered basis rank {rank} < {psi.shape[1]}")
    return gamma


@dataclass
class CertificateReport:
    horizon: int
    n_gamma: int
    idempotency_defect: float
    spectral_radius_projector: float
    sigma_max_projector: float
    sigma_max_iteration: float
    sigma_max_iteration_restricted: float

    def converged(self):
        return self.sigma_max_iteration_restricted < 1.0


def projection_certificates(psi, ghat_op, g_true_op, q_op, l_op):
    """Finite-horizon convergence certificates via explicit lifted matrices.

    Builds the sensor-weighted projector D and reports its idempotency
    defect, its spectral radius (the idempotent-matrix eigenvalue bound) and
    Euclidean norm, plus the iteration-matrix norm both over the full space
    and restricted to the compensation subspace where the iterates live.
    """
    n = psi.shape[0]
    if n > EXPLICIT_MATRIX_CAP:
        raise ValueError(
            f"certificate horizon {n} exceeds the explicit-matrix cap "
            f"{EXPLICIT_MATRIX_CAP}; reduce N"
        )
    gh = ghat_op.matrix()
    b = gh @ psi
    m = b.T @ b
    d_mat = psi @ linalg.solve(m, b.T @ gh, assume_a="sym")
    idem = np.linalg.norm(d_mat @ d_mat - d_mat, 2)
    svals = linalg.svdvals(d_mat)
    evals = linalg.eigvals(d_mat)
    iteration = d_mat @ q_op.matrix() @ (np.eye(n) - l_op.matrix() @ g_true_op.matrix())
    sigma_full = linalg.svdvals(iteration)[0]
    v, _ = linalg.qr(psi, mode="economic")
    sigma_restricted = linalg.svdvals(iteration @ v)[0]
    return CertificateReport(
        horizon=n,
        n_gamma=psi.shape[1],
        idempotency_defect=float(idem),
        spectral_radius_projector=float(np.max(np.abs(evals))),
        sigma_max_projector=float(svals[0]),
        sigma_max_iteration=float(sigma_full),
        sigma_max_iteration_restricted=float(sigma_restricted),
    )


def check_convergence_freq(q_filter, l_filter, g_filter, omega=None, delay=0):
    """Supremum of |Q (1 - L G)| over the frequency grid.

    ``delay`` adds the learning delay q^-d to L. The default grid is dense
    over (0, pi]; below one is a sufficient condition for monotone
    convergence of the learning iteration.
    """
    if omega is None:
        omega = np.concatenate([
            np.geomspace(1e-5 * np.pi, 0.1 * np.pi, 1200, endpoint=False),
            np.linspace(0.1 * np.pi, np.pi, 2800),
        ])
    qf = q_filter.freq_response(omega)
    lf = l_filter.freq_response(omega)
    if delay:
        lf = lf * np.exp(-1j * omega * delay)
    gf = g_filter.freq_response(omega)
    return float(np.max(np.abs(qf * (1.0 - lf * gf))))


@dataclass
class IlcResult:
    profile: CompensationProfile
    rmsd_history: np.ndarray
    gamma_history: np.ndarray
    final_error: np.ndarray
    alphas: np.ndarray


def run_ilc(plant_factory, controller_config, spec, thresholds, ghat, filters,
            f_alpha, n_trials, n_gamma, steps=6, exclude_steps=1,
            seed_policy="fixed", base_seed=0, divergence_growth=1.1,
            divergence_runs=3, reference=None, zero_mean=True):
    """Learn one direction's compensation profile over repeated trials.

    Every trial resets the plant to the identical initial state (seed policy
    'fixed' reuses the base seed; 'increment' offsets it by the trial
    index), simulates ``steps`` full cycles with the profile-modified shear
    references, and updates the profile from the sensor-referenced tracking
    error. The first ``exclude_steps`` cycles are excluded from the error
    window used for learning and scoring. ``reference`` may supply a
    precomputed ``(r, alphas)`` pair (e.g. the model-predicted reference);
    the default is the sensor-filtered ideal-kinematics reference.

    ``zero_mean`` removes the profile's mean after each projection: a net
    compensation rate is exactly the component the anti-windup saturation
    discards, so it is uncontrollable (and reverse stepping flips its
    apparent sign), while the angle-periodic disturbance rate is zero-mean
    anyway.
    """
    if f_alpha == 0.0:
        raise ValueError("drive frequency must be nonzero")
    direction = "+" if f_alpha > 0 else "-"
    fs = controller_config.sample_rate
    ts = 1.0 / fs
    n_step = int(round(fs / abs(f_alpha)))
    n_total = steps * n_step
    n_skip = exclude_steps * n_step

    if reference is None:
        r, alphas, _ = integrate_reference(f_alpha, n_total, ts, spec, thresholds,
                                           ghat=ghat)
    else:
        r, alphas = reference
        if len(r) != n_total or len(alphas) != n_total:
            raise ValueError("reference length must match the trial horizon")
    psi_win = basis_matrix(alphas[n_skip:], n_gamma)
    psi_full = basis_matrix(alphas, n_gamma)
    ghat_filter = _as_filter(ghat)

    gamma = np.zeros(n_gamma)
    gamma_history = [gamma.copy()]
    rmsd_history = []
    eps = None
    grow = 0
    for trial in range(n_trials):
        profile = CompensationProfile(gamma, direction, f_train=abs(f_alpha))
        seed = base_seed if seed_policy == "fixed" else base_seed + trial
        plant = plant_factory(seed)
        state = ControllerState()
        y = np.empty(n_total)
        profiles = {direction: profile}
        for k in range(n_total):
            a = alphas[k]
            rates = modified_shear_reference(a, f_alpha, spec, profiles)
            u_cmd = control_step(state, controller_config, rates)
            y[k], _ = plant.step(u_cmd, a, f_alpha)
        eps = r - y
        rmsd_history.append(rmsd(eps[n_skip:]))
        if trial >= 1 and rmsd_history[-1] > divergence_growth * rmsd_history[-2]:
            grow += 1
            if grow >= divergence_runs:
                raise IlcDivergenceError(
                    f"RMSD grew >{(divergence_growth - 1) * 100:.0f}% for "
                    f"{divergence_runs} consecutive trials",
                    history=np.array(rmsd_history),
                )
        else:
            grow = 0
        f_next = ilc_update(psi_full @ gamma, eps, filters)
        gamma = project(f_next[n_skip:], psi_win, ghat_filter)
        if zero_mean:
            gamma = gamma - gamma.mean()
        gamma_history.append(gamma.copy())
    final_profile = CompensationProfile(gamma_history[n_trials - 1], direction,
                                        f_train=abs(f_alpha))
    return IlcResult(
        profile=final_profile,
        rmsd_history=np.array(rmsd_history),
        gamma_history=np.array(gamma_history),
        final_error=eps,
        alphas=alphas,
    )

"""Feedforward control toolbox for simulated piezo-stepper actuators."""

from .controller import (
    ELEMENTS,
    AbsementTracker,
    ConstantModel,
    ControllerConfig,
    ControllerState,
    control_step,
    select_direction_model,
)
from .plant import Plant, PlantConfig, ElementTruth, Trace, kappa, disturbance, true_hysteresis
from .waveforms import (
    CommutationState,
    WaveformSpec,
    advance_alpha,
    integrate_reference,
    modified_shear_reference,
    nominal_waveform,
)
from .identify import (
    FrequencyGrid,
    HysteresisDataset,
    KernelModel,
    LookupTable2D,
    LutHandle,
    build_lut,
    collect_dataset,
    fit_model,
    fit_ramberg_osgood,
    frequency_grid,
    kernel,
    lut_eval,
    observed_gain,
)
from .strokes import StrokeLUT, build_stroke_lut, extrema_sets, objective, optimize_bounds
from .sensorid import FrequencyResponse, SensorModel, average_sensor_frf, bla, fit_parametric, multisine
from .ilc import (
    CompensationProfile,
    IlcFilters,
    LiftedOperator,
    basis_matrix,
    check_convergence_freq,
    design_L,
    design_Q,
    ilc_update,
    lift,
    project,
    projection_certificates,
    run_ilc,
)
from .metrics import rmsd, reverse_cumulative_spectrum

__version__ = "0.1.0"

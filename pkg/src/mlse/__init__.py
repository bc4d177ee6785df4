"""Maximum-likelihood recursive state estimation.

Particle-filter density propagation combined with EM iterations delivers the
mode (not the mean) of the filtered, predicted or smoothed state density for
nonlinear, non-Gaussian state-space models, with Kalman/RTS references for
the linear Gaussian case.
"""
from .ascent import AscentResult, GradientAscentConfig, maximize
from .densities import GaussianDensity, NoiseDensity, UniformBoxDensity
from .em_filter import (
    EmConfig,
    EmTrace,
    emsf_step,
    empirical_filtered_log_density,
    lambda_weights,
    m_step,
    q_hat,
    q_hat_grad,
)
from .em_predictor import (
    emsp_on_propagated,
    emsp_step,
    empirical_predicted_log_density,
    propagate_to,
    propagate_with_intermediates,
    q_hat_pred,
    q_hat_pred_grad,
)
from .em_smoother import (
    SmootherInputs,
    emss_step,
    empirical_smoothed_log_density,
    ffbs_smoothed_weights,
    q_hat_smooth,
    q_hat_smooth_grad,
    smoothing_denominators,
)
from .errors import (
    ConfigurationError,
    DegenerateResponsibilitiesError,
    DegenerateWeightsError,
    EstimationError,
    ModelClassError,
    SupportMismatchError,
)
from .experiment import (
    DensityGridSpec,
    ExperimentConfig,
    ExperimentResult,
    derive_stream,
    export_density_grid,
    initial_mode,
    run_experiment,
    summarize,
    write_outputs,
)
from .fp_filter import FpGain, fp_gain, fpsf_iterate, fpsf_step
from .kalman import GaussianBelief, kalman_tracks, kf_predict, kf_update, rts_smooth, rts_tracks
from .model import (
    StateSpaceModel,
    Trajectory,
    apply_f,
    apply_g,
    builtin_example1,
    builtin_example2,
    example2_gain,
    get_model,
    simulate,
)
from .particle_filter import (
    BootstrapStepResult,
    ParticleSet,
    bootstrap_filter_step,
    effective_sample_size,
    init_particles,
    measurement_update,
    systematic_resample,
    time_update,
    weighted_mean,
)

__version__ = "0.1.0"

"""qsa-lab: root finding and gradient-free optimization driven by
deterministic probing signals, with desk-scale convergence-rate tooling."""

from .gain import GainKind, GainSchedule, gain_integral, gain_log_derivative, gain_value
from .probe import (
    FourierSeries,
    ProbeKind,
    ProbeSpec,
    ProbeTerm,
    ergodic_average,
    make_normalized_probe,
    poisson_fourier,
    poisson_sawtooth,
    probe_eval,
    probe_eval_array,
    quasi_uniform,
    sawtooth_mixture,
    sinusoid_mixture,
    torus_probe,
)
from .qsa import (
    DivergenceError,
    RateFit,
    ScaledErrorSeries,
    Trajectory,
    estimate_rate,
    error_series,
    integrate_autonomous,
    integrate_mean_flow,
    integrate_qsa,
    ode_at_infinity,
    rp_average,
    scaled_error,
)
from .linmodel import (
    BiasVectors,
    LinearModel,
    eigenvalues,
    is_hurwitz,
    linear_qsa_closed_form,
    matrix_exponential,
    rp_closed_form,
    solve_lyapunov,
    upsilon_bar_numeric,
    xi_integral,
    y_bar,
)
from .qsgd import LossEvaluationError, QsgdConfig, QsgdVariant, episodic_qsgd, epsilon_bias_sweep, qsgd_field, run_qsgd

__version__ = "0.1.0"

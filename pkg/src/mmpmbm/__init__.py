"""Multiple-model Poisson multi-Bernoulli mixture filtering for maneuvering targets."""
from .assignment import best_assignment, gate_measurements, k_best_assignments
from .density import (
    BernoulliComponent,
    GlobalHypothesis,
    ModelConditionedDensity,
    PmbmState,
    birth_intensity,
)
from .errors import ConfigurationError, NumericalError, RejectedMeasurementError
from .gaussian import (
    GaussianComponent,
    GaussianMixture,
    bayes_update_gaussian,
    propagate_gaussian,
    reduce_mixture,
)
from .metrics import OspaParams, cardinality_error, ospa
from .models import JmsConfig, MeasurementModel, ct_model, cv_model, validate_jms
from .pmbm import FilterParams, MMPMBMFilter, extract_estimates, predict_step, update_step

__version__ = "0.1.0"

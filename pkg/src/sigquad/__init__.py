"""Exact integration of sigmoidal network surrogates.

Train a one-hidden-layer logistic network on samples of a function, then
compute integrals, marginals, slices and line integrals of the surrogate
in closed form; MC/QMC baselines and a control-variate estimator are
included for empirical validation.
"""

from .polylog import MAX_ORDER, li_neg_exp, softplus
from .proxy import (
    DomainMap,
    FitResult,
    ProxyNet,
    SampleSet,
    TrainConfig,
    affine_reparam,
    concat_nets,
    default_neuron_count,
    denormalize_estimate,
    fit,
    load_weights,
    normalize,
    save_weights,
    slice_reparam,
)
from .qnet import (
    Box,
    MarginalFn,
    SignMatrix,
    integral_1d_closed,
    integral_2d_closed,
    integrate,
    integrate_box,
    integrate_segment,
    marginalize,
    qnet_apply,
    sign_matrix,
)
from .integrands import (
    GaussianMixture,
    IndicatorBoxSum,
    SteppedGaussianMixture,
    ZonePlate,
    eval_integrand,
    reference_integral,
    sample_family,
    spec_from_dict,
    spec_to_dict,
)
from .estimators import (
    EstimateRecord,
    EstimatorKind,
    convergence_study,
    cv_estimate,
    halton,
    mc_estimate,
    qmc_estimate,
    qnet_estimate,
    summarize,
    write_records_csv,
)

__version__ = "0.1.0"

"""Vectors of compound random measures for dependent mixture modelling.

The package covers prior simulation of compound random measure vectors and
their nested extension, an exact posterior characterisation, a conditional
Gibbs sampler built on inverse Levy-measure trajectories, mixture density
estimation with credible bands, two-level clustering of groups and of
observations, and closed-form dependence summaries.

Most workflows go through one of three entry points:

* :class:`CormDensityEstimator` / :class:`NestedCormEstimator` for a
  scikit-learn style fit-then-query interface,
* :func:`run_chain` with :class:`ModelSpec` / :class:`ChainConfig` for direct
  control over the sampler,
* the ``corms`` command line tool for file-based runs.
"""

from .analytics import (
    DensityGrid,
    baseline_mixture_draw,
    default_grid,
    exceedance_probability,
    expected_kl,
    j_divergence,
    mixture_density_draw,
    scalar_summary,
    weight_correlation,
)
from .data import (
    SCENARIO_NAMES,
    GroupedData,
    ScenarioTruth,
    generate_scenario,
    ingest_csv,
)
from .errors import (
    ConfigError,
    CormsError,
    DegenerateMeasureError,
    NumericError,
    UnsupportedKernelError,
    ValidationError,
)
from .estimators import CormDensityEstimator, NestedCormEstimator
from .kernels import BaseMeasureSpec, KernelSpec, NigParams
from .measures import (
    BetaDirecting,
    CrmTrajectory,
    GammaScores,
    NestedCormDraw,
    StableDirecting,
    attach_scores,
    fk_prior_trajectory,
    marginal_levy_intensity,
    sample_nested_prior,
)
from .numerics import QuadratureSpec
from .partitions import (
    eppf_exchangeable,
    peppf_corm,
    peppf_nested,
    similarity_matrix,
    tau_one,
    vi_distance,
    vi_point_estimate,
)
from .posterior import (
    AuxiliaryU,
    FrequencyTable,
    ImportanceSpec,
    fk_posterior_trajectory,
    posterior_levy_intensity,
    sample_fixed_jump,
    sample_fixed_scores,
    sample_free_scores,
    sample_sigma_ell,
)
from .records import ChainFile, ChainRecord, ChainWriter, read_chain, records_by_chain, write_chain
from .samplers import ChainConfig, ChainState, ModelSpec, init_state, run_chain

__all__ = [
    "AuxiliaryU",
    "BaseMeasureSpec",
    "BetaDirecting",
    "ChainConfig",
    "ChainFile",
    "ChainRecord",
    "ChainState",
    "ChainWriter",
    "ConfigError",
    "CormDensityEstimator",
    "CormsError",
    "CrmTrajectory",
    "DegenerateMeasureError",
    "DensityGrid",
    "FrequencyTable",
    "GammaScores",
    "GroupedData",
    "ImportanceSpec",
    "KernelSpec",
    "ModelSpec",
    "NestedCormDraw",
    "NestedCormEstimator",
    "NigParams",
    "NumericError",
    "QuadratureSpec",
    "SCENARIO_NAMES",
    "ScenarioTruth",
    "StableDirecting",
    "UnsupportedKernelError",
    "ValidationError",
    "attach_scores",
    "baseline_mixture_draw",
    "default_grid",
    "eppf_exchangeable",
    "exceedance_probability",
    "expected_kl",
    "fk_posterior_trajectory",
    "fk_prior_trajectory",
    "generate_scenario",
    "ingest_csv",
    "init_state",
    "j_divergence",
    "marginal_levy_intensity",
    "mixture_density_draw",
    "peppf_corm",
    "peppf_nested",
    "posterior_levy_intensity",
    "read_chain",
    "records_by_chain",
    "run_chain",
    "sample_fixed_jump",
    "sample_fixed_scores",
    "sample_free_scores",
    "sample_nested_prior",
    "sample_sigma_ell",
    "scalar_summary",
    "similarity_matrix",
    "tau_one",
    "vi_distance",
    "vi_point_estimate",
    "write_chain",
]

__version__ = "0.1.0"

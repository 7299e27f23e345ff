"""Effect estimation in high-dimensional regressions with latent confounders.

Typical use::

    from latentadj import ObservedData, fit
    res = fit(ObservedData(y=y, x=x, z=intercept), k=10)
    res.primary.p_value
"""

from __future__ import annotations

from .design import ObservedData, Partition, orthonormal_complement, partition, remove_nuisance
from .errors import (
    DegenerateDataError,
    IllConditionedError,
    InputError,
    LatentAdjError,
    RankDeficientError,
)
from .factors import FactorEstimate, estimate_factors, procrustes_rotation, spike_debias
from .fdr import FdrResult, adjust, bh_adjust, fdp, storey_pi0, storey_qvalue
from .inference import (
    METHODS,
    ConfoundingTest,
    EffectTable,
    confounding_test,
    effects_adjusted_uncorrected,
    effects_bias_corrected,
    effects_oracle,
    effects_unadjusted,
)
from .omega import OmegaEstimate, bias_corrected_omega, naive_omega, theoretical_shrinkage
from .pipeline import FitResult, fit
from .simulation import (
    ExperimentReport,
    SimulationConfig,
    SimulationTruth,
    calibrate_omega_norm,
    generate_scenario,
    run_experiment,
    standardize_truth,
)

__version__ = "0.1.0"

__all__ = [
    "adjust",
    "bh_adjust",
    "bias_corrected_omega",
    "calibrate_omega_norm",
    "confounding_test",
    "ConfoundingTest",
    "DegenerateDataError",
    "effects_adjusted_uncorrected",
    "effects_bias_corrected",
    "effects_oracle",
    "effects_unadjusted",
    "EffectTable",
    "estimate_factors",
    "ExperimentReport",
    "FactorEstimate",
    "fdp",
    "FdrResult",
    "fit",
    "FitResult",
    "generate_scenario",
    "IllConditionedError",
    "InputError",
    "LatentAdjError",
    "METHODS",
    "naive_omega",
    "ObservedData",
    "OmegaEstimate",
    "orthonormal_complement",
    "Partition",
    "partition",
    "procrustes_rotation",
    "RankDeficientError",
    "remove_nuisance",
    "run_experiment",
    "SimulationConfig",
    "SimulationTruth",
    "spike_debias",
    "standardize_truth",
    "storey_pi0",
    "storey_qvalue",
    "theoretical_shrinkage",
]

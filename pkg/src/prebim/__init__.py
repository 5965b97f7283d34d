"""Pseudo-residual discovery of valid instruments for bi-directional Mendelian randomization."""
from ._backend import BACKEND
from .bench import BenchmarkReport, csr, csr_verbatim, mse, run_benchmark
from .direction import direction_ratio, infer_direction_effects
from .discovery import DiscoveryTrace, find_valid_iv_sets, grow_valid_set, seed_pair
from .estimators import (
    CorrelationTest,
    fisher_z_test,
    ols_estimate,
    pearson_correlation,
    pseudo_residual,
    tsls_estimate,
    tsls_population,
    valid_set_test,
)
from .model import (
    Dataset,
    DiscoveryConfig,
    EffectEstimates,
    IVSetCollection,
    ModelParams,
    PrebimError,
    ValidityLabels,
    population_moments,
)
from .simulator import ScenarioSpec, draw_scenario_params, generate_dataset

__version__ = "0.1.0"


def prebim(dataset, config=DiscoveryConfig()):
    """Discover valid instrument sets, then assign directions and estimate both effects."""
    sets = find_valid_iv_sets(dataset, config)
    return sets, infer_direction_effects(dataset, sets, config.tolerance)

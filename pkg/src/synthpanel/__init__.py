"""Synthetic control and difference-in-differences toolkit for bidding-zone
border studies on municipality panels."""

from . import errors
from .datasets import (
    demo_dataset_dir,
    demo_run_config,
    load_demo_graph,
    load_demo_panel,
    load_demo_truth,
)
from .did import (
    DidFit,
    DidSpec,
    TrendsTest,
    did_2x2_oracle,
    did_placebo,
    fit_did,
    parallel_trends_test,
)
from .inference import (
    PermutationEnvelope,
    PlaceboFit,
    RatioTest,
    donor_pool_placebos,
    in_time_placebo,
    permutation_envelope,
    rmspe_ratio_test,
)
from .panel import (
    DailyRadiationSeries,
    IngestConfig,
    PanelDataset,
    UnitMeta,
    VariableStats,
    descriptive_stats,
    impute_carry_forward,
    lag_covariates,
    load_ingest_config,
    load_panel,
    radiation_stats,
    save_panel,
)
from .regions import (
    AdjacencyGraph,
    AggregateSeries,
    RegionSet,
    aggregate_region,
    build_border_regions,
    load_adjacency,
    save_adjacency,
)
from .scm import (
    BalanceRow,
    EffectTable,
    PredictorSpec,
    ScmFit,
    ScmOptions,
    effect_table,
    fit_scm,
    inner_weights,
    predictor_balance,
)
from .simplex import SimplexLsqResult, simplex_least_squares
from .simulate import (
    GeneratedData,
    GeneratorSpec,
    TruthRecord,
    generate,
    simulate_to_directory,
    write_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyGraph",
    "AggregateSeries",
    "BalanceRow",
    "DailyRadiationSeries",
    "DidFit",
    "DidSpec",
    "EffectTable",
    "GeneratedData",
    "GeneratorSpec",
    "IngestConfig",
    "PanelDataset",
    "PermutationEnvelope",
    "PlaceboFit",
    "PredictorSpec",
    "RatioTest",
    "RegionSet",
    "ScmFit",
    "ScmOptions",
    "SimplexLsqResult",
    "TrendsTest",
    "TruthRecord",
    "UnitMeta",
    "VariableStats",
    "aggregate_region",
    "build_border_regions",
    "demo_dataset_dir",
    "demo_run_config",
    "descriptive_stats",
    "did_2x2_oracle",
    "did_placebo",
    "donor_pool_placebos",
    "effect_table",
    "errors",
    "fit_did",
    "fit_scm",
    "generate",
    "impute_carry_forward",
    "in_time_placebo",
    "inner_weights",
    "lag_covariates",
    "load_adjacency",
    "load_ingest_config",
    "load_panel",
    "parallel_trends_test",
    "permutation_envelope",
    "predictor_balance",
    "radiation_stats",
    "rmspe_ratio_test",
    "save_adjacency",
    "save_panel",
    "simplex_least_squares",
    "simulate_to_directory",
    "write_dataset",
]

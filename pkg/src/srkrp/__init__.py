"""Sparse random Khatri-Rao product codes for straggler-tolerant matrix multiplication."""

from .analysis import (
    CostReport,
    cost_model,
    empirical_vs_approx_report,
    failure_prob_approx,
    single_weight_full_rank_prob,
    zero_column_prob_approx,
)
from .campaign import (
    CampaignResult,
    ExperimentConfig,
    Norm,
    StragglerMode,
    run_failure_campaign,
    run_stability_campaign,
)
from .codec import (
    CodeRealization,
    CodingVector,
    GeneratorMatrix,
    SystemConfig,
    build_generator,
    decode,
    draw_code,
    draw_coding_vector,
    encode_block,
    kron_row,
    partition_columns,
)
from .errors import (
    ConfigError,
    DecodeError,
    NumericalError,
    ParameterError,
    RankError,
    ShapeError,
    SRKRPError,
)
from .runtime import ExecutionMetrics, TaskAssignment, measure_empirical_costs, orchestrate
from .weights import (
    CoefficientDistribution,
    WeightDistribution,
    mean_weight,
    sample_coefficient,
    sample_weight,
    simplest_distribution,
)

__version__ = "0.1.0"

"""Matrix factorization with matrix-valued rating targets.

Ratings are lifted to t x t blocks whose diagonal carries the normalized
rating and whose off-diagonals carry side channels (user and item
popularity); per-user and per-item factor blocks are fit to those targets by
SGD.  A classic scalar baseline, accuracy/fairness metrics, and a sweep
harness round out the package.
"""

from .blocktarget import (
    BlockSpec,
    BlockTarget,
    ChannelBinding,
    SideChannel,
    build_target,
    build_targets,
    popularity_spec,
    scalar_spec,
)
from .dataset import (
    InteractionTable,
    PopularityTable,
    RatingRecord,
    Split,
    build_interactions,
    compute_popularity,
    load_ratings,
    split,
)
from .errors import ConfigError, DataError, DivergenceError, MetricError
from .factorization import (
    ClassicModel,
    LossTrace,
    MatMatModel,
    TrainConfig,
    block_gradients,
    init_matmat,
    load_model,
    matmat_residual,
    predict_classic,
    predict_many,
    predict_matmat,
    save_model,
    sgd_step,
    train_classic,
    train_matmat,
)
from .harness import (
    DEFAULT_GRID,
    ExperimentConfig,
    SweepResult,
    emit_charts,
    emit_csv,
    evaluate,
    footprint_command,
    run_experiment,
)
from .metrics import (
    EvalReport,
    TopKLists,
    mae,
    matthew_degree,
    matthew_degree_from_frequencies,
    rmse,
    storage_footprint,
    topk,
)

__version__ = "0.1.0"

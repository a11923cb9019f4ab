"""Two-layer patch CNN trained by SGD or SAM on signal-plus-noise data.

Weights are numpy arrays of shape (2m, d); rows [0, m) are the filters
that vote for +1, rows [m, 2m) the filters that vote for -1.
"""

from ._samcnn import (
    Algorithm,
    ConfigError,
    DataParams,
    Dataset,
    DegenerateBasisError,
    DimensionError,
    DivergenceError,
    Error,
    InitScheme,
    NetConfig,
    TrainConfig,
    __version__,
    batch_gradient,
    batch_loss,
    classify_regime,
    decompose,
    derive_seed,
    forward,
    gen_dataset,
    init_weights,
    loss,
    loss_grad,
    margins,
    parse_config,
    regime_ratio,
    run_grid,
    sam_step,
    sgd_step,
    test_error,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]

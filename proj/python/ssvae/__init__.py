"""Semi-supervised anomaly detection with variational autoencoders."""

from ._ssvae import (
    DataError,
    Ensemble,
    NumericalAbort,
    ShapeError,
    auroc,
    fit,
    kl_divergence,
    load_csv,
    load_ensemble,
    run,
    synth,
)

__all__ = [
    "DataError",
    "Ensemble",
    "NumericalAbort",
    "ShapeError",
    "auroc",
    "fit",
    "kl_divergence",
    "load_csv",
    "load_ensemble",
    "run",
    "synth",
]

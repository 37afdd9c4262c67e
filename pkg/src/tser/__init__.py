"""Time series entity resampling: augment a collection toward one series of interest."""

__version__ = "0.1.0"

from .errors import TSERError  # noqa: E402
from .evaluate import average_rank, bayesian_signed_rank, mase, pct_diff  # noqa: E402
from .learn import Regime, assemble_training_set, fit_direct, forecast  # noqa: E402
from .preprocess import EmbeddedDataset, denormalize, embed, normalize  # noqa: E402
from .resample import ResamplePlan, augment, label, required_synthetics  # noqa: E402
from .series import (  # noqa: E402
    GeneratorSpec,
    SeriesCollection,
    TimeSeries,
    generate_synthetic_collection,
    load_collection,
    slice_train_test,
)

__all__ = [
    "EmbeddedDataset",
    "GeneratorSpec",
    "Regime",
    "ResamplePlan",
    "SeriesCollection",
    "TSERError",
    "TimeSeries",
    "assemble_training_set",
    "augment",
    "average_rank",
    "bayesian_signed_rank",
    "denormalize",
    "embed",
    "fit_direct",
    "forecast",
    "generate_synthetic_collection",
    "label",
    "load_collection",
    "mase",
    "normalize",
    "pct_diff",
    "required_synthetics",
    "slice_train_test",
]

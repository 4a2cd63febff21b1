"""White-box feature attribution and evaluation toolkit for flow classifiers.

The package trains small dense ReLU classifiers on network-flow feature
tables, explains them with three white-box attribution methods (integrated
gradients, epsilon-rule relevance propagation, and rescale-rule DeepLift),
and scores the explanations with six evaluation metrics.
"""

__version__ = "0.1.0"

from .network import (
    ArchSpec,
    DenseLayer,
    DenseNetwork,
    ModelFormatError,
    TrainConfig,
    gradient,
    load_model,
    predict,
    save_model,
    train,
)
from .attribution import (
    Attribution,
    FeatureRanking,
    deeplift,
    global_attribution,
    integrated_gradients,
    lrp,
)
from .data import (
    Dataset,
    DatasetSchema,
    SynthSpec,
    inject_robustness_columns,
    load_csv,
    preprocess,
    split,
    synthesize,
)
from .metrics import MetricReport, PerturbationTrace
from .runner import replay_report, run_metric

__all__ = [
    "ArchSpec",
    "Attribution",
    "Dataset",
    "DatasetSchema",
    "DenseLayer",
    "DenseNetwork",
    "FeatureRanking",
    "ModelFormatError",
    "SynthSpec",
    "TrainConfig",
    "deeplift",
    "global_attribution",
    "gradient",
    "inject_robustness_columns",
    "integrated_gradients",
    "load_csv",
    "load_model",
    "lrp",
    "MetricReport",
    "PerturbationTrace",
    "predict",
    "preprocess",
    "replay_report",
    "run_metric",
    "save_model",
    "split",
    "synthesize",
    "train",
]

"""Feature-based TCFA classifiers: feed-forward net, k-nearest neighbours, random forest."""

from ._common import TrainingDivergedError, as_xy
from .fnn import FnnModel, FnnTrainConfig, fnn_predict_proba, fnn_train
from .forest import RfModel, rf_predict_proba, rf_train
from .knn import KnnModel, knn_fit, knn_predict_proba

__all__ = [
    "FnnModel",
    "FnnTrainConfig",
    "KnnModel",
    "RfModel",
    "TrainingDivergedError",
    "as_xy",
    "fnn_predict_proba",
    "fnn_train",
    "knn_fit",
    "knn_predict_proba",
    "rf_predict_proba",
    "rf_train",
]

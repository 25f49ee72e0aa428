import numpy as np

from ..features import FeatureMatrix


class TrainingDivergedError(FloatingPointError):
    """Loss became NaN or infinite during training."""


def as_xy(data, labels=None):
    if isinstance(data, FeatureMatrix):
        return data.values, data.labels
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    y = None if labels is None else np.asarray(labels, dtype=np.int64)
    return X, y


def check_binary(y) -> None:
    present = set(np.unique(y).tolist())
    if not present <= {0, 1}:
        raise ValueError(f"labels must be 0/1, got {sorted(present)}")
    if len(present) < 2:
        raise ValueError("training data must contain both classes")

"""Input checks shared by the estimators."""
import numpy as np
from sklearn.utils import check_array


def check_matrix(X, dim=None) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_min_samples=0)
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"dimension mismatch: expected {dim} features, got {X.shape[1]}")
    return X


def check_vector(x, dim=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D feature vector, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim} features, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("feature vector contains non-finite values")
    return x


def check_labels(y, n=None) -> np.ndarray:
    y = np.asarray(y).reshape(-1)
    if n is not None and len(y) != n:
        raise ValueError(f"got {len(y)} labels for {n} samples")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be -1 or +1")
    return y.astype(int)


def check_unit_box(x, name="x") -> None:
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]^d")

import numbers

import numpy as np
from sklearn.utils.validation import check_array


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def check_data(X, min_samples=1, name="X"):
    """Validate an observation matrix and return it as a float64 array.

    Rows are observations. A 1-d input is read as ``n`` scalar observations.
    """
    X = np.asarray(X, dtype=float) if not hasattr(X, "X") else np.asarray(X.X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < min_samples:
        raise DomainError(f"{name} needs at least {min_samples} rows, got {X.shape[0]}")
    return check_array(X, dtype=np.float64, ensure_min_samples=min_samples,
                       input_name=name)


def check_alpha(alpha):
    if not (isinstance(alpha, numbers.Real) and 0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return float(alpha)


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise DomainError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)

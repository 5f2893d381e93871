"""Input validation helpers shared by the estimators."""

import numbers

import numpy as np

from funcreg.exceptions import ConfigError, DataError


def check_int(value, name, minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{name} must be <= {maximum}, got {value}")
    return value


def check_real(value, name, low=None, high=None, low_open=False, high_open=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    if low is not None and (value < low or (low_open and value == low)):
        raise ConfigError(f"{name}={value} is below its allowed range")
    if high is not None and (value > high or (high_open and value == high)):
        raise ConfigError(f"{name}={value} is above its allowed range")
    return value


def check_finite_array(values, name, ndim=None):
    arr = np.asarray(values)
    if not np.iscomplexobj(arr):
        arr = arr.astype(float)
    if ndim is not None and arr.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains NaN or infinite values")
    return arr


def check_lags(lags):
    out = []
    for lag in lags:
        lag = tuple(int(v) for v in lag)
        if len(lag) != 2 or min(lag) < 0 or lag == (0, 0):
            raise ConfigError(f"spatial lags must be non-negative, non-zero pairs; got {lag}")
        out.append(lag)
    if not out:
        raise ConfigError("at least one spatial lag is required")
    return tuple(out)


def check_is_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        from sklearn.exceptions import NotFittedError

        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )

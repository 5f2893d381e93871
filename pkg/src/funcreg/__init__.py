"""Functional regression for curves in time and on spatial lattices.

Two estimators share one set of Hilbert-space primitives:

* :func:`funcreg.bayes.fit_bayes_gls`, a surface regression on lagged
  rank-one kernel regressors with a Bayesian AR(1) error structure and
  closed-form inverse covariance;
* :class:`funcreg.spectral.SpatialSpectralRegressor`, a spatial regression
  on neighbour tensors fitted by frequency-domain GLS.
"""

from funcreg.bayes import BayesFit, LOOCVResult, fit_bayes_gls, loocv
from funcreg.core import EigenSystem, KernelOperator, SampledFunction, TimeGrid
from funcreg.exceptions import ConfigError, DataError, FuncRegError, NumericalError, SingularSystemError
from funcreg.preprocess import LatticeDetrender, LatticeField, LatticeTaper
from funcreg.spectral import SpatialCVReport, SpatialSpectralRegressor, spatial_kfold_cv

__version__ = "0.1.0"

__all__ = [
    "BayesFit",
    "LOOCVResult",
    "fit_bayes_gls",
    "loocv",
    "EigenSystem",
    "KernelOperator",
    "SampledFunction",
    "TimeGrid",
    "ConfigError",
    "DataError",
    "FuncRegError",
    "NumericalError",
    "SingularSystemError",
    "LatticeDetrender",
    "LatticeField",
    "LatticeTaper",
    "SpatialCVReport",
    "SpatialSpectralRegressor",
    "spatial_kfold_cv",
]

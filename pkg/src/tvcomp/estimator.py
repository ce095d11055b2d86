"""Scikit-learn style front end for the ternary compressor.

Each sample (row) is treated as one parameter vector and compressed
independently: keep the signs of the top k% magnitudes, set every kept
entry to alpha * population std of the row.  The transformer is stateless
(like sklearn's Normalizer): fit only validates.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import _topk_support, n_keep_for
from .errors import InvalidDensity


class TernaryCompressor(TransformerMixin, BaseEstimator):
    """Dense-in, dense-out ternarization of row vectors.

    Parameters
    ----------
    k_percent : float in (0, 100], fraction of entries kept per row.
    alpha : positive float, multiplier on the per-row std used as the
        shared magnitude of kept entries.
    """

    def __init__(self, k_percent: float = 5.0, alpha: float = 1.0):
        self.k_percent = k_percent
        self.alpha = alpha

    def _validate_params_(self):
        if not (0 < self.k_percent <= 100):
            raise InvalidDensity(f"k_percent must be in (0, 100], got {self.k_percent}")
        if self.alpha <= 0:
            raise InvalidDensity(f"alpha must be positive, got {self.alpha}")

    def fit(self, X, y=None):
        self._validate_params_()
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        self._validate_params_()
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        out = np.zeros_like(X)
        n_keep = n_keep_for(X.shape[1], self.k_percent)
        for i, row in enumerate(X):
            keep = _topk_support(np.abs(row), n_keep)
            scale = self.alpha * row.std()
            out[i, keep] = np.sign(row[keep]) * scale
        return out

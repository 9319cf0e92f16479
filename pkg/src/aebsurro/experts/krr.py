import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from aebsurro.errors import ConditioningError, ConfigurationError
from aebsurro.experts.base import Expert, Standardizer


def laplacian_kernel(A, B, gamma):
    """exp(-gamma * ||a - b||_1) for every row pair."""
    return np.exp(-gamma * cdist(np.atleast_2d(A), np.atleast_2d(B), metric="cityblock"))


class KRRExpert(Expert):
    """Kernel ridge regression with a Laplacian kernel on standardized parameters.

    Dual coefficients solve (K + lambda * n * I) A = Y by Cholesky.
    """

    family = "krr"

    def __init__(self, gamma=0.3, lam=1e-4, name=None):
        if not gamma > 0:
            raise ConfigurationError(f"gamma must be positive, got {gamma}")
        if not lam >= 0:
            raise ConfigurationError(f"lambda must be non-negative, got {lam}")
        super().__init__(name, gamma=float(gamma), lam=float(lam))

    def _fit(self, X, Y):
        gamma, lam = self.hyperparameters["gamma"], self.hyperparameters["lam"]
        n = len(X)
        self.scaler_ = Standardizer().fit(X)
        self.X_ = self.scaler_.transform(X)
        if lam == 0 and len(np.unique(self.X_, axis=0)) < n:
            raise ConditioningError("duplicate training inputs make K singular; use lambda > 0")
        K = laplacian_kernel(self.X_, self.X_, gamma)
        K[np.diag_indices(n)] += lam * n
        try:
            factor = linalg.cho_factor(K, lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise ConditioningError(
                f"kernel matrix is not positive definite at lambda={lam}; use lambda > 0") from None
        self.dual_coef_ = linalg.cho_solve(factor, Y.reshape(n, -1), check_finite=False)

    def _predict(self, X):
        K = laplacian_kernel(self.scaler_.transform(X), self.X_, self.hyperparameters["gamma"])
        return K @ self.dual_coef_


def fit_krr(X, Y, gamma=0.3, lam=1e-4, name=None):
    return KRRExpert(gamma, lam, name=name).fit(X, Y)

"""Polynomial chaos expansion on a total-degree Legendre basis."""

import itertools

import numpy as np

from aebsurro.errors import ConfigurationError, RankError
from aebsurro.experts.base import Expert
from aebsurro.sim import ParameterPriors


def legendre_table(x, degree):
    """Columns P_0(x) .. P_degree(x) by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for n in range(1, degree):
        out[..., n + 1] = ((2 * n + 1) * x * out[..., n] - n * out[..., n - 1]) / (n + 1)
    return out


def total_degree_multi_indices(dim, degree):
    """All multi-indices with entries summing to at most ``degree``, by increasing total degree."""
    indices = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), total):
            idx = [0] * dim
            for j in combo:
                idx[j] += 1
            indices.append(idx)
    return np.array(indices, dtype=int).reshape(-1, dim)


class PCEExpert(Expert):
    family = "pce"

    def __init__(self, degree=3, bounds=None, name=None):
        if int(degree) != degree or degree < 0:
            raise ConfigurationError(f"degree must be a non-negative integer, got {degree}")
        super().__init__(name, degree=int(degree))
        self.bounds = np.asarray(ParameterPriors().bounds if bounds is None else bounds, dtype=float)

    def to_unit(self, X):
        """Affine map of each parameter interval onto [-1, 1]."""
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return 2.0 * (X - lo) / (hi - lo) - 1.0

    def design(self, X):
        Z = self.to_unit(X)
        table = legendre_table(Z, self.hyperparameters["degree"])  # (n, dim, degree+1)
        cols = np.ones((len(X), len(self.indices_)))
        for j in range(Z.shape[1]):
            cols *= table[:, j, self.indices_[:, j]]
        return cols

    def _fit(self, X, Y):
        self.indices_ = total_degree_multi_indices(X.shape[1], self.hyperparameters["degree"])
        n_basis = len(self.indices_)
        if len(X) < n_basis:
            raise RankError(f"underdetermined: {n_basis} basis functions but only {len(X)} samples")
        Phi = self.design(X)
        coef, _, rank, _ = np.linalg.lstsq(Phi, Y.reshape(len(Y), -1), rcond=None)
        if rank < n_basis:
            raise RankError(f"design matrix has rank {rank} < {n_basis} basis functions ({len(X)} samples)")
        self.coef_ = coef

    def _predict(self, X):
        return self.design(X) @ self.coef_


def fit_pce(X, Y, degree=3, priors=None, name=None):
    bounds = None if priors is None else priors.bounds
    return PCEExpert(degree, bounds, name=name).fit(X, Y)

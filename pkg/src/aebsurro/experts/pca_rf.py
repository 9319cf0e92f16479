import numpy as np

from aebsurro.errors import ConfigurationError, PCAError
from aebsurro.experts.base import Expert
from aebsurro.experts.forest import RandomForest


class PCA:
    """Classical PCA through the thin SVD of the centred data matrix."""

    def __init__(self, variance_kept=0.99):
        if not 0 < variance_kept <= 1:
            raise ConfigurationError(f"variance_kept must lie in (0, 1], got {variance_kept}")
        self.variance_kept = variance_kept

    def fit(self, M):
        M = np.asarray(M, dtype=float)
        self.mean_ = M.mean(axis=0)
        _, s, vt = np.linalg.svd(M - self.mean_, full_matrices=False)
        variances = s**2 / max(len(M) - 1, 1)
        total = variances.sum()
        if not total > 0:
            raise PCAError("output matrix has zero variance")
        ratio = np.cumsum(variances) / total
        k = int(np.searchsorted(ratio, self.variance_kept - 1e-12)) + 1
        self.n_components_ = min(k, len(variances))
        self.explained_variance_ = variances
        self.components_ = vt[: self.n_components_]
        return self

    def transform(self, M):
        return (np.asarray(M, dtype=float) - self.mean_) @ self.components_.T

    def inverse_transform(self, scores):
        return np.asarray(scores) @ self.components_ + self.mean_


class PCARFExpert(Expert):
    """Random forest on the principal-component scores of the flattened outputs."""

    family = "pca-rf"

    def __init__(self, variance_kept=0.99, n_trees=200, mtry=2, min_leaf=2, seed=0, bootstrap=True,
                 max_depth=None, n_jobs=1, name=None):
        PCA(variance_kept)
        super().__init__(name, variance_kept=float(variance_kept), n_trees=n_trees, mtry=mtry,
                         min_leaf=min_leaf, seed=seed, bootstrap=bootstrap, max_depth=max_depth)
        self.n_jobs = n_jobs

    def _fit(self, X, Y):
        hp = self.hyperparameters
        flat = Y.reshape(len(Y), -1)
        self.pca_ = PCA(hp["variance_kept"]).fit(flat)
        self.forest_ = RandomForest(hp["n_trees"], hp["mtry"], hp["min_leaf"], max_depth=hp["max_depth"],
                                    bootstrap=hp["bootstrap"], seed=hp["seed"],
                                    n_jobs=self.n_jobs).fit(X, self.pca_.transform(flat))

    def _predict(self, X):
        return self.pca_.inverse_transform(self.forest_.predict(X))


def fit_pca_rf(X, Y, variance_kept=0.99, n_trees=200, mtry=2, min_leaf=2, seed=0, **kwargs):
    return PCARFExpert(variance_kept, n_trees, mtry, min_leaf, seed, **kwargs).fit(X, Y)

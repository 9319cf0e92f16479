import numpy as np

from aebsurro.errors import ConfigurationError
from aebsurro.experts.base import Expert, Standardizer, check_positive_int


class KNNExpert(Expert):
    """Unweighted mean of the k nearest training series.

    Distances are Euclidean on standardized parameters; ties go to the
    earlier training row.
    """

    family = "knn"

    def __init__(self, k=5, name=None):
        super().__init__(name, k=check_positive_int("k", k))

    def _fit(self, X, Y):
        k = self.hyperparameters["k"]
        if k > len(X):
            raise ConfigurationError(f"k={k} exceeds the training size {len(X)}")
        self.scaler_ = Standardizer().fit(X)
        self.X_ = self.scaler_.transform(X)
        self.Y_ = Y.reshape(len(Y), -1)

    def _predict(self, X):
        k = self.hyperparameters["k"]
        Z = self.scaler_.transform(X)
        d2 = ((Z[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return self.Y_[nearest].mean(axis=1)


def fit_knn(X, Y, k=5, name=None):
    return KNNExpert(k, name=name).fit(X, Y)

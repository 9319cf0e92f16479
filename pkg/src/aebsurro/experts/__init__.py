"""Benchmark regressors sharing the :class:`~aebsurro.experts.base.Expert` contract."""

from aebsurro.experts.base import Expert, load_model, save_model
from aebsurro.experts.forest import GlobalRFExpert, PerSeriesRFExpert, RandomForest, fit_rf_global, fit_rf_per_series
from aebsurro.experts.knn import KNNExpert, fit_knn
from aebsurro.experts.krr import KRRExpert, fit_krr, laplacian_kernel
from aebsurro.experts.pca_rf import PCA, PCARFExpert, fit_pca_rf
from aebsurro.experts.pce import PCEExpert, fit_pce
from aebsurro.experts.tuning import TuneResult, grid_points, tune

FAMILIES = {
    cls.family: cls
    for cls in (KNNExpert, KRRExpert, PCEExpert, GlobalRFExpert, PerSeriesRFExpert, PCARFExpert)
}

__all__ = [
    "FAMILIES",
    "PCA",
    "Expert",
    "GlobalRFExpert",
    "KNNExpert",
    "KRRExpert",
    "PCARFExpert",
    "PCEExpert",
    "PerSeriesRFExpert",
    "RandomForest",
    "TuneResult",
    "fit_knn",
    "fit_krr",
    "fit_pca_rf",
    "fit_pce",
    "fit_rf_global",
    "fit_rf_per_series",
    "grid_points",
    "laplacian_kernel",
    "load_model",
    "save_model",
    "tune",
]

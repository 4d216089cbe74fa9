"""BRISQUE no-reference quality scoring."""

from .model import (
    QualityModel,
    import_svr_model,
    load_quality_model,
    save_quality_model,
    score,
    train_quality_model,
)
from .nss import (
    DEFAULT_C,
    N_FEATURES,
    AggdParams,
    GgdParams,
    Products,
    brisque_features,
    fit_aggd,
    fit_ggd,
    image_features,
    local_mean_std,
    mscn,
    pairwise_products,
    to_luma,
)

__all__ = [
    "AggdParams",
    "DEFAULT_C",
    "GgdParams",
    "N_FEATURES",
    "Products",
    "QualityModel",
    "brisque_features",
    "fit_aggd",
    "fit_ggd",
    "image_features",
    "import_svr_model",
    "load_quality_model",
    "local_mean_std",
    "mscn",
    "pairwise_products",
    "save_quality_model",
    "score",
    "to_luma",
    "train_quality_model",
]

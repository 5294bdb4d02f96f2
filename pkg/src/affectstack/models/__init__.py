"""The model zoo: ridge, all-threshold ordinal regression, forests and boosting."""
from .io import (
    CorruptModelError,
    ModelFormatError,
    ModelVersionError,
    load_model,
    save_model,
)
from .ordinal import OptConfig, OrdinalThresholdModel, ordinal_fit, ordinal_objective, ordinal_predict
from .params import (
    FAMILIES,
    GRADIENT_BOOSTED,
    ORDINAL,
    RANDOM_FOREST,
    RIDGE,
    HyperParams,
)
from .ridge import RidgeModel, ridge_fit, ridge_objective, ridge_predict
from .trees import (
    CLASSIFICATION,
    REGRESSION,
    Tree,
    TreeEnsembleModel,
    build_tree,
    find_best_split,
    forest_fit,
    gbt_fit,
    model_predict,
)

__all__ = [
    "CLASSIFICATION",
    "REGRESSION",
    "FAMILIES",
    "GRADIENT_BOOSTED",
    "ORDINAL",
    "RANDOM_FOREST",
    "RIDGE",
    "HyperParams",
    "RidgeModel",
    "ridge_fit",
    "ridge_objective",
    "ridge_predict",
    "OptConfig",
    "OrdinalThresholdModel",
    "ordinal_fit",
    "ordinal_objective",
    "ordinal_predict",
    "Tree",
    "TreeEnsembleModel",
    "build_tree",
    "find_best_split",
    "forest_fit",
    "gbt_fit",
    "model_predict",
    "save_model",
    "load_model",
    "ModelFormatError",
    "CorruptModelError",
    "ModelVersionError",
]

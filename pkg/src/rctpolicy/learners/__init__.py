from .models import (
    KINDS,
    TREE_KINDS,
    BoostedTreesModel,
    FeedforwardModel,
    LearnerSpec,
    Model,
    SupportVectorModel,
    TreeModel,
    fit,
    importance,
    load_model,
    model_from_dict,
    predict,
    save_model,
)

__all__ = [
    "KINDS", "TREE_KINDS", "BoostedTreesModel", "FeedforwardModel", "LearnerSpec", "Model",
    "SupportVectorModel", "TreeModel", "fit", "importance", "load_model", "model_from_dict",
    "predict", "save_model",
]

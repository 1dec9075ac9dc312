from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import VARIANTS, ModelConfig
from .layers import (
    AGTLayerParams,
    Dropout,
    MessageGraph,
    SequenceBatch,
    agm_layer,
    agt_forward,
    classify_and_loss,
    masked_loss,
    predict,
    project_features,
)
from .network import (
    AGHINT,
    GuidanceMismatchError,
    ModelInputs,
    check_guidance,
    init_params,
    model_forward,
    prepare_inputs,
)

__all__ = [
    "AGHINT", "AGTLayerParams", "CheckpointError", "Dropout", "GuidanceMismatchError",
    "MessageGraph", "ModelConfig", "ModelInputs", "SequenceBatch", "VARIANTS", "agm_layer",
    "agt_forward", "check_guidance", "classify_and_loss", "init_params", "load_checkpoint", "masked_loss",
    "model_forward", "predict", "prepare_inputs", "project_features", "save_checkpoint",
]

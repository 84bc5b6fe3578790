"""From-scratch LSTM classifier: parameters, forward pass, BPTT, Adam, model files."""

from .backend import BACKEND
from .model import (
    INPUT_SCALE,
    ClassScores,
    Gradients,
    LstmParams,
    NetConfig,
    backward,
    forward,
    forward_batch,
    hidden_states,
    init_params,
    loss_and_grad,
    mean_loss,
    nll_loss,
    param_count,
    stack_windows,
)
from .optim import AdamState, adam_step
from .serialize import MODEL_FORMAT_VERSION, load_model, model_bytes, parse_model, save_model

__all__ = [
    "BACKEND", "INPUT_SCALE", "MODEL_FORMAT_VERSION",
    "AdamState", "ClassScores", "Gradients", "LstmParams", "NetConfig",
    "adam_step", "backward", "forward", "forward_batch", "hidden_states", "init_params",
    "load_model", "loss_and_grad", "mean_loss", "model_bytes", "nll_loss", "param_count",
    "parse_model", "save_model", "stack_windows",
]

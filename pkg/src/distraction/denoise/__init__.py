"""Denoising of a preliminary pulse estimate with the inverse-attention noise."""

from .lstm import (LstmDenoiser, TrainConfig, TrainingDivergedError, denoise_lstm,
                   load_model, loss_and_grads, lstm_forward, lstm_train, save_model,
                   training_windows)
from .subtraction import freq_sub, stack_inputs, wave_sub

__all__ = [
    "LstmDenoiser", "TrainConfig", "TrainingDivergedError", "denoise_lstm", "load_model",
    "loss_and_grads", "lstm_forward", "lstm_train", "save_model", "training_windows",
    "freq_sub", "stack_inputs", "wave_sub",
]

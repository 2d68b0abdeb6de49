from .optim import Adam
from .lstm import init_lstm, lstm_forward, lstm_backward
from .transformer import init_transformer, transformer_forward, transformer_backward
from .train import train_deep, make_windows, TrainConfig

__all__ = [
    "Adam",
    "init_lstm", "lstm_forward", "lstm_backward",
    "init_transformer", "transformer_forward", "transformer_backward",
    "train_deep", "make_windows", "TrainConfig",
]

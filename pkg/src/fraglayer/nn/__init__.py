from .tensor import Tape, Tensor, parameter
from .optim import AdamState, PlateauSchedule, adam_step, plateau_update
from .cnn import SmallCnn

__all__ = [
    "AdamState",
    "PlateauSchedule",
    "SmallCnn",
    "Tape",
    "Tensor",
    "adam_step",
    "parameter",
    "plateau_update",
]

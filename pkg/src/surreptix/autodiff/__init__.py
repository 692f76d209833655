from . import ops
from .optim import SGD, Adam
from .tensor import Node, ShapeError, Tape, Tensor, active_tape, backward

__all__ = ["ops", "SGD", "Adam", "Node", "ShapeError", "Tape", "Tensor", "active_tape", "backward"]

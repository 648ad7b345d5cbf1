from . import layers, tensor
from .gradcheck import grad_check
from .optim import ParamStore, scheduled_lr
from .tensor import Tensor

__all__ = ["Tensor", "ParamStore", "grad_check", "scheduled_lr", "layers", "tensor"]

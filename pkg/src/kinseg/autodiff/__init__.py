from . import checkpoint, gradcheck, ops
from .optim import Adam
from .tensor import (LOG_FLOOR, Tensor, get_default_dtype, set_check_finite,
                     set_default_dtype)

__all__ = ["Tensor", "Adam", "ops", "gradcheck", "checkpoint", "LOG_FLOOR",
           "set_default_dtype", "get_default_dtype", "set_check_finite"]

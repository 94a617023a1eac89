"""
Annotated numpy array types for pydantic models.

Arrays are coerced on validation and frozen (read-only) so model instances stay
immutable and can be shared across worker threads.
"""

from typing import Annotated, Any

import numpy as np
from pydantic import BeforeValidator


def _frozen_copy(value: Any, dtype) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    arr.flags.writeable = False
    return arr


def _as_real(value: Any) -> np.ndarray:
    return _frozen_copy(value, np.float64)


def _as_complex(value: Any) -> np.ndarray:
    return _frozen_copy(value, np.complex128)


RealArray = Annotated[np.ndarray, BeforeValidator(_as_real)]
ComplexArray = Annotated[np.ndarray, BeforeValidator(_as_complex)]

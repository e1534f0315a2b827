"""Framework-neutral data aliases."""

from __future__ import annotations

from collections.abc import Callable
from typing import Any

import numpy as np
import numpy.typing as npt

type FloatArray = npt.NDArray[np.float64]
type ComplexArray = npt.NDArray[np.complex128]
type BoolArray = npt.NDArray[np.bool_]
type Context = dict[str, Any]
type ScalarField = Callable[[FloatArray, FloatArray], FloatArray]

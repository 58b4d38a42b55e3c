"""Input validation helpers for the estimator layer."""

from __future__ import annotations

import json
import os
from typing import Mapping

import numpy as np

from .dfinite import ODE
from .oracle import BOX_CAP
from .poly import Direction, RatFun

__all__ = ["check_rational_function", "check_ode", "check_direction", "check_n_values", "check_digits", "check_box"]


def _as_mapping(obj, what: str) -> Mapping:
    if isinstance(obj, (str, os.PathLike)):
        with open(obj) as fh:
            return json.load(fh)
    if isinstance(obj, Mapping):
        return obj
    raise TypeError(f"expected a {what}, a JSON mapping or a path, got {type(obj).__name__}")


def check_rational_function(X) -> RatFun:
    """Coerce ``X`` (RatFun, JSON mapping or path) to a :class:`RatFun`."""
    if isinstance(X, RatFun):
        F = X
    else:
        F = RatFun.from_json(_as_mapping(X, "RatFun"))
    if F.Q.constant_term() == 0:
        raise ValueError("Q(0) must be nonzero for a power series expansion at the origin")
    return F


def check_ode(y) -> ODE | None:
    if y is None or isinstance(y, ODE):
        return y
    return ODE.from_json(_as_mapping(y, "ODE"))


def check_direction(r, dim: int) -> Direction:
    if isinstance(r, Direction):
        d = r
    elif isinstance(r, str):
        d = Direction.parse(r)
    else:
        d = Direction(tuple(int(x) for x in r))
    if d.dim != dim:
        raise ValueError(f"direction has {d.dim} entries but the function has {dim} variables")
    if not d.is_integral() or any(x < 0 for x in d.r):
        raise ValueError("direction must have nonnegative integer entries")
    return d


def check_n_values(n) -> np.ndarray:
    """1-D array of positive integer indices."""
    arr = np.atleast_1d(np.asarray(n))
    if arr.ndim != 1:
        raise ValueError("expected a 1-D array of indices")
    if arr.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("indices must be integers")
        arr = arr.astype(np.int64)
    if np.any(arr < 1):
        raise ValueError("indices must be positive")
    return arr


def check_digits(digits) -> int:
    digits = int(digits)
    if digits < 10:
        raise ValueError("digits must be at least 10")
    return digits


def check_box(box: int, dim: int) -> int:
    box = int(box)
    if box < 0 or (box + 1) ** dim > BOX_CAP:
        raise ValueError(f"box size {box} outside the safety cap for dimension {dim}")
    return box

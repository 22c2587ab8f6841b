"""Log-gamma via the Lanczos approximation (g=7, 9 terms).

Kept native so that BDeu scores are bit-reproducible independent of the
platform libm.  Relative error is below 1e-13 for x >= 0.5; smaller
arguments go through the reflection formula.
"""

from __future__ import annotations

import math

import numpy as np

_G = 7.0
_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _lanczos(x: np.ndarray) -> np.ndarray:
    # x >= 0.5
    z = x - 1.0
    acc = np.full_like(z, _COEF[0])
    for i in range(1, len(_COEF)):
        acc = acc + _COEF[i] / (z + i)
    t = z + _G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def lgamma(x):
    """ln|Gamma(x)| for positive reals; accepts scalars or arrays."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr <= 0):
        raise ValueError("lgamma defined here for positive arguments only")
    small = arr < 0.5
    out = np.empty_like(arr)
    out[~small] = _lanczos(arr[~small])
    if small.any():
        xs = arr[small]
        out[small] = np.log(np.pi / np.abs(np.sin(np.pi * xs))) - _lanczos(1.0 - xs)
    if np.ndim(x) == 0:
        return float(out)
    return out

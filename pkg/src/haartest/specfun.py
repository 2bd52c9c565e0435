"""Digamma and trigamma for positive real arguments.

Both shift the argument upward with the recurrences
``psi(x) = psi(x + 1) - 1/x`` and ``psi'(x) = psi'(x + 1) + 1/x^2`` until it
reaches 10, then apply the asymptotic (Stirling-type) series.
"""

from __future__ import annotations

import math

# Bernoulli numbers B_2k for k = 1..7
_B2K = (1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730, 7.0 / 6)
_SHIFT_TO = 10.0


def digamma(x: float) -> float:
    if x <= 0:
        raise ValueError(f"digamma is only implemented for x > 0, got {x}")
    acc = 0.0
    while x < _SHIFT_TO:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    p = inv2
    for k, b in enumerate(_B2K, start=1):
        series += b / (2 * k) * p
        p *= inv2
    return acc + math.log(x) - 0.5 / x - series


def trigamma(x: float) -> float:
    if x <= 0:
        raise ValueError(f"trigamma is only implemented for x > 0, got {x}")
    acc = 0.0
    while x < _SHIFT_TO:
        acc += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = 0.0
    p = inv2 * inv
    for b in _B2K:
        series += b * p
        p *= inv2
    return acc + inv + 0.5 * inv2 + series

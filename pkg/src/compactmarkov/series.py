"""Truncated real power series and z -> 1- (Abelian) limits.

A :class:`TruncatedSeries` holds ``c_0..c_N``; arithmetic between series of
different orders is carried out up to the smaller order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, EvaluationError, SeriesDivisionError

DEFAULT_ORDER = 512
ABEL_EXPONENTS = range(3, 21)
ABEL_RTOL = 1e-3
ABEL_INFINITY = 1e9


class TruncatedSeries:
    """Coefficients ``c_0..c_N`` of a real power series."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=float).ravel()
        if c.size == 0:
            raise DomainError("a series needs at least the constant coefficient")
        if not np.all(np.isfinite(c)):
            raise DomainError("series coefficients must be finite")
        self.coeffs = c

    @classmethod
    def zeros(cls, order: int) -> TruncatedSeries:
        return cls(np.zeros(order + 1))

    @classmethod
    def monomial(cls, k: int, order: int, c: float = 1.0) -> TruncatedSeries:
        a = np.zeros(order + 1)
        if k <= order:
            a[k] = c
        return cls(a)

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    def __len__(self):
        return self.coeffs.size

    def __getitem__(self, n):
        return self.coeffs[n]

    def __repr__(self):
        head = ", ".join(f"{c:.6g}" for c in self.coeffs[:6])
        return f"TruncatedSeries([{head}{', ...' if self.order > 5 else ''}], order={self.order})"

    def truncate(self, order: int) -> TruncatedSeries:
        return TruncatedSeries(self.coeffs[: order + 1])

    __add__ = lambda self, other: series_add(self, other)
    __sub__ = lambda self, other: series_sub(self, other)
    __mul__ = lambda self, other: series_mul(self, other) if isinstance(other, TruncatedSeries) else series_scale(self, other)
    __rmul__ = lambda self, c: series_scale(self, c)
    __truediv__ = lambda self, other: series_div(self, other)

    def __call__(self, z: float) -> float:
        return series_eval(self, z)


def _common(a: TruncatedSeries, b: TruncatedSeries) -> int:
    return min(a.order, b.order) + 1


def series_add(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    n = _common(a, b)
    return TruncatedSeries(a.coeffs[:n] + b.coeffs[:n])


def series_sub(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    n = _common(a, b)
    return TruncatedSeries(a.coeffs[:n] - b.coeffs[:n])


def series_scale(a: TruncatedSeries, c: float) -> TruncatedSeries:
    return TruncatedSeries(a.coeffs * float(c))


def series_mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Cauchy product truncated to the common order."""
    n = _common(a, b)
    return TruncatedSeries(np.convolve(a.coeffs[:n], b.coeffs[:n])[:n])


def series_div(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """The series ``q`` with ``q * b = a`` up to the common order."""
    b0 = b.coeffs[0]
    if abs(b0) <= 1e-12:
        raise SeriesDivisionError(f"constant term of the divisor is {b0!r}")
    n = _common(a, b)
    num = a.coeffs[:n]
    # reversed divisor so that q[:k] . brev[-k:] = sum_{j<k} q_j b_{k-j}
    brev = b.coeffs[1:n][::-1]
    q = np.zeros(n)
    for k in range(n):
        acc = num[k]
        if k:
            acc -= q[:k] @ brev[n - 1 - k :]
        q[k] = acc / b0
    return TruncatedSeries(q)


def series_eval(a: TruncatedSeries, z: float) -> float:
    """Horner evaluation of the truncated polynomial at ``0 <= z <= 1``.

    For non-negative coefficients this is a lower bound for the full series.
    """
    if not 0.0 <= z <= 1.0:
        raise DomainError(f"series are evaluated on [0, 1], got z={z!r}")
    acc = 0.0
    for c in a.coeffs[::-1]:
        acc = acc * z + c
    return float(acc)


def write_csv(path, columns: dict[str, TruncatedSeries]) -> None:
    """Write ``index,<name>...`` rows, one per coefficient (common order)."""
    n = min(len(s) for s in columns.values())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *columns])
        for i in range(n):
            w.writerow([i, *(repr(float(s[i])) for s in columns.values())])


@dataclass
class AbelianEstimate:
    value: float
    converged: bool
    infinite: bool = False
    samples: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value": None if self.infinite else self.value,
            "infinite": self.infinite,
            "converged": self.converged,
            "samples": [[z, v] for z, v in self.samples],
        }


def abelian_limit(g: Callable[[float], float]) -> AbelianEstimate:
    """Estimate ``lim_{z -> 1-} g(z)`` on the grid ``z_k = 1 - 2**-k``, k = 3..20.

    The value is the last sample. The estimate is converged when the last three
    samples agree to relative 1e-3; monotonically increasing samples that pass
    1e9 are reported as an infinite limit.
    """
    samples = []
    for k in ABEL_EXPONENTS:
        z = 1.0 - 2.0 ** -k
        v = float(g(z))
        if not math.isfinite(v):
            raise EvaluationError(f"g({z!r}) = {v!r}")
        samples.append((z, v))
    vals = [v for _, v in samples]
    last = vals[-1]
    converged = all(abs(v - last) <= ABEL_RTOL * abs(last) for v in vals[-3:])
    increasing = all(b >= a for a, b in zip(vals, vals[1:]))
    infinite = increasing and last > ABEL_INFINITY
    if infinite:
        converged = False
    return AbelianEstimate(math.inf if infinite else last, converged, infinite, samples)

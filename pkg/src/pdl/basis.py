"""Spatial B-spline and temporal Fourier test functions.

Space-time test functions factor as ``bspline_j(x_n) * fourier_m(t)``.  All
derivatives are analytic: B-spline derivatives come from the de Boor
derivative recurrence, Fourier derivatives from differentiating sin/cos.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

KNOT_LAYOUTS = ("clamped", "uniform")


@dataclass(frozen=True)
class BsplineBasis:
    """``m1`` B-splines of order ``order`` (degree ``order - 1``) on ``[lo, hi]``.

    ``layout="clamped"`` repeats the end knots ``order`` times so the family
    is a partition of unity on the whole domain.  ``layout="uniform"`` uses
    ``m1 + order`` equally spaced knots spanning exactly ``[lo, hi]``; every
    function then has the same support, and partition of unity holds only
    away from the first/last ``order - 1`` knot intervals.
    """

    lo: float
    hi: float
    m1: int
    order: int = 3
    layout: str = "clamped"

    def __post_init__(self):
        if self.hi <= self.lo:
            raise ValueError("B-spline domain needs lo < hi")
        if self.order not in (2, 3, 4):
            raise ValueError("spline order must be 2, 3 or 4")
        if self.layout not in KNOT_LAYOUTS:
            raise ValueError(f"unknown knot layout {self.layout!r}")
        if self.m1 < self.order:
            raise ValueError("need at least `order` basis functions")
        if self.spacing < 1e-9 * (self.hi - self.lo) or self.spacing <= 0:
            raise ValueError("B-spline support below resolution floor; reduce m1")

    @property
    def spacing(self) -> float:
        """Width of one knot interval."""
        span = self.hi - self.lo
        if self.layout == "clamped":
            return span / (self.m1 - self.order + 1)
        return span / (self.m1 + self.order - 1)

    @property
    def support_width(self) -> float:
        """Support of an interior basis function."""
        return self.order * self.spacing

    @property
    def nominal_width(self) -> float:
        """Domain span divided by the number of functions.

        This is the "B-spline support" figure reported for the benchmark
        experiments (0.25 for 16 splines on [-2, 2]).
        """
        return (self.hi - self.lo) / self.m1

    @property
    def knots(self) -> np.ndarray:
        k = self.order
        if self.layout == "clamped":
            inner = np.linspace(self.lo, self.hi, self.m1 - k + 2)
            return np.concatenate([np.full(k - 1, self.lo), inner, np.full(k - 1, self.hi)])
        return np.linspace(self.lo, self.hi, self.m1 + k)

    def interior(self) -> tuple[float, float]:
        """Sub-interval on which the family sums to one."""
        if self.layout == "clamped":
            return self.lo, self.hi
        pad = (self.order - 1) * self.spacing
        return self.lo + pad, self.hi - pad

    def evaluate(self, x, deriv: int = 0) -> np.ndarray:
        """All basis functions (or a derivative) at ``x``; shape ``x.shape + (m1,)``."""
        return bspline_matrix(self.knots, self.order, x, deriv)


def bspline_matrix(knots: np.ndarray, order: int, x, deriv: int = 0) -> np.ndarray:
    """Cox-de Boor evaluation of every B-spline on ``knots`` at points ``x``.

    Knot intervals are half open ``[t_i, t_{i+1})`` (right limit at interior
    knots); the final point ``x == t_last`` is assigned to the last non-empty
    interval.  Points outside ``[t_0, t_last]`` evaluate to exactly 0.
    """
    if deriv < 0 or deriv >= order:
        if deriv >= order:
            x = np.asarray(x, dtype=float)
            return np.zeros(x.shape + (len(knots) - order,))
        raise ValueError("deriv must be nonnegative")
    t = np.asarray(knots, dtype=float)
    x = np.asarray(x, dtype=float)
    shape = x.shape
    xf = x.reshape(-1)
    n_int = len(t) - 1

    # order-1 indicator functions
    last = np.max(np.nonzero(t[1:] > t[:-1])[0])
    idx = np.searchsorted(t, xf, side="right") - 1
    idx = np.where(xf == t[-1], last, idx)
    inside = (xf >= t[0]) & (xf <= t[-1])
    B = np.zeros((xf.size, n_int))
    rows = np.nonzero(inside)[0]
    B[rows, idx[rows]] = 1.0

    lo_order = order - deriv
    for k in range(2, lo_order + 1):
        nb = len(t) - k
        left_den = t[k - 1:k - 1 + nb] - t[:nb]
        right_den = t[k:k + nb] - t[1:1 + nb]
        with np.errstate(divide="ignore", invalid="ignore"):
            lw = np.where(left_den > 0, (xf[:, None] - t[:nb]) / left_den, 0.0)
            rw = np.where(right_den > 0, (t[k:k + nb] - xf[:, None]) / right_den, 0.0)
        B = lw * B[:, :nb] + rw * B[:, 1:nb + 1]

    # derivative recurrence: d/dx B_{i,k} = (k-1) [B_{i,k-1}/(t_{i+k-1}-t_i) - B_{i+1,k-1}/(t_{i+k}-t_{i+1})]
    for k in range(lo_order + 1, order + 1):
        nb = len(t) - k
        left_den = t[k - 1:k - 1 + nb] - t[:nb]
        right_den = t[k:k + nb] - t[1:1 + nb]
        with np.errstate(divide="ignore", invalid="ignore"):
            lc = np.where(left_den > 0, (k - 1) / left_den, 0.0)
            rc = np.where(right_den > 0, (k - 1) / right_den, 0.0)
        B = lc * B[:, :nb] - rc * B[:, 1:nb + 1]

    return B.reshape(shape + (B.shape[1],))


def bspline_eval(basis: BsplineBasis, j: int, x, deriv: int = 0):
    """Value of basis function ``j`` (or its derivative) at ``x``."""
    if not 0 <= j < basis.m1:
        raise IndexError(f"basis index {j} out of range")
    out = basis.evaluate(x, deriv)[..., j]
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FourierBasis:
    """Temporal modes on ``[t0, t0 + period]``.

    Mode 0 is the constant; modes ``2j - 1`` and ``2j`` are ``cos`` and ``sin``
    of ``2 pi j (t - t0) / period``.  With an even mode count the final sine
    is dropped.
    """

    period: float
    m2: int
    t0: float = 0.0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("Fourier period must be positive")
        if self.m2 < 1:
            raise ValueError("need at least one temporal mode")

    def frequencies(self) -> np.ndarray:
        j = (np.arange(self.m2) + 1) // 2
        return 2 * np.pi * j / self.period

    def evaluate(self, t, deriv: int = 0) -> np.ndarray:
        """All modes at ``t``; shape ``t.shape + (m2,)``."""
        s = np.asarray(t, dtype=float)[..., None] - self.t0
        w = self.frequencies()
        is_sin = (np.arange(self.m2) % 2 == 0) & (np.arange(self.m2) > 0)
        phase = w * s
        if deriv == 0:
            out = np.where(is_sin, np.sin(phase), np.cos(phase))
        elif deriv == 1:
            out = np.where(is_sin, w * np.cos(phase), -w * np.sin(phase))
        else:
            raise ValueError("only first time derivatives are supported")
        return out

    def labels(self) -> list[str]:
        out = ["1"]
        for m in range(1, self.m2):
            j = (m + 1) // 2
            out.append(f"cos{j}" if m % 2 else f"sin{j}")
        return out


def fourier_eval(basis: FourierBasis, m2: int, t, deriv: int = 0):
    if not 0 <= m2 < basis.m2:
        raise IndexError(f"mode index {m2} out of range")
    out = basis.evaluate(t, deriv)[..., m2]
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TestGrid:
    """One B-spline family per variable plus a shared Fourier family."""

    splines: tuple[BsplineBasis, ...]
    fourier: FourierBasis

    __test__ = False  # not a pytest class

    @property
    def m1(self) -> int:
        return self.splines[0].m1

    @property
    def m2(self) -> int:
        return self.fourier.m2

    @property
    def size(self) -> int:
        return self.m1 * self.m2

    def flat_index(self, m1: int, m2: int) -> int:
        if not (0 <= m1 < self.m1 and 0 <= m2 < self.m2):
            raise IndexError("test-function index out of range")
        return m1 * self.m2 + m2

    def split_index(self, m: int) -> tuple[int, int]:
        if not 0 <= m < self.size:
            raise IndexError("test-function index out of range")
        return divmod(m, self.m2)

    def manifest(self) -> dict:
        return {
            "m1": self.m1, "m2": self.m2,
            "order": self.splines[0].order, "layout": self.splines[0].layout,
            "domains": [[s.lo, s.hi] for s in self.splines],
            "period": self.fourier.period, "t0": self.fourier.t0,
        }


def build_test_grid(ranges: Sequence[tuple[float, float]], m1: int, m2: int,
                    times: Sequence[float], order: int = 3,
                    layout: str = "clamped") -> TestGrid:
    """Test grid over per-variable ``ranges`` (already padded) and the time span."""
    if m1 < 4:
        raise ValueError("m1 must be at least 4")
    times = np.asarray(times, dtype=float)
    splines = tuple(BsplineBasis(lo, hi, m1, order, layout) for lo, hi in ranges)
    fourier = FourierBasis(float(times[-1] - times[0]), m2, float(times[0]))
    return TestGrid(splines, fourier)

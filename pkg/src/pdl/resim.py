"""Collocation of cloud means and Gaussian re-simulation of denser clouds.

Collocation fits, per variable, a cubic spline curve through the cloud means
by penalized weighted least squares

    sum_k w_k (mean_k - f(t_k))^2 + lam * int f''(t)^2 dt,

with inverse-variance weights ``w_k = P_k / var_k`` rescaled to unit mean (so
``lam`` does not depend on cloud sizes).  Re-simulation then draws Gaussian
clouds around the fitted curve on a finer time grid.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from .basis import BsplineBasis
from .datamodel import DataError, PopulationDataset

log = logging.getLogger(__name__)

LAMBDA_GRID = np.logspace(-8, 3, 23)
VAR_FLOOR = 1e-12


class CollocationError(ArithmeticError):
    pass


class MultimodalCloudError(DataError):
    pass


def roughness_matrix(basis: BsplineBasis) -> np.ndarray:
    """``R_ij = int B_i''(t) B_j''(t) dt``, exact for splines up to cubic."""
    knots = np.unique(basis.knots)
    nodes, weights = leggauss(3)
    R = np.zeros((basis.m1, basis.m1))
    for a, b in zip(knots[:-1], knots[1:]):
        t = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        d2 = basis.evaluate(t, 2)
        R += (d2.T * (0.5 * (b - a) * weights)) @ d2
    return R


def bimodality_score(values: np.ndarray) -> float:
    """Ashman's D for the best two-means split of 1-D ``values``."""
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    if n < 10 or v[-1] == v[0]:
        return 0.0
    csum = np.cumsum(v)
    csq = np.cumsum(v * v)
    best, best_i = np.inf, None
    for i in range(max(1, n // 10), n - max(1, n // 10)):
        s1 = csq[i - 1] - csum[i - 1] ** 2 / i
        s2 = (csq[-1] - csq[i - 1]) - (csum[-1] - csum[i - 1]) ** 2 / (n - i)
        if s1 + s2 < best:
            best, best_i = s1 + s2, i
    if best_i is None:
        return 0.0
    left, right = v[:best_i], v[best_i:]
    pooled = np.sqrt(left.var() + right.var())
    if pooled == 0:
        return np.inf
    return float(np.sqrt(2) * abs(right.mean() - left.mean()) / pooled)


def check_unimodal(ds: PopulationDataset, threshold: float = 4.0):
    for k, cloud in enumerate(ds.clouds):
        for n in range(ds.n_vars):
            d = bimodality_score(cloud[:, n])
            if d > threshold:
                raise MultimodalCloudError(
                    f"cloud {k} (t={ds.times[k]:g}) of {ds.variable_names[n]} looks multimodal "
                    f"(separation {d:.1f}); single-curve collocation does not apply")


@dataclass(frozen=True)
class CollocatedTrajectory:
    basis: BsplineBasis
    coef: np.ndarray            # (fit_basis_size, N)
    lam: np.ndarray             # (N,)
    times: np.ndarray           # original measurement times
    interval_var: np.ndarray    # (K - 1, N) average cloud variance per interval
    variable_names: tuple[str, ...] = ()

    def evaluate(self, t, deriv: int = 0) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=float), self.times[0], self.times[-1])
        return self.basis.evaluate(t, deriv) @ self.coef

    def variance_at(self, t) -> np.ndarray:
        """Interval-average variance for each time (held constant per interval)."""
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        return self.interval_var[j]

    def export_csv(self, path, times=None):
        times = self.times if times is None else np.asarray(times, dtype=float)
        vals = self.evaluate(times)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", *self.variable_names])
            for t, row in zip(times, vals):
                w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])


def _fit_one(B, R, y, w, lam):
    BtW = B.T * w
    lhs = BtW @ B + lam * R
    rhs = BtW @ y
    for _ in range(4):
        try:
            c = linalg.solve(lhs, rhs, assume_a="sym")
            if np.all(np.isfinite(c)):
                return c, lam, lhs
        except (linalg.LinAlgError, ValueError):
            pass
        lam = 10 * lam if lam > 0 else 1e-8
        lhs = BtW @ B + lam * R
    raise CollocationError("penalized normal equations stayed singular")


def _gcv(B, R, y, w, lam):
    c, lam, lhs = _fit_one(B, R, y, w, lam)
    H_trace = np.trace(linalg.solve(lhs, (B.T * w) @ B, assume_a="sym"))
    n = len(y)
    rss = float(np.sum(w * (y - B @ c) ** 2))
    denom = (1 - H_trace / n) ** 2
    return rss / n / denom if denom > 1e-12 else np.inf


def collocate(ds: PopulationDataset, lam: float | None = None,
              fit_basis_size: int | None = None, check_modes: bool = True
              ) -> CollocatedTrajectory:
    """Smoothing-spline fit of the cloud means of every variable.

    ``lam=None`` selects the penalty per variable by generalized
    cross-validation over a log grid.  With ``check_modes`` a cloud that
    looks bimodal raises ``MultimodalCloudError``, since one curve cannot
    stand in for it when re-simulating.
    """
    K = ds.n_times
    if K < 3:
        raise DataError("collocation needs at least three clouds")
    if check_modes:
        check_unimodal(ds)
    if lam is not None and lam < 0:
        raise ValueError("lambda must be nonnegative")
    size = fit_basis_size or min(K + 2, 40)
    basis = BsplineBasis(float(ds.times[0]), float(ds.times[-1]), max(size, 4), order=4)
    B = basis.evaluate(ds.times)
    R = roughness_matrix(basis)
    means = ds.means()
    var = ds.variances()
    sizes = np.array(ds.sizes, dtype=float)
    coef = np.zeros((basis.m1, ds.n_vars))
    lams = np.zeros(ds.n_vars)
    for n in range(ds.n_vars):
        w = sizes / np.maximum(var[:, n], VAR_FLOOR * max(var[:, n].max(), 1.0))
        w = w / w.mean()
        if lam is None:
            scores = [_gcv(B, R, means[:, n], w, l) for l in LAMBDA_GRID]
            chosen = float(LAMBDA_GRID[int(np.argmin(scores))])
        else:
            chosen = float(lam)
        coef[:, n], lams[n], _ = _fit_one(B, R, means[:, n], w, chosen)
    interval_var = 0.5 * (var[:-1] + var[1:])
    return CollocatedTrajectory(basis, coef, lams, ds.times.copy(), interval_var,
                                ds.variable_names)


def resimulate(colloc: CollocatedTrajectory, dt_new: float, n_samples: int, seed: int,
               intervention_id: str = "resim") -> PopulationDataset:
    """Gaussian clouds ``N(X_col(t), sigma_bar^2)`` every ``dt_new`` time units."""
    if dt_new <= 0:
        raise ValueError("dt_new must be positive")
    if n_samples < 1:
        raise ValueError("need at least one sample per cloud")
    t0, t1 = colloc.times[0], colloc.times[-1]
    n_steps = int(np.floor((t1 - t0) / dt_new + 1e-9))
    times = t0 + dt_new * np.arange(n_steps + 1)
    if t1 - times[-1] > 1e-9 * max(1.0, abs(t1)):
        times = np.append(times, t1)
    centre = colloc.evaluate(times)
    sd = np.sqrt(colloc.variance_at(times))
    N = centre.shape[1]
    clouds = []
    for i in range(len(times)):
        cols = []
        for n in range(N):
            rng = np.random.default_rng([seed, n, i])
            cols.append(centre[i, n] + sd[i, n] * rng.standard_normal(n_samples))
        clouds.append(np.column_stack(cols))
    return PopulationDataset(times, tuple(clouds), intervention_id, colloc.variable_names)


def keep_clouds(ds: PopulationDataset, fraction: float) -> PopulationDataset:
    """Evenly spaced subset of roughly ``fraction`` of the clouds, ends included."""
    if not 0 < fraction <= 1:
        raise ValueError("keep fraction must lie in (0, 1]")
    n_keep = int(round(fraction * ds.n_times))
    if n_keep < 2:
        raise DataError(f"keeping {fraction:g} of {ds.n_times} clouds leaves fewer than 2")
    idx = np.unique(np.round(np.linspace(0, ds.n_times - 1, n_keep)).astype(int))
    return ds.subset_times(idx)

"""Greedy sparse regression on the weak-form systems.

Augmented columns are ordered ``[drift atoms | inhibition signals | diffusion]``
so the unknown vector reads ``(a_n, b^(1..R), sigma_n**2 / 2)``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .basis import TestGrid
from .datamodel import (ExperimentConfig, Inhibition, InterventionSet, OmpSettings,
                        split_dataset)
from .dictionary import Dictionary
from .weakform import WeakSystem, assemble_weak_system, stack_with_inhibitions

log = logging.getLogger(__name__)

ZERO_COLUMN_RTOL = 1e-12


@dataclass
class OmpConfig:
    k_max: int | None = None
    theta: float = 0.01
    prior_support: tuple[int, ...] = ()
    tau: float = 0.01
    nonneg_diffusion: bool = True

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if self.k_max is not None and self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")


@dataclass
class OmpResult:
    coef: np.ndarray
    support: list[int]
    residual_history: list[float]
    relative_residual: float
    warnings: list[str] = field(default_factory=list)


def augment(system: WeakSystem) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side and ``[Psi | signals | W]``."""
    return system.Z, np.column_stack([system.Psi, system.signals, system.W])


def _lstsq(A, b):
    """Least squares with numerical rank; returns (x, rank)."""
    if A.shape[1] == 0:
        return np.zeros(0), 0
    x, _, rank, _ = linalg.lstsq(A, b, lapack_driver="gelsd")
    return x, int(rank)


def _refit(Psi, Z, support):
    coef = np.zeros(Psi.shape[1])
    if support:
        x, _ = _lstsq(Psi[:, support], Z)
        coef[support] = x
    return coef


def omp_solve(Z, Psi_aug, config: OmpConfig, diffusion_col: int | None = None,
              protected: Sequence[int] = ()) -> OmpResult:
    """Orthogonal matching pursuit with prior seeding and a hard-threshold pass.

    ``diffusion_col`` marks the column whose coefficient is ``sigma**2 / 2``;
    it and any ``protected`` columns are exempt from the hard threshold.
    """
    Z = np.asarray(Z, dtype=float)
    Psi = np.asarray(Psi_aug, dtype=float)
    if not np.all(np.isfinite(Z)):
        raise ValueError("right-hand side has non-finite entries")
    n_cols = Psi.shape[1]
    k_max = n_cols if config.k_max is None else min(config.k_max, n_cols)
    norms = np.linalg.norm(Psi, axis=0)
    usable = norms > ZERO_COLUMN_RTOL * max(norms.max(initial=0.0), 1e-300)
    safe = np.where(usable, norms, 1.0)
    A = Psi / safe
    notes: list[str] = []

    z_norm = np.linalg.norm(Z)
    support = [int(j) for j in config.prior_support if usable[j]]
    x, rank = _lstsq(A[:, support], Z)
    if rank < len(support):
        notes.append("prior support is rank deficient")
    r = Z - A[:, support] @ x if support else Z.copy()
    history = [float(np.linalg.norm(r))]

    def rel(res_norm):
        return 0.0 if z_norm == 0 else res_norm / z_norm

    while rel(history[-1]) > config.theta and len(support) < k_max:
        corr = np.abs(A.T @ r)
        corr[~usable] = -1.0
        corr[support] = -1.0
        j = int(np.argmax(corr))  # first maximum: lowest index wins ties
        if corr[j] <= 1e-14 * max(z_norm, 1e-300):
            break
        trial = support + [j]
        x_t, rank = _lstsq(A[:, trial], Z)
        if rank < len(trial):
            msg = f"active set rank deficient after adding column {j}; stopping"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
            break
        support, x = trial, x_t
        r = Z - A[:, support] @ x
        history.append(float(np.linalg.norm(r)))

    coef = np.zeros(n_cols)
    coef[support] = x / safe[support]

    exempt = set(protected) | set(config.prior_support)
    if diffusion_col is not None:
        exempt.add(diffusion_col)
    survivors = [j for j in support if j in exempt or abs(coef[j]) > config.tau]
    if survivors != support:
        support = survivors
        coef = _refit(Psi, Z, support)
    if config.nonneg_diffusion and diffusion_col is not None and diffusion_col in support \
            and coef[diffusion_col] < 0:
        support = [j for j in support if j != diffusion_col]
        coef = _refit(Psi, Z, support)

    final = float(np.linalg.norm(Z - Psi @ coef))
    return OmpResult(coef, sorted(support), history, rel(final), notes)


def bic_score(k: int, rss: float, rows: int) -> float:
    """``rows * ln(rss / rows) + k * ln(rows)``."""
    if rss < 0:
        raise ValueError("rss must be nonnegative")
    if rows <= k:
        raise ValueError("need more rows than selected features")
    if rss == 0:
        warnings.warn("perfect fit; flooring rss at 1e-300", RuntimeWarning, stacklevel=2)
        rss = 1e-300
    return rows * math.log(rss / rows) + k * math.log(rows)


@dataclass
class TuneCurve:
    theta: list[float]
    bic: list[float]
    support_size: list[int]


def autotune(train: WeakSystem, test: WeakSystem, theta_grid: Sequence[float],
             k_max: int | None = None, base: OmpConfig | None = None,
             diffusion_col: int | None = None):
    """Pick the stopping threshold whose training fit scores the lowest
    test-set BIC.  Returns ``(theta, result, curve)``."""
    if not len(theta_grid):
        raise ValueError("theta grid is empty")
    base = base or OmpConfig()
    grid = sorted(float(t) for t in theta_grid)
    Z_tr, P_tr = augment(train)
    Z_te, P_te = augment(test)
    curve = TuneCurve([], [], [])
    best = None
    for th in grid:
        cfg = OmpConfig(k_max if k_max is not None else base.k_max, th,
                        base.prior_support, base.tau, base.nonneg_diffusion)
        res = omp_solve(Z_tr, P_tr, cfg, diffusion_col)
        rss = float(np.sum((Z_te - P_te @ res.coef) ** 2))
        score = bic_score(len(res.support), rss, len(Z_te))
        curve.theta.append(th)
        curve.bic.append(score)
        curve.support_size.append(len(res.support))
        if best is None or score < best[0]:
            best = (score, th, res)
    _, th, res = best
    if not res.support:
        warnings.warn("every threshold produced an empty model", RuntimeWarning, stacklevel=2)
    return th, res, curve


@dataclass
class SparseModel:
    """Inferred drift matrix, diffusion estimates and per-variable diagnostics."""

    A_hat: np.ndarray
    sigma_hat: np.ndarray
    supports: list[list[int]]
    residuals: list[float]
    dictionary: Dictionary
    forced: list[int] = field(default_factory=list)
    inhibition_coef: dict[int, dict[int, float]] = field(default_factory=dict)
    theta: list[float | None] = field(default_factory=list)
    failures: dict[int, str] = field(default_factory=dict)
    curves: dict[int, TuneCurve] = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def support_pairs(self) -> set[tuple[int, int]]:
        return {(n, q) for n, s in enumerate(self.supports) for q in s}

    def to_json(self) -> dict:
        return {
            "variables": list(self.dictionary.variable_names),
            "dictionary": self.dictionary.to_json(),
            "atoms": self.dictionary.labels(),
            "A_hat": self.A_hat.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
            "supports": self.supports,
            "residuals": self.residuals,
            "forced": self.forced,
            "inhibition_coef": {str(n): {str(r): v for r, v in d.items()}
                                for n, d in self.inhibition_coef.items()},
            "theta": self.theta,
            "failures": {str(k): v for k, v in self.failures.items()},
            "column_order": "drift atoms | inhibition signals | diffusion",
            "config": self.manifest,
        }

    @classmethod
    def from_json(cls, d: dict) -> "SparseModel":
        return cls(np.array(d["A_hat"], dtype=float), np.array(d["sigma_hat"], dtype=float),
                   [list(s) for s in d["supports"]], list(d["residuals"]),
                   Dictionary.from_json(d["dictionary"]), list(d.get("forced", [])),
                   {int(n): {int(r): v for r, v in m.items()}
                    for n, m in d.get("inhibition_coef", {}).items()},
                   list(d.get("theta", [])),
                   {int(k): v for k, v in d.get("failures", {}).items()},
                   manifest=d.get("config", {}))


def omp_config_from_settings(s: OmpSettings, theta: float, n_atoms: int,
                             diffusion_col: int) -> OmpConfig:
    prior = list(s.prior_support)
    if s.prior_diffusion:
        prior.append(diffusion_col)
    return OmpConfig(s.k_max, theta, tuple(prior), s.tau, s.nonneg_diffusion)


def _variable_system(iset: InterventionSet, dictionary, grid, n):
    systems = [assemble_weak_system(ds, dictionary, grid, n, kind, intervention=r)
               for r, (ds, kind) in enumerate(iset)]
    return stack_with_inhibitions(systems, iset.kinds, iset.n_vars)


def infer_all(iset: InterventionSet, dictionary: Dictionary, grid: TestGrid,
              config: ExperimentConfig) -> SparseModel:
    """Infer every non-forced variable's drift row and diffusion coefficient.

    With more than one threshold in the grid, each cloud is split into
    train/test/validation parts and the threshold is chosen by test-set BIC;
    otherwise OMP runs once on all data.
    """
    N, Q = iset.n_vars, dictionary.n_atoms
    s = config.omp
    tune = len(s.theta_grid) > 1
    if tune:
        parts = [split_dataset(ds, config.split, [config.seed, r]) for r, ds in enumerate(iset.datasets)]
        train = InterventionSet(tuple(p[0] for p in parts), iset.kinds)
        test = InterventionSet(tuple(p[1] for p in parts), iset.kinds)

    A_hat = np.zeros((N, Q))
    sigma_hat = np.zeros(N)
    supports: list[list[int]] = [[] for _ in range(N)]
    residuals = [float("nan")] * N
    thetas: list[float | None] = [None] * N
    inhib: dict[int, dict[int, float]] = {}
    failures: dict[int, str] = {}
    curves: dict[int, TuneCurve] = {}
    for n in range(N):
        if n in config.forced:
            residuals[n] = 0.0
            continue
        try:
            if tune:
                sys_tr, colmap = _variable_system(train, dictionary, grid, n)
                sys_te, _ = _variable_system(test, dictionary, grid, n)
                diff_col = Q + sys_tr.signals.shape[1]
                cfg = omp_config_from_settings(s, s.theta_grid[0], Q, diff_col)
                th, res, curve = autotune(sys_tr, sys_te, s.theta_grid, s.k_max, cfg, diff_col)
                curves[n] = curve
            else:
                sys_all, colmap = _variable_system(iset, dictionary, grid, n)
                diff_col = Q + sys_all.signals.shape[1]
                th = s.theta_grid[0]
                cfg = omp_config_from_settings(s, th, Q, diff_col)
                Z, P = augment(sys_all)
                res = omp_solve(Z, P, cfg, diff_col)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("inference failed for variable %d: %s", n, exc)
            failures[n] = str(exc)
            continue
        coef = res.coef
        A_hat[n] = coef[:Q]
        sigma_hat[n] = math.sqrt(max(0.0, 2.0 * coef[diff_col]))
        supports[n] = [q for q in res.support if q < Q]
        residuals[n] = res.relative_residual
        thetas[n] = th
        if colmap:
            inhib[n] = {r: float(coef[Q + j]) for r, j in colmap.items()}
    return SparseModel(A_hat, sigma_hat, supports, residuals, dictionary, sorted(config.forced),
                       inhib, thetas, failures, curves,
                       manifest={"config": config.to_dict(), "grid": grid.manifest(),
                                 "dictionary": dictionary.to_json()})

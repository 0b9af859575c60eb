"""Accuracy metrics for inferred models."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .weakform import time_integral


def relative_error(A_hat, A_true) -> float:
    """Frobenius distance of the drift matrices relative to the true one."""
    A_hat = np.asarray(A_hat, dtype=float)
    A_true = np.asarray(A_true, dtype=float)
    if A_hat.shape != A_true.shape:
        raise ValueError(f"shape mismatch {A_hat.shape} vs {A_true.shape}")
    denom = np.linalg.norm(A_true)
    if denom == 0:
        raise ValueError("relative error undefined for a zero true matrix")
    return float(np.linalg.norm(A_hat - A_true) / denom)


def precision_recall(support_hat: Iterable, support_true: Iterable) -> tuple[float, float]:
    """Support precision and recall; an empty side counts as perfectly
    precise (no claims) or perfectly recalled (nothing to find)."""
    hat, true = set(support_hat), set(support_true)
    tp = len(hat & true)
    precision = tp / len(hat) if hat else 1.0
    recall = tp / len(true) if true else 1.0
    return precision, recall


def trajectory_l2(x_ref, x_gen, times) -> np.ndarray:
    """Per-variable time-averaged L2 gap ``sqrt(int (ref - gen)^2 dt / (t_K - t_1))``.

    A constant offset ``c`` gives exactly ``c``.
    """
    x_ref = np.asarray(x_ref, dtype=float)
    x_gen = np.asarray(x_gen, dtype=float)
    times = np.asarray(times, dtype=float)
    if x_ref.ndim == 1 and x_gen.ndim == 1:
        x_ref, x_gen = x_ref[:, None], x_gen[:, None]
    if x_ref.shape != x_gen.shape or x_ref.shape[0] != len(times):
        raise ValueError("trajectories must share one time grid")
    span = times[-1] - times[0]
    return np.sqrt(time_integral((x_ref - x_gen) ** 2, times) / span)


@dataclass
class EvaluationReport:
    relative_error: float | None = None
    precision: float | None = None
    recall: float | None = None
    sigma_abs_error: list[float] | None = None
    trajectory_l2: list[float] | None = None
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path):
        path = Path(path)
        if path.suffix == ".csv":
            row = {k: v for k, v in self.to_json().items() if k != "metadata"}
            flat = {}
            for k, v in row.items():
                if isinstance(v, list):
                    for i, x in enumerate(v):
                        flat[f"{k}_{i}"] = x
                else:
                    flat[k] = v
            with open(path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(flat))
                w.writeheader()
                w.writerow(flat)
        else:
            path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

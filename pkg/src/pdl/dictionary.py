"""Polynomial dictionaries of candidate drift terms."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Dictionary:
    """Ordered monomial atoms; atom ``q`` is ``prod_n x_n ** exponents[q, n]``."""

    exponents: np.ndarray
    variable_names: tuple[str, ...] = ()

    def __post_init__(self):
        e = np.atleast_2d(np.asarray(self.exponents, dtype=int))
        if e.size and (e < 0).any():
            raise ValueError("exponents must be nonnegative")
        if len({tuple(r) for r in e}) != len(e):
            raise ValueError("dictionary atoms must be distinct")
        e.setflags(write=False)
        object.__setattr__(self, "exponents", e)
        names = tuple(self.variable_names) or tuple(f"x{i + 1}" for i in range(e.shape[1]))
        object.__setattr__(self, "variable_names", names)

    @classmethod
    def polynomial(cls, n_vars: int, degree: int, constant: bool = True,
                   cross_terms: bool = True, variable_names: Sequence[str] = ()):
        rows = []
        if constant:
            rows.append([0] * n_vars)
        for d in range(1, degree + 1):
            for combo in combinations_with_replacement(range(n_vars), d):
                if not cross_terms and len(set(combo)) > 1:
                    continue
                e = [0] * n_vars
                for v in combo:
                    e[v] += 1
                rows.append(e)
        return cls(np.array(rows, dtype=int).reshape(-1, n_vars), tuple(variable_names))

    @property
    def n_atoms(self) -> int:
        return self.exponents.shape[0]

    @property
    def n_vars(self) -> int:
        return self.exponents.shape[1]

    def evaluate(self, x) -> np.ndarray:
        """Atom values at samples ``x`` of shape (P, N); returns (P, Q)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.ones((x.shape[0], self.n_atoms))
        for q, e in enumerate(self.exponents):
            for n in np.nonzero(e)[0]:
                out[:, q] *= x[:, n] ** e[n]
        return out

    def atom(self, q: int, x) -> np.ndarray:
        return self.evaluate(x)[:, q]

    def index_of(self, exponent) -> int:
        target = tuple(int(v) for v in exponent)
        for q, e in enumerate(self.exponents):
            if tuple(e) == target:
                return q
        raise KeyError(f"atom {target} not in dictionary")

    def labels(self) -> list[str]:
        out = []
        for e in self.exponents:
            parts = []
            for n, p in enumerate(e):
                if p == 1:
                    parts.append(self.variable_names[n])
                elif p > 1:
                    parts.append(f"{self.variable_names[n]}^{p}")
            out.append("*".join(parts) or "1")
        return out

    def to_json(self) -> dict:
        return {"variables": list(self.variable_names), "exponents": self.exponents.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Dictionary":
        return cls(np.array(d["exponents"], dtype=int), tuple(d.get("variables", ())))

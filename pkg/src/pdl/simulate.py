"""Ground-truth SDE benchmarks and forward simulation.

Population data are generated with one independent trajectory per recorded
sample: a sample measured at ``t_k`` comes from a path started afresh from
the initial distribution and integrated up to ``t_k``.  All ``P * K`` paths
are advanced together in one vectorized Euler-Maruyama sweep and each path is
read out once, at its own measurement time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .datamodel import InterventionSet, PopulationDataset, Activation, Inhibition
from .dictionary import Dictionary


class DivergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SdeModel:
    """``dX = A psi(X) dt + diag(sigma) dB``."""

    A: np.ndarray
    sigma: np.ndarray
    dictionary: Dictionary

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if A.shape != (self.dictionary.n_vars, self.dictionary.n_atoms):
            raise ValueError(f"A has shape {A.shape}, expected "
                             f"{(self.dictionary.n_vars, self.dictionary.n_atoms)}")
        if sigma.shape != (A.shape[0],):
            raise ValueError("one diffusion coefficient per variable is required")
        if (sigma < 0).any():
            raise ValueError("diffusion coefficients must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "sigma", sigma)
        used = np.nonzero(np.any(A != 0, axis=0))[0]
        object.__setattr__(self, "_used", used)
        object.__setattr__(self, "_sub", Dictionary(self.dictionary.exponents[used])
                           if len(used) else None)

    @property
    def n_vars(self) -> int:
        return self.A.shape[0]

    def drift(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self._sub is None:
            return np.zeros_like(x, dtype=float)
        return self._sub.evaluate(x) @ self.A[:, self._used].T

    def support(self) -> set[tuple[int, int]]:
        return {(int(n), int(q)) for n, q in zip(*np.nonzero(self.A))}

    def to_json(self) -> dict:
        return {"A": self.A.tolist(), "sigma": self.sigma.tolist(),
                "dictionary": self.dictionary.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "SdeModel":
        return cls(np.array(d["A"], dtype=float), np.array(d["sigma"], dtype=float),
                   Dictionary.from_json(d["dictionary"]))


@dataclass(frozen=True)
class InitialDistribution:
    """Isotropic (per-variable) Gaussian initial condition."""

    mu0: np.ndarray
    sigma0: float | np.ndarray = 0.0

    def __post_init__(self):
        mu0 = np.asarray(self.mu0, dtype=float).reshape(-1)
        s0 = np.broadcast_to(np.asarray(self.sigma0, dtype=float), mu0.shape).copy()
        if (s0 < 0).any():
            raise ValueError("sigma0 must be nonnegative")
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "sigma0", s0)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return self.mu0 + self.sigma0 * rng.standard_normal((size, len(self.mu0)))


@dataclass(frozen=True)
class SamplingPlan:
    times: np.ndarray
    h: float | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or len(times) < 1:
            raise ValueError("need at least one measurement time")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("measurement times must be strictly increasing")
        gaps = np.diff(times)
        h = self.h
        if h is None:
            h = (gaps.min() if len(gaps) else 1.0) / 50
        if h <= 0:
            raise ValueError("integrator step must be positive")
        if len(gaps) and h > gaps.min() * (1 + 1e-12):
            raise ValueError("integrator step exceeds the smallest measurement gap")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "h", float(h))

    @classmethod
    def uniform(cls, t_end: float, dt: float, h: float | None = None, t0: float = 0.0):
        n = int(round((t_end - t0) / dt))
        return cls(t0 + dt * np.arange(n + 1), h)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


def _substeps(t0: float, t1: float, h: float) -> tuple[int, float]:
    n = max(1, int(np.ceil((t1 - t0) / h - 1e-9)))
    return n, (t1 - t0) / n


def _check_finite(x: np.ndarray, t: float):
    ok = np.isfinite(x)
    if not ok.all():
        # 0 * inf in the drift product turns bystanders into NaN; blame an
        # infinite variable first
        blown = np.isinf(x).any(axis=0)
        bad = int(np.nonzero(blown if blown.any() else ~ok.all(axis=0))[0][0])
        raise DivergenceError(f"trajectory diverged in variable {bad} at t={t:g}")


def euler_maruyama_population(model: SdeModel, p0: InitialDistribution, plan: SamplingPlan,
                              n_samples: int, seed: int, intervention: int = 0,
                              inhibition: tuple[int, float] | None = None,
                              intervention_id: str | None = None,
                              variable_names: Sequence[str] = ()) -> PopulationDataset:
    """Population data: ``n_samples`` fresh-trajectory samples per measurement time.

    ``inhibition=(target, b)`` adds the input term ``b * x_target`` to the
    drift of ``x_target``.  Randomness comes from one stream derived from
    ``(seed, intervention)``.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample per time")
    rng = np.random.default_rng([seed, intervention])
    times = plan.times
    K, P, N = len(times), n_samples, model.n_vars
    x = p0.sample(P * K, rng)
    # group k (rows k*P:(k+1)*P) is read out at times[k]
    clouds: list[np.ndarray] = [None] * K  # type: ignore[list-item]
    clouds[0] = x[:P].copy()
    sig = model.sigma
    t = times[0]
    active = slice(P, P * K)
    for k in range(1, K):
        n_sub, h = _substeps(t, times[k], plan.h)
        xa = x[active]
        for step in range(n_sub):
            with np.errstate(over="ignore", invalid="ignore"):
                f = model.drift(xa)
                if inhibition is not None:
                    tgt, b = inhibition
                    f[:, tgt] += b * xa[:, tgt]
                xa = xa + f * h + sig * np.sqrt(h) * rng.standard_normal(xa.shape)
            _check_finite(xa, t + (step + 1) * h)
        x[active] = xa
        clouds[k] = x[k * P:(k + 1) * P].copy()
        active = slice((k + 1) * P, P * K)
        t = times[k]
    return PopulationDataset(times.copy(), tuple(clouds),
                             intervention_id if intervention_id is not None else str(intervention),
                             tuple(variable_names))


def rk4_trajectory(model: SdeModel, x0, times, h: float | None = None,
                   forcing: dict[int, Callable[[float], float]] | None = None) -> np.ndarray:
    """Deterministic path of ``dx = A psi(x) dt`` reported at ``times`` (K x N).

    ``forcing`` maps variable indices to prescribed functions of time; those
    variables follow the prescription instead of the model.
    """
    times = np.asarray(times, dtype=float)
    if forcing is None and np.any(model.sigma > 0):
        raise ValueError("rk4_trajectory needs a deterministic model (sigma = 0)")
    plan = SamplingPlan(times, h)
    forcing = forcing or {}
    free = np.array([n not in forcing for n in range(model.n_vars)])

    def apply_forcing(x, t):
        for n, fn in forcing.items():
            x[n] = fn(t)
        return x

    def rhs(x, t):
        d = model.drift(apply_forcing(x.copy(), t)[None, :])[0]
        return np.where(free, d, 0.0)

    x = apply_forcing(np.asarray(x0, dtype=float).copy(), times[0])
    out = np.empty((len(times), model.n_vars))
    out[0] = x
    t = times[0]
    for k in range(1, len(times)):
        n_sub, h_k = _substeps(t, times[k], plan.h)
        for _ in range(n_sub):
            with np.errstate(over="ignore", invalid="ignore"):
                k1 = rhs(x, t)
                k2 = rhs(x + 0.5 * h_k * k1, t + 0.5 * h_k)
                k3 = rhs(x + 0.5 * h_k * k2, t + 0.5 * h_k)
                k4 = rhs(x + h_k * k3, t + h_k)
                x = x + h_k / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h_k
            x = apply_forcing(x, t)
            _check_finite(x[None, :], t)
        t = times[k]
        out[k] = x
    return out


def draw_activation(pool: Sequence[InitialDistribution], seed) -> InitialDistribution:
    if not pool:
        raise ValueError("activation pool is empty")
    rng = np.random.default_rng(seed)
    return pool[int(rng.integers(len(pool)))]


def draw_activations(pool: Sequence[InitialDistribution], count: int, seed) -> list:
    """``count`` independent uniform draws (with replacement) from ``pool``."""
    return [draw_activation(pool, [seed, r]) for r in range(count)]


# ---------------------------------------------------------------- benchmarks

# rows of the initial-distribution pool for the quadruple well: (mu_x1, mu_x2, sigma0)
QUADWELL_POOL_TABLE = (
    (0.0, 0.0, 0.1),
    (-1.0, 1.0, 0.1),
    (0.1, -0.1, 0.2),
    (-0.1, 0.2, 0.2),
    (-0.2, 0.1, 0.1),
    (-0.2, -0.2, 0.15),
    (-0.5, 0.0, 0.1),
    (0.0, 0.5, 0.2),
    (0.2, 0.2, 0.15),
)


def quadwell_pool() -> list[InitialDistribution]:
    return [InitialDistribution(np.array([a, b]), s) for a, b, s in QUADWELL_POOL_TABLE]


def make_quadwell_model(sigma=(0.2, 0.1), degree: int = 3) -> SdeModel:
    """dx1 = -(x1^3 - x1) dt + s1 dW1,  dx2 = -(x2^3 - 0.25 x2) dt + s2 dW2."""
    d = Dictionary.polynomial(2, degree, constant=True, cross_terms=True,
                              variable_names=("x1", "x2"))
    A = np.zeros((2, d.n_atoms))
    A[0, d.index_of((1, 0))] = 1.0
    A[0, d.index_of((3, 0))] = -1.0
    A[1, d.index_of((0, 1))] = 0.25
    A[1, d.index_of((0, 3))] = -1.0
    return SdeModel(A, np.asarray(sigma, dtype=float), d)


@dataclass
class CascadeRates:
    """Artifact defaults; the benchmark leaves the rate values open."""

    k1: float = 0.12
    k2: float = 0.12
    k3: float = 0.12
    k4d: float = 0.12


def make_cascade_model(rates: CascadeRates | None = None, sigma: float | Sequence[float] = 0.01,
                       constant: bool = False) -> SdeModel:
    """Linear four-species conversion chain x1 -> x2 -> x3 -> x4 -> (degraded)."""
    r = rates or CascadeRates()
    d = Dictionary.polynomial(4, 1, constant=constant, variable_names=("x1", "x2", "x3", "x4"))
    A = np.zeros((4, d.n_atoms))
    col = {n: d.index_of(np.eye(4, dtype=int)[n]) for n in range(4)}
    A[0, col[0]] = -r.k1
    A[1, col[0]] = r.k1
    A[1, col[1]] = -r.k2
    A[2, col[1]] = r.k2
    A[2, col[2]] = -r.k3
    A[3, col[2]] = r.k3
    A[3, col[3]] = -r.k4d
    return SdeModel(A, np.broadcast_to(np.asarray(sigma, dtype=float), (4,)).copy(), d)


def simulate_interventions(model: SdeModel, initials: Sequence[InitialDistribution],
                           plan: SamplingPlan, n_samples: int, seed: int,
                           kinds: Sequence[Activation | Inhibition] | None = None,
                           inhibition_strength: float = -5.0) -> InterventionSet:
    kinds = list(kinds) if kinds is not None else [Activation()] * len(initials)
    datasets = []
    for r, (p0, kind) in enumerate(zip(initials, kinds)):
        inh = (kind.target, inhibition_strength) if isinstance(kind, Inhibition) else None
        datasets.append(euler_maruyama_population(
            model, p0, plan, n_samples, seed, intervention=r, inhibition=inh,
            variable_names=model.dictionary.variable_names))
    return InterventionSet(tuple(datasets), tuple(kinds))

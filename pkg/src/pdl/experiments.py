"""Benchmark pipelines shared by the command line, the scripts and the tests.

Each pipeline goes data -> weak systems -> sparse model -> report.  Benchmark
settings are plain dataclasses; every run is a pure function of
``(settings, seed)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .basis import TestGrid, build_test_grid
from .datamodel import (DictionaryConfig, ExperimentConfig, InterventionSet, OmpSettings,
                        PopulationDataset, variable_range)
from .dictionary import Dictionary
from .metrics import EvaluationReport, precision_recall, relative_error, trajectory_l2
from .resim import collocate, keep_clouds, resimulate
from .simulate import (CascadeRates, DivergenceError, InitialDistribution, SamplingPlan,
                       SdeModel, draw_activations, make_cascade_model, make_quadwell_model,
                       quadwell_pool, rk4_trajectory, simulate_interventions)
from .sparse import SparseModel, infer_all

log = logging.getLogger(__name__)

BIC_GRID = [round(0.05 * i, 2) for i in range(1, 20)]


def make_dictionary(cfg: DictionaryConfig, names) -> Dictionary:
    return Dictionary.polynomial(len(names), cfg.degree, cfg.constant, cfg.cross_terms,
                                 tuple(names))


def make_grid(iset: InterventionSet, cfg: ExperimentConfig) -> TestGrid:
    if cfg.domain is not None:
        if len(cfg.domain) != iset.n_vars:
            raise ValueError("one domain per variable is required")
        ranges = [tuple(r) for r in cfg.domain]
    else:
        ranges = [variable_range(iset, n, cfg.margin) for n in range(iset.n_vars)]
    t0 = min(float(ds.times[0]) for ds in iset.datasets)
    t1 = max(float(ds.times[-1]) for ds in iset.datasets)
    return build_test_grid(ranges, cfg.m1, cfg.m2, [t0, t1], cfg.spline_order)


def infer(iset: InterventionSet, cfg: ExperimentConfig) -> SparseModel:
    dictionary = make_dictionary(cfg.dictionary, iset.variable_names)
    cfg.validate(dictionary.n_atoms)
    return infer_all(iset, dictionary, make_grid(iset, cfg), cfg)


def align_truth(truth: SdeModel, dictionary: Dictionary) -> SdeModel:
    """Re-express ``truth`` over ``dictionary``; every true atom must be present."""
    if truth.n_vars != dictionary.n_vars:
        raise ValueError("inferred and true models have different variable counts")
    A = np.zeros((truth.n_vars, dictionary.n_atoms))
    for q, e in enumerate(truth.dictionary.exponents):
        col = truth.A[:, q]
        if not col.any():
            continue
        try:
            A[:, dictionary.index_of(e)] = col
        except (KeyError, ValueError):
            raise ValueError(f"true atom {truth.dictionary.labels()[q]} missing "
                             "from the inference dictionary") from None
    return SdeModel(A, truth.sigma, dictionary)


def score(model: SparseModel, truth: SdeModel, **metadata) -> EvaluationReport:
    """Compare an inferred model with the ground truth on the drift atoms."""
    truth = align_truth(truth, model.dictionary)
    active = [n for n in range(truth.n_vars) if n not in model.forced]
    prec, rec = precision_recall(
        {(n, q) for n, q in model.support_pairs() if n in active},
        {(n, q) for n, q in truth.support() if n in active})
    return EvaluationReport(
        relative_error=relative_error(model.A_hat, truth.A), precision=prec, recall=rec,
        sigma_abs_error=np.abs(model.sigma_hat - truth.sigma).tolist(), metadata=metadata)


def generated_trajectory(model: SparseModel, ds: PopulationDataset, colloc=None):
    """Deterministic path of the inferred drift started at the collocated
    initial state; forced variables follow their collocated curves.

    Returns ``(x_ref, x_gen)`` on the dataset's time grid.
    """
    # only the mean curve is used here, so split clouds are acceptable
    colloc = colloc or collocate(ds, check_modes=False)
    times = ds.times
    x_ref = colloc.evaluate(times)
    det = SdeModel(model.A_hat, np.zeros(len(model.sigma_hat)), model.dictionary)
    forcing = {n: (lambda t, n=n: float(colloc.evaluate([t])[0, n])) for n in model.forced}
    x_gen = rk4_trajectory(det, x_ref[0], times, h=float(np.diff(times).min()) / 10,
                           forcing=forcing)
    return x_ref, x_gen


def trajectory_fit(model: SparseModel, ds: PopulationDataset, colloc=None) -> np.ndarray:
    """Per-variable L2 gap between collocated means and the generated path;
    ``inf`` if the generated path diverges."""
    try:
        x_ref, x_gen = generated_trajectory(model, ds, colloc)
    except DivergenceError:
        return np.full(ds.n_vars, np.inf)
    with np.errstate(over="ignore", invalid="ignore"):
        out = trajectory_l2(x_ref, x_gen, ds.times)
    return np.where(np.isfinite(out), out, np.inf)


# ---------------------------------------------------------------- quadruple well

@dataclass
class QuadwellBenchmark:
    activations: int = 4
    nos: int = 400
    dt: float = 0.1
    t_end: float = 10.0
    sigma: tuple[float, float] = (0.2, 0.1)
    m1: int = 16
    m2: int = 31
    # held-out BIC over this grid; a single small theta overfits the noise floor
    theta_grid: list[float] = field(default_factory=lambda: BIC_GRID.copy())
    tau: float = 0.01
    domain: list[tuple[float, float]] | None = field(
        default_factory=lambda: [(-2.0, 2.0), (-2.0, 2.0)])

    def config(self, seed: int) -> ExperimentConfig:
        return ExperimentConfig(
            dictionary=DictionaryConfig(degree=3, constant=True, cross_terms=True),
            m1=self.m1, m2=self.m2,
            omp=OmpSettings(theta_grid=list(self.theta_grid), prior_diffusion=True, tau=self.tau),
            seed=seed, domain=self.domain)


def simulate_quadwell(b: QuadwellBenchmark, seed: int):
    model = make_quadwell_model(b.sigma)
    initials = draw_activations(quadwell_pool(), b.activations, seed)
    plan = SamplingPlan.uniform(b.t_end, b.dt)
    return simulate_interventions(model, initials, plan, b.nos, seed), model


def run_quadwell(b: QuadwellBenchmark, seed: int):
    iset, truth = simulate_quadwell(b, seed)
    model = infer(iset, b.config(seed))
    return model, score(model, truth, benchmark="quadwell", seed=seed, **_plain(b))


# ---------------------------------------------------------------- cascade

@dataclass
class CascadeBenchmark:
    rates: CascadeRates = field(default_factory=CascadeRates)
    sigma: float = 0.01
    mu0: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0)
    sigma0: float = 0.03
    nos: int = 400
    dt: float = 0.5
    t_end: float = 50.0
    m1: int = 25
    m2: int = 15
    theta_grid: list[float] = field(default_factory=lambda: [0.05])
    tau: float = 0.01
    margin: float = 0.1

    def config(self, seed: int, **overrides) -> ExperimentConfig:
        cfg = ExperimentConfig(
            dictionary=DictionaryConfig(degree=1, constant=False, cross_terms=False),
            m1=self.m1, m2=self.m2, margin=self.margin,
            omp=OmpSettings(theta_grid=list(self.theta_grid), prior_diffusion=True, tau=self.tau),
            seed=seed)
        return replace(cfg, **overrides)


def simulate_cascade(b: CascadeBenchmark, seed: int, dt: float | None = None):
    model = make_cascade_model(b.rates, b.sigma)
    plan = SamplingPlan.uniform(b.t_end, dt or b.dt)
    p0 = InitialDistribution(np.array(b.mu0), b.sigma0)
    return simulate_interventions(model, [p0], plan, b.nos, seed), model


def run_cascade(b: CascadeBenchmark, seed: int, data: InterventionSet | None = None,
                **overrides):
    truth = make_cascade_model(b.rates, b.sigma)
    iset = data if data is not None else simulate_cascade(b, seed)[0]
    model = infer(iset, b.config(seed, **overrides))
    return model, score(model, truth, benchmark="cascade", seed=seed,
                        **{**_plain(b), **overrides})


def resim_rescue(b: CascadeBenchmark, seed: int, keep: float = 0.15, dt_new: float = 0.5):
    """Relative errors of direct inference on a thinned cascade dataset and of
    inference after collocation and re-simulation at ``dt_new``."""
    iset, truth = simulate_cascade(b, seed)
    thin = keep_clouds(iset.datasets[0], keep)
    direct, _ = run_cascade(b, seed, data=InterventionSet((thin,)))
    colloc = collocate(thin)
    dense = resimulate(colloc, dt_new, b.nos, seed)
    rescued, _ = run_cascade(b, seed, data=InterventionSet((dense,)))
    return (relative_error(direct.A_hat, truth.A), relative_error(rescued.A_hat, truth.A),
            thin, dense)


def forced_comparison(b: CascadeBenchmark, seed: int, forced: int = 0):
    """Summed downstream trajectory gap for a full run and for a run with
    variable ``forced`` prescribed from its collocated curve."""
    iset, _ = simulate_cascade(b, seed)
    ds = iset.datasets[0]
    colloc = collocate(ds)
    full, _ = run_cascade(b, seed, data=iset)
    pinned, _ = run_cascade(b, seed, data=iset, forced=[forced])
    rest = [n for n in range(ds.n_vars) if n != forced]
    l2_full = trajectory_fit(full, ds, colloc)
    l2_forced = trajectory_fit(pinned, ds, colloc)
    return float(np.sum(l2_full[rest])), float(np.sum(l2_forced[rest])), l2_forced[forced]


def _plain(b) -> dict:
    out = {}
    for k, v in asdict(b).items():
        if isinstance(v, float) and not math.isfinite(v):
            v = str(v)
        out[k] = v
    return out

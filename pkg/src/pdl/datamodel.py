"""Population datasets, intervention sets and run configuration.

A population dataset is a sequence of *clouds*: at each measurement time we
hold a matrix of samples, one row per measured object.  Objects are destroyed
on measurement, so rows at different times are never paired.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

DEGENERATE_EPS = 1e-6


class DataError(ValueError):
    """Raised for malformed or structurally unusable input data."""


@dataclass(frozen=True)
class Activation:
    """Intervention that only changes the initial distribution."""

    def to_json(self):
        return {"kind": "activation"}


@dataclass(frozen=True)
class Inhibition:
    """Intervention clamping variable ``target`` through an input signal."""

    target: int

    def to_json(self):
        return {"kind": "inhibition", "target": self.target}


def kind_from_json(obj) -> Activation | Inhibition:
    if obj is None or obj == "activation":
        return Activation()
    if isinstance(obj, str):
        raise DataError(f"unknown intervention kind {obj!r}")
    kind = obj.get("kind", "activation")
    if kind == "activation":
        return Activation()
    if kind == "inhibition":
        return Inhibition(int(obj["target"]))
    raise DataError(f"unknown intervention kind {kind!r}")


@dataclass(frozen=True)
class PopulationDataset:
    times: np.ndarray
    clouds: tuple[np.ndarray, ...]
    intervention_id: str = "0"
    variable_names: tuple[str, ...] = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        clouds = tuple(np.atleast_2d(np.asarray(c, dtype=float)) for c in self.clouds)
        if times.ndim != 1 or len(times) != len(clouds):
            raise DataError("need exactly one cloud per measurement time")
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise DataError("measurement times must be strictly increasing")
        widths = {c.shape[1] for c in clouds}
        if len(widths) > 1:
            raise DataError(f"clouds disagree on the number of variables: {sorted(widths)}")
        n_vars = widths.pop() if widths else len(self.variable_names)
        if any(c.shape[0] < 1 for c in clouds):
            raise DataError("every cloud needs at least one sample")
        names = tuple(self.variable_names) or tuple(f"x{i + 1}" for i in range(n_vars))
        if len(names) != n_vars:
            raise DataError("variable_names length does not match cloud width")
        for c in clouds:
            c.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "clouds", clouds)
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "intervention_id", str(self.intervention_id))

    @property
    def n_vars(self) -> int:
        return len(self.variable_names)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def sizes(self) -> list[int]:
        return [c.shape[0] for c in self.clouds]

    def means(self) -> np.ndarray:
        """Per-time cloud means, shape (K, N)."""
        return np.array([c.mean(axis=0) for c in self.clouds])

    def variances(self) -> np.ndarray:
        """Per-time cloud variances (ddof=1 where possible), shape (K, N)."""
        return np.array([c.var(axis=0, ddof=1) if len(c) > 1 else np.zeros(c.shape[1])
                         for c in self.clouds])

    def subset_times(self, idx: Sequence[int]) -> "PopulationDataset":
        idx = list(idx)
        return PopulationDataset(self.times[idx], tuple(self.clouds[i] for i in idx),
                                 self.intervention_id, self.variable_names)

    def require_inference_ready(self):
        if self.n_times < 2:
            raise DataError("inference needs at least two measurement times")


@dataclass(frozen=True)
class InterventionSet:
    datasets: tuple[PopulationDataset, ...]
    kinds: tuple[Activation | Inhibition, ...] = ()

    def __post_init__(self):
        datasets = tuple(self.datasets)
        kinds = tuple(self.kinds) or tuple(Activation() for _ in datasets)
        if not datasets:
            raise DataError("an intervention set needs at least one dataset")
        if len(kinds) != len(datasets):
            raise DataError("one intervention kind per dataset is required")
        names = datasets[0].variable_names
        for ds in datasets[1:]:
            if ds.variable_names != names:
                raise DataError("all interventions must share variables and their order")
        for k in kinds:
            if isinstance(k, Inhibition) and not 0 <= k.target < len(names):
                raise DataError(f"inhibition target {k.target} out of range")
        object.__setattr__(self, "datasets", datasets)
        object.__setattr__(self, "kinds", kinds)

    @property
    def variable_names(self) -> tuple[str, ...]:
        return self.datasets[0].variable_names

    @property
    def n_vars(self) -> int:
        return self.datasets[0].n_vars

    def __len__(self):
        return len(self.datasets)

    def __iter__(self):
        return iter(zip(self.datasets, self.kinds))


@dataclass
class DictionaryConfig:
    degree: int = 1
    constant: bool = True
    cross_terms: bool = True


@dataclass
class OmpSettings:
    k_max: int | None = None
    theta_grid: list[float] = field(default_factory=lambda: [0.01])
    prior_support: list[int] = field(default_factory=list)
    prior_diffusion: bool = False
    tau: float = 0.01
    nonneg_diffusion: bool = True


@dataclass
class ExperimentConfig:
    """Everything that parameterizes one inference run."""

    dictionary: DictionaryConfig = field(default_factory=DictionaryConfig)
    m1: int = 16
    m2: int = 31
    spline_order: int = 3
    margin: float = 0.1
    omp: OmpSettings = field(default_factory=OmpSettings)
    seed: int = 0
    split: tuple[float, float, float] = (0.6, 0.3, 0.1)
    forced: list[int] = field(default_factory=list)
    # fixed per-variable (lo, hi) test-function domains; None uses padded data ranges
    domain: list[tuple[float, float]] | None = None

    def validate(self, n_atoms: int | None = None):
        if self.m1 < 4:
            raise ValueError("m1 must be at least 4")
        if self.m2 < 1:
            raise ValueError("m2 must be at least 1")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")
        if not math.isclose(sum(self.split), 1.0, abs_tol=1e-9):
            raise ValueError("split fractions must sum to 1")
        if not self.omp.theta_grid:
            raise ValueError("theta grid must be non-empty")
        for th in self.omp.theta_grid:
            if not 0 < th < 1:
                raise ValueError(f"theta {th} outside (0, 1)")
        if self.domain is not None:
            for lo, hi in self.domain:
                if not lo < hi:
                    raise ValueError(f"empty domain ({lo}, {hi})")
        if self.omp.k_max is not None:
            if self.omp.k_max < 1:
                raise ValueError("k_max must be >= 1")
            if n_atoms is not None and self.omp.k_max > n_atoms + 1:
                raise ValueError("k_max cannot exceed Q + 1")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        dict_cfg = DictionaryConfig(**d.pop("dictionary", {}))
        omp = OmpSettings(**d.pop("omp", {}))
        if "split" in d:
            d["split"] = tuple(d["split"])
        if d.get("domain") is not None:
            d["domain"] = [tuple(map(float, r)) for r in d["domain"]]
        return cls(dictionary=dict_cfg, omp=omp, **d)

    def to_dict(self) -> dict:
        from dataclasses import asdict
        out = asdict(self)
        out["split"] = list(self.split)
        if self.domain is not None:
            out["domain"] = [list(r) for r in self.domain]
        return out


# ---------------------------------------------------------------- ingestion

def _group_rows(rows, n_vars, names, source):
    by_id: dict[str, dict[float, list]] = {}
    for t, x, iid in rows:
        by_id.setdefault(iid, {}).setdefault(t, []).append(x)
    out = []
    for iid, groups in by_id.items():
        times = sorted(groups)
        if len(times) < 2:
            raise DataError(f"{source}: intervention {iid!r} has fewer than 2 distinct times")
        clouds = tuple(np.array(groups[t], dtype=float).reshape(-1, n_vars) for t in times)
        out.append(PopulationDataset(np.array(times), clouds, iid, names))
    return out


def load_datasets(path, format: str | None = None) -> InterventionSet:
    """Read every intervention stored in a CSV or JSON file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "json":
        return _load_json(path)
    if fmt == "csv":
        return _load_csv(path)
    raise DataError(f"unsupported dataset format {fmt!r}")


def load_dataset(path, format: str | None = None) -> PopulationDataset:
    """Read a single-intervention file.  Multi-intervention files must use
    :func:`load_datasets`."""
    iset = load_datasets(path, format)
    if len(iset) != 1:
        raise DataError(f"{path} holds {len(iset)} interventions; use load_datasets")
    return iset.datasets[0]


def _load_csv(path: Path) -> InterventionSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 4 or header[0] != "time" or header[1] != "sample_id" \
                or header[-1] != "intervention_id":
            raise DataError(f"{path}:1: header must be time,sample_id,<vars...>,intervention_id")
        names = tuple(header[2:-1])
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                t = float(row[0])
                x = [float(v) for v in row[2:-1]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            rows.append((t, x, row[-1].strip()))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return InterventionSet(tuple(_group_rows(rows, len(names), names, path)))


def _load_json(path: Path) -> InterventionSet:
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: {exc.msg}") from None
    try:
        names = tuple(doc["variables"])
        datasets, kinds = [], []
        for entry in doc["interventions"]:
            times = entry["times"]
            if len(times) < 2:
                raise DataError(f"{path}: intervention {entry.get('id')!r} has fewer than 2 times")
            clouds = tuple(np.array(c, dtype=float).reshape(-1, len(names)) for c in entry["clouds"])
            datasets.append(PopulationDataset(np.array(times, dtype=float), clouds,
                                              entry.get("id", str(len(datasets))), names))
            kinds.append(kind_from_json(entry.get("kind")))
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed dataset document ({exc})") from None
    return InterventionSet(tuple(datasets), tuple(kinds))


def save_datasets(iset: InterventionSet | PopulationDataset, path, format: str | None = None):
    if isinstance(iset, PopulationDataset):
        iset = InterventionSet((iset,))
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "json":
        doc = {
            "variables": list(iset.variable_names),
            "interventions": [
                {"id": ds.intervention_id, "kind": kind.to_json(),
                 "times": ds.times.tolist(), "clouds": [c.tolist() for c in ds.clouds]}
                for ds, kind in iset
            ],
        }
        path.write_text(json.dumps(doc))
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "sample_id", *iset.variable_names, "intervention_id"])
            for ds, _ in iset:
                sid = 0
                for t, cloud in zip(ds.times, ds.clouds):
                    for row in cloud:
                        w.writerow([repr(float(t)), sid, *(repr(float(v)) for v in row),
                                    ds.intervention_id])
                        sid += 1
    else:
        raise DataError(f"unsupported dataset format {fmt!r}")


# ---------------------------------------------------------------- statistics

def variable_range(ds: PopulationDataset | InterventionSet, n: int, margin: float = 0.0):
    """Sample range of variable ``n`` padded by ``margin`` times its span."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    datasets = ds.datasets if isinstance(ds, InterventionSet) else (ds,)
    lo = min(float(c[:, n].min()) for d in datasets for c in d.clouds)
    hi = max(float(c[:, n].max()) for d in datasets for c in d.clouds)
    span = hi - lo
    if span <= 0:
        log.warning("variable %d has zero span; widening by %g", n, DEGENERATE_EPS)
        return lo - DEGENERATE_EPS, hi + DEGENERATE_EPS
    return lo - margin * span, hi + margin * span


def split_dataset(ds: PopulationDataset, fractions: Sequence[float], seed: int):
    """Partition every cloud into disjoint train/test/validation parts."""
    fractions = np.asarray(fractions, dtype=float)
    if len(fractions) != 3:
        raise ValueError("need three split fractions")
    if np.any(fractions <= 0):
        raise ValueError("split fractions must be strictly positive")
    if not math.isclose(fractions.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("split fractions must sum to 1")
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for k, cloud in enumerate(ds.clouds):
        p = len(cloud)
        if p < 3:
            raise DataError(f"cloud {k} has {p} samples, fewer than the 3 split parts")
        counts = np.floor(fractions * p).astype(int)
        counts = np.maximum(counts, 1)
        # hand leftovers to the largest fraction, keep every part non-empty
        while counts.sum() > p:
            counts[np.argmax(counts)] -= 1
        counts[np.argmax(fractions)] += p - counts.sum()
        perm = rng.permutation(p)
        bounds = np.cumsum(counts)[:-1]
        for part, idx in zip(parts, np.split(perm, bounds)):
            part.append(cloud[np.sort(idx)])
    return tuple(PopulationDataset(ds.times, tuple(p), ds.intervention_id, ds.variable_names)
                 for p in parts)

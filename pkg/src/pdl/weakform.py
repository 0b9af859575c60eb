"""Weak-form projection of the Fokker-Planck equation onto test functions.

For variable ``n`` and test function ``phi(x_n) * f(t)`` integration by parts
gives one linear equation per test function

    Z = Psi @ a_n + (sigma_n**2 / 2) * W

with

    Z   = E_T[phi] f(T) - E_0[phi] f(0) - int E_t[phi] f'(t) dt
    Psi = int E_t[phi'(x_n) psi_q(x)] f(t) dt
    W   = int E_t[phi''(x_n)] f(t) dt

Expectations are sample means over clouds, time integrals use the trapezoid
rule on the measurement grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .basis import TestGrid
from .datamodel import Activation, Inhibition, PopulationDataset
from .dictionary import Dictionary


class AssemblyError(ArithmeticError):
    def __init__(self, msg, sample=None, entry=()):
        super().__init__(msg)
        self.sample = sample
        self.entry = tuple(entry)


def mc_expectation(cloud: np.ndarray, f: Callable[[np.ndarray], np.ndarray]):
    """Sample mean of ``f`` over the rows of ``cloud``.

    ``f`` maps the (P, N) cloud to an array whose first axis runs over
    samples; any trailing axes are preserved in the result.
    """
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    if cloud.shape[0] < 1:
        raise ValueError("empty cloud")
    vals = np.asarray(f(cloud), dtype=float)
    if vals.ndim == 0:
        vals = np.full(cloud.shape[0], float(vals))
    bad = ~np.isfinite(vals)
    if bad.any():
        p, *entry = (int(i) for i in np.argwhere(bad)[0])
        where = f", entry {tuple(entry)}" if entry else ""
        raise AssemblyError(f"non-finite integrand at sample {p}{where}", p, entry)
    out = vals.mean(axis=0)
    return float(out) if np.ndim(out) == 0 else out


def trapezoid_weights(times) -> np.ndarray:
    """Weights ``w`` with ``w @ g`` equal to the trapezoid rule for ``g(times)``."""
    t = np.asarray(times, dtype=float)
    if len(t) < 2:
        raise ValueError("the trapezoid rule needs at least two time points")
    dt = np.diff(t)
    w = np.zeros_like(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


def time_integral(values, times):
    """Trapezoid rule over (possibly irregular) ``times`` along axis 0."""
    values = np.asarray(values, dtype=float)
    w = trapezoid_weights(times)
    if values.shape[0] != len(w):
        raise ValueError("one value per time point is required")
    return np.tensordot(w, values, axes=1)


@dataclass(frozen=True)
class WeakSystem:
    """Projected linear system for one variable, possibly stacked over interventions.

    ``signals`` holds extra unknown-coefficient columns from inhibition
    inputs (zero rows outside their own intervention).
    """

    n: int
    Z: np.ndarray
    Psi: np.ndarray
    W: np.ndarray
    boundary: np.ndarray
    row_labels: tuple[tuple[int, int, int], ...]
    signals: np.ndarray = field(default=None)
    signal_labels: tuple[str, ...] = ()

    def __post_init__(self):
        rows = len(self.Z)
        sig = self.signals
        if sig is None:
            sig = np.zeros((rows, 0))
        object.__setattr__(self, "signals", np.asarray(sig, dtype=float).reshape(rows, -1))
        if self.Psi.shape[0] != rows or len(self.W) != rows or len(self.row_labels) != rows:
            raise ValueError("inconsistent weak-system row counts")

    @property
    def n_rows(self) -> int:
        return len(self.Z)

    @property
    def n_atoms(self) -> int:
        return self.Psi.shape[1]

    def to_json(self) -> dict:
        return {
            "n": self.n, "Z": self.Z.tolist(), "Psi": self.Psi.tolist(), "W": self.W.tolist(),
            "boundary": self.boundary.tolist(), "signals": self.signals.tolist(),
            "signal_labels": list(self.signal_labels),
            "row_labels": [list(r) for r in self.row_labels],
        }

    @classmethod
    def from_json(cls, d: dict) -> "WeakSystem":
        rows = len(d["Z"])
        return cls(int(d["n"]), np.array(d["Z"]), np.array(d["Psi"]).reshape(rows, -1),
                   np.array(d["W"]), np.array(d["boundary"]),
                   tuple(tuple(r) for r in d["row_labels"]),
                   np.array(d["signals"]).reshape(rows, -1), tuple(d["signal_labels"]))

    def save(self, path):
        path = Path(path)
        if path.suffix == ".npz":
            np.savez(path, n=self.n, Z=self.Z, Psi=self.Psi, W=self.W, boundary=self.boundary,
                     signals=self.signals, row_labels=np.array(self.row_labels, dtype=int),
                     signal_labels=np.array(self.signal_labels, dtype=str))
        else:
            path.write_text(json.dumps(self.to_json()))


def _check_finite(name, arr, grid: TestGrid):
    bad = np.argwhere(~np.isfinite(arr))
    if len(bad):
        idx = tuple(int(i) for i in bad[0])
        m1, m2 = grid.split_index(idx[0])
        extra = f", q={idx[1]}" if len(idx) > 1 else ""
        raise AssemblyError(f"non-finite {name} entry at (m1={m1}, m2={m2}{extra})")


def assemble_weak_system(ds: PopulationDataset, dictionary: Dictionary, grid: TestGrid,
                         n: int, kind: Activation | Inhibition | None = None,
                         intervention: int = 0) -> WeakSystem:
    """Project dataset ``ds`` onto ``grid`` for variable ``n``.

    With ``kind=Inhibition(n)`` the projection of the input signal
    ``u = x_n`` is stored as one signal column.
    """
    ds.require_inference_ready()
    spl = grid.splines[n]
    four = grid.fourier
    times = ds.times
    F = four.evaluate(times)
    dF = four.evaluate(times, 1)
    m1, m2 = grid.m1, grid.m2

    clamped = isinstance(kind, Inhibition) and kind.target == n

    def expect(k, name, cloud, f):
        try:
            return mc_expectation(cloud, f)
        except AssemblyError as exc:
            labels = ("m1", "q")[:len(exc.entry)]
            at = ", ".join(f"{a}={b}" for a, b in zip(labels, exc.entry))
            raise AssemblyError(f"non-finite {name} integrand at t={times[k]:g} "
                                f"(sample {exc.sample}, {at}, all m2)") from None

    e_phi, e_dphi_psi, e_ddphi, e_dphi_u = [], [], [], []
    with np.errstate(over="ignore", invalid="ignore"):
        for k, cloud in enumerate(ds.clouds):
            b1 = spl.evaluate(cloud[:, n], 1)
            e_phi.append(expect(k, "Z", cloud, lambda c: spl.evaluate(c[:, n], 0)))
            e_dphi_psi.append(expect(
                k, "Psi", cloud, lambda c: b1[:, :, None] * dictionary.evaluate(c)[:, None, :]))
            e_ddphi.append(expect(k, "W", cloud, lambda c: spl.evaluate(c[:, n], 2)))
            if clamped:
                e_dphi_u.append(expect(k, "signal", cloud, lambda c: b1 * c[:, [n]]))
    e_phi = np.array(e_phi)            # (K, M1)
    e_dphi_psi = np.array(e_dphi_psi)  # (K, M1, Q)
    e_ddphi = np.array(e_ddphi)        # (K, M1)

    boundary = (np.outer(e_phi[-1], F[-1]) - np.outer(e_phi[0], F[0])).reshape(-1)
    transport = time_integral(e_phi[:, :, None] * dF[:, None, :], times).reshape(-1)
    Z = boundary - transport
    Psi = time_integral(e_dphi_psi[:, :, None, :] * F[:, None, :, None], times)
    Psi = Psi.reshape(m1 * m2, -1)
    W = time_integral(e_ddphi[:, :, None] * F[:, None, :], times).reshape(-1)

    signals, sig_labels = None, ()
    if isinstance(kind, Inhibition):
        sig_labels = (f"b[{ds.intervention_id}]",)
        if clamped:
            e_dphi_u = np.array(e_dphi_u)
            signals = time_integral(e_dphi_u[:, :, None] * F[:, None, :], times).reshape(-1, 1)
        else:
            signals = np.zeros((m1 * m2, 1))

    for name, arr in (("Z", Z), ("Psi", Psi), ("W", W)):
        _check_finite(name, arr, grid)
    labels = tuple((intervention, a, b) for a in range(m1) for b in range(m2))
    return WeakSystem(n, Z, Psi, W, boundary, labels, signals, sig_labels)


def stack_activations(systems: Sequence[WeakSystem]) -> WeakSystem:
    """Vertically merge systems that share one unknown coefficient vector."""
    systems = list(systems)
    if not systems:
        raise ValueError("nothing to stack")
    n, q = systems[0].n, systems[0].n_atoms
    for s in systems[1:]:
        if s.n != n:
            raise ValueError("cannot stack systems of different variables")
        if s.n_atoms != q:
            raise ValueError(f"dictionary size mismatch: {s.n_atoms} != {q}")
    if len(systems) == 1:
        return systems[0]
    return WeakSystem(
        n,
        np.concatenate([s.Z for s in systems]),
        np.vstack([s.Psi for s in systems]),
        np.concatenate([s.W for s in systems]),
        np.concatenate([s.boundary for s in systems]),
        tuple(lab for s in systems for lab in s.row_labels),
    )


def stack_with_inhibitions(systems: Sequence[WeakSystem],
                           kinds: Sequence[Activation | Inhibition],
                           n_vars: int | None = None):
    """Stack systems, giving each inhibition its own block-diagonal signal column.

    Returns the stacked system and a map from intervention index to the
    column it occupies among the signal columns.
    """
    systems, kinds = list(systems), list(kinds)
    if len(systems) != len(kinds):
        raise ValueError("one intervention kind per system is required")
    for k in kinds:
        if isinstance(k, Inhibition):
            if k.target < 0 or (n_vars is not None and k.target >= n_vars):
                raise ValueError(f"inhibition target {k.target} out of range")
    base = stack_activations(systems)
    inhib = [r for r, k in enumerate(kinds) if isinstance(k, Inhibition)]
    if not inhib:
        return base, {}
    rows = [s.n_rows for s in systems]
    offsets = np.concatenate([[0], np.cumsum(rows)])
    V = np.zeros((offsets[-1], len(inhib)))
    labels = []
    for j, r in enumerate(inhib):
        sig = systems[r].signals
        if sig.shape[1] != 1:
            raise ValueError(f"system {r} carries no inhibition signal column")
        V[offsets[r]:offsets[r + 1], j] = sig[:, 0]
        labels.append(systems[r].signal_labels[0])
    stacked = WeakSystem(base.n, base.Z, base.Psi, base.W, base.boundary, base.row_labels,
                         V, tuple(labels))
    return stacked, {r: j for j, r in enumerate(inhib)}

"""Chain energies, boundary data and the u <-> v rescaling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import ChainRealization
from .potentials import evaluate, excess


class CompressiveBoundary(ValueError):
    """Boundary length does not exceed the relaxed chain length."""


class BoundaryViolation(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Rescaled displacement v^0..v^n with v^0 = 0 and v^n = gamma_n."""

    values: np.ndarray
    gamma_n: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise ValueError("displacement needs at least two nodes")
        v[0] = 0.0
        v[-1] = float(self.gamma_n)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gamma_n", float(self.gamma_n))

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @classmethod
    def linear(cls, n: int, gamma_n: float) -> "DisplacementField":
        return cls(gamma_n * np.arange(n + 1) / n, gamma_n)

    @classmethod
    def from_increments(cls, increments, gamma_n: float) -> "DisplacementField":
        v = np.concatenate([[0.0], np.cumsum(increments)])
        return cls(v, gamma_n)

    def csv_rows(self):
        yield ("i", "x", "v")
        n = self.n
        for i, val in enumerate(self.values):
            yield (i, i / n, float(val))


@dataclass(frozen=True, eq=False)
class DeformationField:
    values: np.ndarray

    def __post_init__(self):
        u = np.array(self.values, dtype=float)
        if u.ndim != 1 or len(u) < 2:
            raise ValueError("deformation needs at least two nodes")
        if u[0] != 0.0:
            raise ValueError("deformation must satisfy u^0 = 0")
        u.setflags(write=False)
        object.__setattr__(self, "values", u)

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def ell(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class BoundaryProgram:
    """ell_n = mean(delta) + gamma * sqrt(1/n), so that gamma_n = gamma."""

    gamma: float

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    def ell(self, realization: ChainRealization) -> float:
        return float(np.mean(realization.delta)) + self.gamma * math.sqrt(realization.lam)

    def gamma_n(self, realization: ChainRealization) -> float:
        return float(self.gamma)


def gamma_n(realization: ChainRealization, ell_n: float) -> float:
    lam = realization.lam
    rest = float(np.sum(realization.delta) * lam)
    if not ell_n > rest:
        raise CompressiveBoundary(f"ell_n = {ell_n!r} does not exceed relaxed length {rest!r}")
    return (ell_n - rest) / math.sqrt(lam)


def _check_size(realization, field):
    if field.n != realization.n:
        raise ValueError(f"field has n={field.n}, realization has n={realization.n}")


def rescale_deformation(realization: ChainRealization, u: DeformationField) -> DisplacementField:
    _check_size(realization, u)
    lam = realization.lam
    rest = np.concatenate([[0.0], np.cumsum(realization.delta) * lam])
    v = (u.values - rest) / math.sqrt(lam)
    return DisplacementField(v, v[-1])


def unscale_displacement(realization: ChainRealization, v: DisplacementField) -> DeformationField:
    _check_size(realization, v)
    lam = realization.lam
    rest = np.concatenate([[0.0], np.cumsum(realization.delta) * lam])
    return DeformationField(v.values * math.sqrt(lam) + rest)


def bond_strains(realization: ChainRealization, v: DisplacementField) -> np.ndarray:
    """z_i = (v^{i+1} - v^i)/sqrt(lam) + delta_i."""
    return np.diff(v.values) / math.sqrt(realization.lam) + realization.delta


def _per_species(realization, z, fn):
    out = np.empty_like(z)
    for k, spec in enumerate(realization.ensemble.support):
        mask = realization.bond_index == k
        if np.any(mask):
            out[mask] = fn(spec, z[mask])
    return out


def energy_deformation(realization: ChainRealization, u: DeformationField) -> float:
    _check_size(realization, u)
    lam = realization.lam
    z = np.diff(u.values) / lam
    if np.any(z <= 0):
        return math.inf
    return float(lam * np.sum(_per_species(realization, z, evaluate)))


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    strain: np.ndarray
    summand: np.ndarray

    def csv_rows(self):
        yield ("i", "strain", "summand")
        for i, (z, s) in enumerate(zip(self.strain, self.summand)):
            yield (i, float(z), float(s))


def energy_rescaled(realization: ChainRealization, v: DisplacementField,
                    gamma_n: float | None = None, breakdown: bool = False):
    """Sum over bonds of J_i(z_i) - J_i(delta_i); +inf if some z_i <= 0.

    With ``gamma_n`` given, the right boundary value of ``v`` must match it.
    """
    _check_size(realization, v)
    if v.values[0] != 0.0:
        raise BoundaryViolation("v^0 must be 0")
    if gamma_n is not None and v.values[-1] != gamma_n:
        raise BoundaryViolation(f"v^n = {v.values[-1]!r} differs from gamma_n = {gamma_n!r}")
    z = bond_strains(realization, v)
    terms = _per_species(realization, z, excess)
    if np.any(np.isfinite(terms) & (terms < -1e-12)):
        raise AssertionError("negative rescaled summand: minimiser data inconsistent")
    total = float(np.sum(terms)) if np.all(np.isfinite(terms)) else math.inf
    if breakdown:
        return EnergyBreakdown(total, z, terms)
    return total

"""Stationary random chains over a finite support of potentials."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .potentials import PotentialDescriptor, PotentialSpec, describe

LAWS = ("iid", "markov", "periodic")
_LATTICE_TOL = 1e-9


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator: one independent stream per seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class Ensemble:
    support: tuple[PotentialSpec, ...]
    law: str = "periodic"
    probabilities: tuple[float, ...] | None = None
    transition: tuple[tuple[float, ...], ...] | None = None
    stationary: tuple[float, ...] | None = None
    pattern: tuple[int, ...] | None = None
    label: str = ""
    descriptors: tuple[PotentialDescriptor, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sup = tuple(self.support)
        if not sup:
            raise ValueError("ensemble support is empty")
        object.__setattr__(self, "support", sup)
        m = len(sup)
        if self.law not in LAWS:
            raise ValueError(f"unknown law {self.law!r}")
        if self.law == "iid":
            if self.probabilities is None:
                raise ValueError("iid law needs probabilities")
            p = np.asarray(self.probabilities, dtype=float)
            _check_distribution(p, m, "probabilities")
            object.__setattr__(self, "probabilities", tuple(float(x) for x in p))
        elif self.law == "markov":
            if self.transition is None or self.stationary is None:
                raise ValueError("markov law needs transition and stationary")
            P = np.asarray(self.transition, dtype=float)
            pi = np.asarray(self.stationary, dtype=float)
            if P.shape != (m, m):
                raise ValueError(f"transition must be {m}x{m}")
            if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1) > 1e-12):
                raise ValueError("transition rows must be nonnegative and sum to 1")
            _check_distribution(pi, m, "stationary")
            if np.max(np.abs(pi @ P - pi)) > 1e-10:
                raise ValueError("stationary distribution is not invariant under transition")
            object.__setattr__(self, "transition", tuple(tuple(float(x) for x in r) for r in P))
            object.__setattr__(self, "stationary", tuple(float(x) for x in pi))
        else:
            pat = (0,) if self.pattern is None else tuple(int(k) for k in self.pattern)
            if not pat:
                raise ValueError("periodic pattern is empty")
            if min(pat) < 0 or max(pat) >= m:
                raise ValueError("pattern index outside support")
            object.__setattr__(self, "pattern", pat)
        object.__setattr__(self, "descriptors", tuple(describe(s) for s in sup))

    @property
    def marginal(self) -> np.ndarray:
        """Stationary one-site law of the support index."""
        m = len(self.support)
        if self.law == "iid":
            return np.asarray(self.probabilities)
        if self.law == "markov":
            return np.asarray(self.stationary)
        return np.bincount(np.asarray(self.pattern), minlength=m) / len(self.pattern)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([d.alpha for d in self.descriptors])

    @property
    def deltas(self) -> np.ndarray:
        return np.array([d.delta for d in self.descriptors])

    @property
    def depths(self) -> np.ndarray:
        """Well depths J(delta) (negative)."""
        return np.array([d.well_depth for d in self.descriptors])


def _check_distribution(p, m, name):
    if p.shape != (m,):
        raise ValueError(f"{name} must have length {m}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"{name} must be nonnegative and sum to 1 (sum={p.sum()!r})")


def homogeneous(spec: PotentialSpec) -> Ensemble:
    return Ensemble((spec,), "periodic", pattern=(0,), label=spec.label)


def iid(support, probabilities, label="") -> Ensemble:
    return Ensemble(tuple(support), "iid", probabilities=tuple(probabilities), label=label)


def markov(support, transition, stationary, label="") -> Ensemble:
    return Ensemble(tuple(support), "markov", transition=tuple(map(tuple, transition)),
                    stationary=tuple(stationary), label=label)


def periodic(support, pattern, label="") -> Ensemble:
    return Ensemble(tuple(support), "periodic", pattern=tuple(pattern), label=label)


@dataclass(frozen=True, eq=False)
class ChainRealization:
    ensemble: Ensemble
    n: int
    seed: int
    bond_index: np.ndarray
    delta: np.ndarray = field(init=False, repr=False)
    alpha: np.ndarray = field(init=False, repr=False)
    well_depth: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        idx = np.asarray(self.bond_index, dtype=np.int64)
        if idx.shape != (self.n,):
            raise ValueError("bond_index length must equal n")
        idx.setflags(write=False)
        object.__setattr__(self, "bond_index", idx)
        for name, src in (("delta", self.ensemble.deltas), ("alpha", self.ensemble.alphas),
                          ("well_depth", self.ensemble.depths)):
            arr = src[idx]
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def lam(self) -> float:
        return 1.0 / self.n

    def spec(self, i: int) -> PotentialSpec:
        return self.ensemble.support[int(self.bond_index[i])]

    def labels(self) -> list[str]:
        sup = self.ensemble.support
        return [sup[k].label or str(k) for k in self.bond_index]


def sample_realization(ensemble: Ensemble, n: int, seed: int = 0) -> ChainRealization:
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    n = int(n)
    m = len(ensemble.support)
    if ensemble.law == "periodic":
        pat = np.asarray(ensemble.pattern)
        idx = np.resize(pat, n)
    elif ensemble.law == "iid":
        rng = make_rng(seed)
        idx = rng.choice(m, size=n, p=np.asarray(ensemble.probabilities))
    else:
        rng = make_rng(seed)
        P = np.asarray(ensemble.transition)
        cum = np.cumsum(P, axis=1)
        cum[:, -1] = 1.0
        u = rng.random(n)
        idx = np.empty(n, dtype=np.int64)
        pi = np.cumsum(ensemble.stationary)
        pi[-1] = 1.0
        k = int(np.searchsorted(pi, u[0], side="right"))
        idx[0] = k
        for i in range(1, n):
            k = int(np.searchsorted(cum[k], u[i], side="right"))
            idx[i] = k
    return ChainRealization(ensemble, n, int(seed), idx)


def expectation_inverse_stiffness(ensemble: Ensemble) -> float:
    return float(np.dot(ensemble.marginal, 1.0 / ensemble.alphas))


def beta_infimum(ensemble: Ensemble) -> float:
    w = ensemble.marginal
    return float(np.min(-ensemble.depths[w > 0]))


# ---------------------------------------------------------------------------
# windows

def closed_window(n: int, a: float, b: float) -> tuple[int, int]:
    """Indices i with a <= i/n <= b, clipped to bonds 0..n-1, as [lo, hi)."""
    if a > b:
        raise ValueError("window must have a <= b")
    lo = max(math.ceil(a * n - _LATTICE_TOL), 0)
    hi = min(math.floor(b * n + _LATTICE_TOL), n - 1) + 1
    return lo, hi


def open_window(n: int, x: float, eps: float) -> tuple[int, int]:
    """Indices i with |i/n - x| < eps, clipped to bonds 0..n-1, as [lo, hi)."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    lo = max(math.floor(n * (x - eps) + _LATTICE_TOL) + 1, 0)
    hi = min(math.ceil(n * (x + eps) - _LATTICE_TOL) - 1, n - 1) + 1
    return lo, hi


def _quantity(realization, quantity, kappa=None):
    if quantity == "inverse_alpha":
        return 1.0 / realization.alpha
    if quantity == "ckappa":
        if kappa is None:
            raise ValueError("ckappa needs kappa")
        ens = realization.ensemble
        table = np.array([d.ckappa(kappa) for d in ens.descriptors])
        return table[realization.bond_index]
    raise ValueError(f"unknown quantity {quantity!r}")


def empirical_average(realization: ChainRealization, quantity="inverse_alpha",
                      window=(0.0, 1.0), kappa=None) -> float:
    lo, hi = closed_window(realization.n, *window)
    if hi <= lo:
        raise ValueError(f"window {window} holds no lattice point for n={realization.n}")
    q = _quantity(realization, quantity, kappa)
    return float(np.mean(q[lo:hi]))


def empirical_indicator_cdf(realization: ChainRealization, x: float, eps: float, k: float,
                            normalize: str = "count") -> float:
    """Fraction of bonds in the open window around x whose well depth -J(delta) is <= k.

    ``normalize="count"`` divides by the number of lattice bonds in the clipped
    window; ``"nominal"`` divides by 2*eps*n regardless of clipping.
    """
    lo, hi = open_window(realization.n, x, eps)
    if hi <= lo:
        raise ValueError(f"window around x={x} with eps={eps} holds no lattice point")
    hits = int(np.count_nonzero(-realization.well_depth[lo:hi] <= k))
    if normalize == "count":
        return hits / (hi - lo)
    if normalize == "nominal":
        return hits / (2.0 * eps * realization.n)
    raise ValueError(f"unknown normalization {normalize!r}")


def window_infimum_beta_n(realization: ChainRealization, x: float, eps: float) -> tuple[float, int]:
    """(beta_n, h): the weakest bond in the open window around x, smallest index on ties."""
    lo, hi = open_window(realization.n, x, eps)
    if hi <= lo:
        raise ValueError(f"window around x={x} with eps={eps} holds no lattice point")
    b = -realization.well_depth[lo:hi]
    j = int(np.argmin(b))
    return float(b[j]), lo + j


def realization_csv_rows(realization: ChainRealization):
    yield ("i", "bond_label")
    for i, lab in enumerate(realization.labels()):
        yield (i, lab)


def ergodic_rows(ensemble: Ensemble, n_list, seeds, x_list=(), eps=0.1, k=None):
    """Empirical averages of 1/alpha (and indicator fractions) per (n, seed).

    Columns: n, seed, full, left, middle, error, then one ``cdf@x`` per x.
    ``left`` and ``middle`` average over [0, 0.5] and [0.25, 0.75].
    """
    expected = expectation_inverse_stiffness(ensemble)
    header = ["n", "seed", "full", "left", "middle", "error"] + [f"cdf@{x!r}" for x in x_list]
    rows = [tuple(header)]
    for n in n_list:
        for s in seeds:
            r = sample_realization(ensemble, n, s)
            full = empirical_average(r, "inverse_alpha", (0.0, 1.0))
            row = [int(n), int(s), full, empirical_average(r, "inverse_alpha", (0.0, 0.5)),
                   empirical_average(r, "inverse_alpha", (0.25, 0.75)), full - expected]
            for x in x_list:
                row.append(empirical_indicator_cdf(r, x, eps, k))
            rows.append(tuple(row))
    return rows

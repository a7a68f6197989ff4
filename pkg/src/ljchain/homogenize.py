"""Continuum limit of the random chain and diagnostics tying it to the discrete minima."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .energy import BoundaryProgram, DisplacementField, energy_rescaled
from .ensemble import (Ensemble, ChainRealization, beta_infimum, expectation_inverse_stiffness,
                       sample_realization, window_infimum_beta_n)
from .minimize import minimize_global

CRITICAL_TOL = 1e-12
_FUZZ = 1e-9


@dataclass(frozen=True)
class LimitPrediction:
    alpha_bar: float
    beta: float
    gamma: float
    predicted_min: float
    gamma_star: float
    regime: str

    def to_dict(self) -> dict:
        return asdict(self)


def predict_limit(ensemble: Ensemble, gamma: float) -> LimitPrediction:
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    alpha_bar = 1.0 / expectation_inverse_stiffness(ensemble)
    beta = beta_infimum(ensemble)
    gamma_star = math.sqrt(beta / alpha_bar)
    if abs(gamma - gamma_star) <= CRITICAL_TOL:
        regime = "critical"
    elif gamma < gamma_star:
        regime = "elastic"
    else:
        regime = "fractured"
    return LimitPrediction(alpha_bar, beta, float(gamma), min(alpha_bar * gamma**2, beta), gamma_star, regime)


# ---------------------------------------------------------------------------
# limit profiles

@dataclass(frozen=True)
class LimitProfile:
    """Piecewise polynomial on 0 = x_0 < ... < x_m = 1 with traces v(0-) = 0, v(1+) = gamma.

    ``coeffs[k]`` holds ascending power coefficients in x for the piece
    [x_k, x_{k+1}].  Jumps are the differences between neighbouring traces,
    including those at the two ends.
    """

    breakpoints: tuple[float, ...]
    coeffs: tuple[tuple[float, ...], ...]
    gamma: float

    def __post_init__(self):
        bp = tuple(float(x) for x in self.breakpoints)
        if len(bp) < 2 or bp[0] != 0.0 or bp[-1] != 1.0 or any(b <= a for a, b in zip(bp, bp[1:])):
            raise ValueError("breakpoints must increase strictly from 0 to 1")
        if len(self.coeffs) != len(bp) - 1:
            raise ValueError("need one coefficient tuple per piece")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "coeffs", tuple(tuple(float(c) for c in cs) for cs in self.coeffs))
        object.__setattr__(self, "gamma", float(self.gamma))

    @classmethod
    def linear(cls, gamma):
        return cls((0.0, 1.0), ((0.0, gamma),), gamma)

    @classmethod
    def step(cls, gamma, at=0.5):
        if at <= 0:
            return cls((0.0, 1.0), ((gamma,),), gamma)
        if at >= 1:
            return cls((0.0, 1.0), ((0.0,),), gamma)
        return cls((0.0, at, 1.0), ((0.0,), (gamma,)), gamma)

    @classmethod
    def affine_with_jump(cls, gamma, slope, rho, at=0.0):
        """Slope ``slope`` everywhere except a flat stretch of width rho holding one jump at ``at``."""
        if not 0 < rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        a = flat_window_start(at, rho)
        height = gamma - slope * (1 - rho)
        if not height > 0:
            raise ValueError(f"jump height {height} must be positive")
        left = slope * a
        right = left + height
        segments = [
            (0.0, a, (0.0, slope)),
            (a, at, (left,)),
            (at, a + rho, (right,)),
            (a + rho, 1.0, (right - slope * (a + rho), slope)),
        ]
        bps, cfs = [0.0], []
        for lo, hi, cs in segments:
            if hi > lo:
                bps.append(hi)
                cfs.append(cs)
        return cls(tuple(bps), tuple(cfs), gamma)

    def _piece(self, x, side):
        bp = self.breakpoints
        if side == "right":
            k = int(np.searchsorted(bp, x, side="right")) - 1
        else:
            k = int(np.searchsorted(bp, x, side="left")) - 1
        return min(max(k, 0), len(self.coeffs) - 1)

    def value(self, x, side="right"):
        """Right (or left) limit of the profile at x in [0, 1]."""
        return float(P.polyval(x, self.coeffs[self._piece(x, side)]))

    def jumps(self, tol=1e-14) -> list[tuple[float, float]]:
        out = []
        traces = [(0.0, 0.0, self.value(0.0, "right"))]
        for x in self.breakpoints[1:-1]:
            traces.append((x, self.value(x, "left"), self.value(x, "right")))
        traces.append((1.0, self.value(1.0, "left"), self.gamma))
        for x, lft, rgt in traces:
            if abs(rgt - lft) > tol:
                out.append((x, rgt - lft))
        return out

    def dirichlet(self) -> float:
        """Exact integral of v'(x)^2 over (0, 1)."""
        total = 0.0
        for (a, b), cs in zip(zip(self.breakpoints, self.breakpoints[1:]), self.coeffs):
            d = P.polyder(cs) if len(cs) > 1 else np.zeros(1)
            anti = P.polyint(P.polymul(d, d))
            total += P.polyval(b, anti) - P.polyval(a, anti)
        return float(total)


def flat_window_start(at: float, rho: float) -> float:
    if not 0 <= at <= 1:
        raise ValueError("jump location must lie in [0, 1]")
    return min(max(at - rho / 2, 0.0), 1.0 - rho)


def limit_energy(profile: LimitProfile, prediction: LimitPrediction) -> float:
    """alpha_bar * int v'^2 + beta * (number of jumps); +inf outside the admissible class."""
    if profile.gamma != prediction.gamma:
        return math.inf
    jumps = profile.jumps()
    if any(h < 0 for _, h in jumps):
        return math.inf
    return prediction.alpha_bar * profile.dirichlet() + prediction.beta * len(jumps)


# ---------------------------------------------------------------------------
# recovery sequences

@dataclass(frozen=True, eq=False)
class RecoverySequence:
    v: DisplacementField
    target: LimitProfile
    mu: float
    eps: float
    rho: float
    h: int
    T: int
    blocks: tuple[tuple[int, int], ...]
    boundary_residual: float
    anchor_residual: float


def admissible_mu(rho: float, k: int) -> float:
    return (1.0 - rho) / k


def _floor(x):
    return math.floor(x + _FUZZ)


def build_recovery_sequence(realization: ChainRealization, target: LimitProfile, mu: float,
                            eps: float, rho: float, at: float = 0.0, slope: float | None = None,
                            gamma_n: float | None = None) -> RecoverySequence:
    """Discrete displacement approaching an affine-with-one-jump target.

    The jump is placed at the weakest bond of the eps-window around ``at``.
    Affine stretches are cut into blocks of length about ``mu`` and within a
    block the increments are proportional to 1/alpha, scaled so the block
    ends land on the target (shifted by gamma_n - gamma past the jump).
    """
    n = realization.n
    lam = realization.lam
    gamma = target.gamma
    gamma_n = gamma if gamma_n is None else float(gamma_n)
    if not (mu > 0 and eps > 0 and 0 < rho < 1):
        raise ValueError("mu, eps and rho must be positive with rho < 1")
    if eps >= rho:
        raise ValueError("eps must be smaller than rho")
    a = flat_window_start(at, rho)
    if slope is None:
        cs = target.coeffs[-1] if a + rho < 1 else target.coeffs[0]
        slope = cs[1] if len(cs) > 1 else 0.0
    T = _floor(rho * n)
    if at == 0.0:
        k = round((1 - rho) / mu)
        if k < 1 or abs(k * mu - (1 - rho)) > 1e-9:
            raise ValueError(f"mu={mu} is not of the form (1 - rho)/k")
        if not eps < T * lam:
            raise ValueError("eps must be smaller than T_n / n")
    left_end = _floor(a * n)            # last node of the left affine stretch
    right_start = _floor((a + rho) * n)  # first anchor of the right affine stretch
    _, h = window_infimum_beta_n(realization, at, eps)
    if not (left_end <= h and h + 1 <= right_start):
        raise ValueError(f"weakest bond {h} falls outside the flat stretch; shrink eps")

    height = gamma - slope * (1 - rho)
    left_affine = lambda x: slope * x
    right_affine = lambda x: slope * a + height + slope * (x - a - rho)
    inv_alpha = 1.0 / realization.alpha
    v = np.empty(n + 1)
    blocks = []

    def fill(lo, hi, affine, shift):
        length = hi - lo
        if length <= 0:
            return
        kk = max(1, round(length / mu))
        edges = [lo + length * j / kk for j in range(kk + 1)]
        for j in range(kk):
            anchor = _floor(edges[j] * n)
            i_max = _floor(edges[j + 1] * n)
            if i_max <= anchor:
                continue
            w = inv_alpha[anchor:i_max]
            hm = len(w) / np.sum(w)
            v[anchor] = affine(anchor * lam) + shift
            v[anchor + 1:i_max + 1] = v[anchor] + hm * lam * slope * np.cumsum(w)
            blocks.append((anchor + 1, i_max))

    shift = gamma_n - gamma
    fill(0.0, a, left_affine, 0.0)
    v[left_end:h + 1] = left_affine(left_end * lam)
    v[h + 1:right_start + 1] = right_affine(right_start * lam) + shift
    fill(a + rho, 1.0, right_affine, shift)
    if right_start >= n:
        v[h + 1:] = gamma_n

    field = DisplacementField(v, gamma_n)
    boundary_residual = abs(v[-1] - gamma_n)
    anchor_residual = 0.0
    for _, i_max in blocks:
        x = i_max * lam
        expect = (left_affine(x) if i_max <= left_end else right_affine(x) + shift)
        anchor_residual = max(anchor_residual, abs(v[i_max] - expect))
    return RecoverySequence(field, target, mu, eps, rho, h, T, tuple(blocks),
                            boundary_residual, anchor_residual)


def l1_distance(v: DisplacementField, target: LimitProfile) -> float:
    """Exact L1 distance between the piecewise affine interpolant of v and a profile of degree <= 1."""
    if any(len(c) > 2 for c in target.coeffs):
        raise ValueError("exact L1 distance needs pieces of degree <= 1")
    n = v.n
    nodes = np.arange(n + 1) / n
    xs = np.union1d(nodes, np.asarray(target.breakpoints))
    vi = np.interp(xs, nodes, v.values)
    a, b = xs[:-1], xs[1:]
    # target limits from inside each cell
    pieces = np.clip(np.searchsorted(target.breakpoints, a, side="right") - 1, 0, len(target.coeffs) - 1)
    c0 = np.array([c[0] for c in target.coeffs])[pieces]
    c1 = np.array([c[1] if len(c) > 1 else 0.0 for c in target.coeffs])[pieces]
    d0 = vi[:-1] - (c0 + c1 * a)
    d1 = vi[1:] - (c0 + c1 * b)
    w = b - a
    same = d0 * d1 >= 0
    s = np.abs(d0) + np.abs(d1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cross = np.where(s > 0, (d0**2 + d1**2) / (2 * s), 0.0)
    return float(np.sum(w * np.where(same, 0.5 * s, cross)))


# ---------------------------------------------------------------------------
# convergence studies

@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    seed: int
    gamma_n: float
    energy: float
    predicted: float
    gap: float
    regime: str
    broken_depth: float


COLUMNS = ("n", "seed", "gamma_n", "energy", "predicted", "gap", "regime", "broken_depth")


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple[ConvergenceRow, ...]
    prediction: LimitPrediction

    def csv_rows(self):
        yield COLUMNS
        for r in self.rows:
            yield tuple(getattr(r, c) for c in COLUMNS)

    def by_n(self) -> dict[int, list[ConvergenceRow]]:
        out: dict[int, list[ConvergenceRow]] = {}
        for r in self.rows:
            out.setdefault(r.n, []).append(r)
        return out

    def aggregate(self) -> list[dict]:
        out = []
        for n, rows in sorted(self.by_n().items()):
            e = np.array([r.energy for r in rows])
            g = np.array([r.gap for r in rows])
            out.append({"n": n, "count": len(rows), "energy_mean": float(e.mean()),
                        "energy_std": float(e.std(ddof=1)) if len(e) > 1 else 0.0,
                        "gap_mean": float(g.mean())})
        return out


def recovery_schedule(n_list, mu0=0.1, rho=0.2) -> list[float]:
    """mu = eps halved at every step of the sweep, snapped to (1 - rho)/k."""
    out = []
    for j, _ in enumerate(n_list):
        target = mu0 / 2**j
        k = max(1, round((1 - rho) / target))
        out.append(admissible_mu(rho, k))
    return out


class CellFailure(RuntimeError):
    """A single (n, seed) cell of a study raised; the message names the cell."""


def _cell(args):
    try:
        return _run_cell(*args)
    except Exception as exc:
        _, _, n, seed, mode, _, _ = args
        raise CellFailure(f"cell n={n} seed={seed} mode={mode}: {type(exc).__name__}: {exc}") from None


def _run_cell(ensemble, gamma, n, seed, mode, k_max, rec):
    real = sample_realization(ensemble, n, seed)
    g_n = BoundaryProgram(gamma).gamma_n(real)
    pred = predict_limit(ensemble, gamma)
    if mode == "global-min":
        res = minimize_global(real, g_n, k_max=k_max)
        depth = float(-real.well_depth[res.broken_set[0]]) if res.broken_set else math.nan
        predicted = pred.predicted_min
        energy = res.energy
        regime = res.status
    elif mode == "recovery":
        target = LimitProfile.affine_with_jump(gamma, rec["slope"], rec["rho"], rec["at"])
        seq = build_recovery_sequence(real, target, rec["mu"], rec["eps"], rec["rho"], at=rec["at"],
                                      slope=rec["slope"], gamma_n=g_n)
        energy = energy_rescaled(real, seq.v, gamma_n=g_n)
        predicted = limit_energy(target, pred)
        depth = float(-real.well_depth[seq.h])
        regime = "recovery"
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ConvergenceRow(int(n), int(seed), float(g_n), float(energy), float(predicted),
                          float(abs(energy - predicted)), regime, depth)


def _map(fn, cells, workers, executor):
    if executor is not None:
        return list(executor.map(fn, cells))
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def convergence_study(ensemble: Ensemble, gamma: float, n_list, seeds, mode: str = "global-min",
                      k_max: int = 2, workers: int = 1, slope: float = 0.3, rho: float = 0.2,
                      mu0: float = 0.1, at: float = 0.0, executor=None) -> ConvergenceTable:
    """Energies per (n, seed) cell next to the limit prediction.

    Cells run in a process pool when ``workers > 1``; an existing
    ``executor`` (anything with a ``map`` method) may be passed instead.
    Rows are sorted by (n, seed), so the table does not depend on scheduling.
    """
    n_list = [int(n) for n in n_list]
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be nonempty and strictly ascending")
    mus = recovery_schedule(n_list, mu0, rho)
    cells = []
    for n, mu in zip(n_list, mus):
        rec = {"slope": slope, "rho": rho, "mu": mu, "eps": mu, "at": at}
        for s in seeds:
            cells.append((ensemble, gamma, n, int(s), mode, k_max, rec))
    rows = _map(_cell, cells, workers, executor)
    rows.sort(key=lambda r: (r.n, r.seed))
    return ConvergenceTable(tuple(rows), predict_limit(ensemble, gamma))


@dataclass(frozen=True)
class RecoveryRow:
    n: int
    seed: int
    mu: float
    eps: float
    h: int
    beta_n: float
    energy: float
    target_energy: float
    excess: float
    l1: float
    boundary_residual: float
    anchor_residual: float


RECOVERY_COLUMNS = tuple(RecoveryRow.__dataclass_fields__)


def _recovery_cell(args):
    ensemble, gamma, n, seed, slope, rho, mu, at = args
    try:
        real = sample_realization(ensemble, n, seed)
        g_n = BoundaryProgram(gamma).gamma_n(real)
        target = LimitProfile.affine_with_jump(gamma, slope, rho, at)
        seq = build_recovery_sequence(real, target, mu, mu, rho, at=at, slope=slope, gamma_n=g_n)
        e = energy_rescaled(real, seq.v, gamma_n=g_n)
        e_t = limit_energy(target, predict_limit(ensemble, gamma))
        return RecoveryRow(int(n), int(seed), mu, mu, seq.h, float(-real.well_depth[seq.h]), e, e_t,
                           e - e_t, l1_distance(seq.v, target), seq.boundary_residual, seq.anchor_residual)
    except Exception as exc:
        raise CellFailure(f"cell n={n} seed={seed} mode=recovery: {type(exc).__name__}: {exc}") from None


def recovery_study(ensemble: Ensemble, gamma: float, n_list, seeds, slope: float = 0.3, rho: float = 0.2,
                   mu0: float = 0.1, at: float = 0.0, workers: int = 1, executor=None) -> list[RecoveryRow]:
    """Energies and L1 distances of recovery sequences along the mu = eps halving schedule."""
    n_list = [int(n) for n in n_list]
    mus = recovery_schedule(n_list, mu0, rho)
    cells = [(ensemble, gamma, n, int(s), slope, rho, mu, at) for n, mu in zip(n_list, mus) for s in seeds]
    rows = _map(_recovery_cell, cells, workers, executor)
    rows.sort(key=lambda r: (r.n, r.seed))
    return rows

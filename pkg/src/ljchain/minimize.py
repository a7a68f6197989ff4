"""Global minimisation of the rescaled chain energy under the boundary constraint.

Every stationary point of sum_i [J_i(z_i) - J_i(delta_i)] subject to
sum_i (z_i - delta_i) = S has a common bond force mu = J_i'(z_i).  For a
fixed choice of which bonds sit on the concave (broken) branch the strains
are functions of mu alone, so the problem reduces to a scalar root find.
Since the energy only depends on how many bonds of each species are
stretched to which branch, the work per crack set is independent of n.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .energy import DisplacementField, bond_strains, energy_rescaled
from .ensemble import ChainRealization
from .potentials import describe, evaluate, excess, raw_eval

CAP_FACTOR = 1e6
_NEWTON_ITERS = 200


class InfeasibleBranch(ValueError):
    """The length constraint cannot be met with the requested branch assignment."""


class NoDualRoot(ValueError):
    pass


class OracleTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MinimizationResult:
    v_star: DisplacementField
    energy: float
    strains: np.ndarray
    broken_set: tuple[int, ...]
    multiplier: float
    status: str
    iterations: int = 0
    alternatives: tuple[tuple[tuple[int, ...], float], ...] = field(default=())

    @property
    def n(self) -> int:
        return self.v_star.n

    def to_dict(self) -> dict:
        return {"energy": self.energy, "status": self.status,
                "broken_set": list(self.broken_set), "multiplier": self.multiplier}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def csv_rows(self):
        yield ("i", "strain", "v_left", "v_right")
        v = self.v_star.values
        for i, z in enumerate(self.strains):
            yield (i, float(z), float(v[i]), float(v[i + 1]))


@dataclass(frozen=True)
class JumpReport:
    jump_locations: tuple[int, ...]
    jump_heights: tuple[float, ...]

    @property
    def count(self) -> int:
        return len(self.jump_locations)


# ---------------------------------------------------------------------------
# inverse force maps

@functools.lru_cache(maxsize=256)
def _branch_table(spec, branch, z_cap):
    """Monotone (force, strain) samples of a branch, used for Newton starting points."""
    d = describe(spec)
    if branch == "convex":
        z = np.linspace(d.delta, d.inflection, 257)
        f = evaluate(spec, z, 1)
        return f, z
    z = np.geomspace(d.inflection, z_cap, 513)
    f = evaluate(spec, z, 1)
    # ascending in log force for np.interp
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(f[::-1], np.finfo(float).tiny)), np.log(z[::-1])


def force_inverse(spec, mu, branch: str = "convex", z_cap: float | None = None):
    """Strain z with J'(z) = mu on the chosen branch.

    ``convex``: z in [delta, z_infl] where J' increases from 0 to the peak force.
    ``broken``: z in [z_infl, z_cap] where J' decreases from the peak force.
    Forces outside the branch range are clipped to its ends.
    """
    d = describe(spec)
    if branch == "broken" and z_cap is None:
        z_cap = CAP_FACTOR * d.delta
    if np.ndim(mu) == 0:
        return _inverse_scalar(spec, d, float(mu), branch, z_cap)
    mu_arr = np.asarray(mu, dtype=float)
    if branch == "convex":
        lo = np.full(mu_arr.shape, d.delta)
        hi = np.full(mu_arr.shape, d.inflection)
        fs, zs = _branch_table(spec, "convex", None)
        x0 = np.interp(mu_arr, fs, zs)
        out = _hybrid(lambda t, i: raw_eval(spec, t, 1) - mu_arr[i], lambda t, i: raw_eval(spec, t, 2),
                      lo, hi, increasing=True, x0=x0)
        out = np.where(mu_arr <= 0, d.delta, out)
        out = np.where(mu_arr >= d.peak_force, d.inflection, out)
    elif branch == "broken":
        lo = np.full(mu_arr.shape, math.log(d.inflection))
        hi = np.full(mu_arr.shape, math.log(z_cap))
        # J' > 0 on this branch; log J' is close to linear in log z for the tails
        log_mu = np.log(np.maximum(mu_arr, np.finfo(float).tiny))
        lf, lz = _branch_table(spec, "broken", float(z_cap))
        x0 = np.clip(np.interp(log_mu, lf, lz), lo, hi)

        def f(t, i):
            return np.log(raw_eval(spec, np.exp(t), 1)) - log_mu[i]

        def df(t, i):
            z = np.exp(t)
            return raw_eval(spec, z, 2) * z / raw_eval(spec, z, 1)

        out = np.exp(_hybrid(f, df, lo, hi, increasing=False, x0=x0))
        out = np.where(mu_arr >= d.peak_force, d.inflection, out)
        out = np.where(mu_arr <= raw_eval(spec, z_cap, 1), z_cap, out)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return out


def _inverse_scalar(spec, d, mu, branch, z_cap):
    """Scalar twin of the vectorised inverse, in plain floats."""
    tiny = 4 * np.finfo(float).eps
    if branch == "convex":
        if mu <= 0:
            return d.delta
        if mu >= d.peak_force:
            return d.inflection
        fs, zs = _branch_table(spec, "convex", None)
        x = float(np.interp(mu, fs, zs))
        lo, hi = d.delta, d.inflection
        f = lambda t: float(raw_eval(spec, t, 1)) - mu
        df = lambda t: float(raw_eval(spec, t, 2))
        sign = 1.0
    elif branch == "broken":
        if mu >= d.peak_force:
            return d.inflection
        if mu <= float(raw_eval(spec, z_cap, 1)):
            return z_cap
        lf, lz = _branch_table(spec, "broken", float(z_cap))
        lmu = math.log(mu)
        lo, hi = math.log(d.inflection), math.log(z_cap)
        x = min(max(float(np.interp(lmu, lf, lz)), lo), hi)

        def f(t):
            return math.log(float(raw_eval(spec, math.exp(t), 1))) - lmu

        def df(t):
            z = math.exp(t)
            return float(raw_eval(spec, z, 2)) * z / float(raw_eval(spec, z, 1))

        sign = -1.0
    else:
        raise ValueError(f"unknown branch {branch!r}")
    for _ in range(_NEWTON_ITERS):
        fx = sign * f(x)
        if fx == 0:
            break
        if fx < 0:
            lo = x
        else:
            hi = x
        dx = sign * df(x)
        xn = x - fx / dx if dx != 0 else math.nan
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tiny * abs(x) or hi - lo <= tiny * abs(x):
            x = xn
            break
        x = xn
    return math.exp(x) if branch == "broken" else x


def _hybrid(f, df, lo, hi, increasing, x0=None):
    """Vectorised safeguarded Newton on a bracketing interval.

    ``f`` and ``df`` take (x, idx) where idx selects the still-active entries.
    """
    lo = lo.copy()
    hi = hi.copy()
    x = 0.5 * (lo + hi) if x0 is None else x0.copy()
    sign = 1.0 if increasing else -1.0
    act = np.arange(len(x))
    tiny = 4 * np.finfo(float).eps
    for _ in range(_NEWTON_ITERS):
        xa, la, ha = x[act], lo[act], hi[act]
        fx = sign * f(xa, act)
        la = np.where(fx < 0, xa, la)
        ha = np.where(fx > 0, xa, ha)
        d = sign * df(xa, act)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = xa - fx / d
        bad = ~np.isfinite(xn) | (xn <= la) | (xn >= ha)
        xn = np.where(bad, 0.5 * (la + ha), xn)
        scale = np.maximum(np.abs(xa), 1e-300)
        done = (fx == 0) | (np.abs(xn - xa) <= tiny * scale) | (ha - la <= tiny * scale)
        x[act] = np.where(fx == 0, xa, xn)
        lo[act], hi[act] = la, ha
        act = act[~done]
        if len(act) == 0:
            break
    return x


# ---------------------------------------------------------------------------
# elastic solve for a fixed crack set

@dataclass
class _Problem:
    """Species-level description of a crack-set problem."""

    specs: list
    counts: np.ndarray        # unbroken bonds per species
    broken_species: list      # species index of each broken bond
    S: float
    z_cap: float

    def strains(self, mu):
        zu = [force_inverse(s, mu, "convex") if c > 0 else math.nan
              for s, c in zip(self.specs, self.counts)]
        zb = [force_inverse(self.specs[k], mu, "broken", self.z_cap) for k in self.broken_species]
        return zu, zb

    def residual(self, mu):
        zu, zb = self.strains(mu)
        r = -self.S
        for k, c in enumerate(self.counts):
            if c > 0:
                r += c * (zu[k] - describe(self.specs[k]).delta)
        for k, z in zip(self.broken_species, zb):
            r += z - describe(self.specs[k]).delta
        return r

    def residual_grid(self, mus):
        r = np.full(mus.shape, -self.S)
        for k, c in enumerate(self.counts):
            if c > 0:
                r += c * (force_inverse(self.specs[k], mus, "convex") - describe(self.specs[k]).delta)
        for k in self.broken_species:
            r += force_inverse(self.specs[k], mus, "broken", self.z_cap) - describe(self.specs[k]).delta
        return r

    def slope(self, mu):
        zu, zb = self.strains(mu)
        g = 0.0
        for k, c in enumerate(self.counts):
            if c > 0:
                g += c / evaluate(self.specs[k], zu[k], 2)
        for k, z in zip(self.broken_species, zb):
            g += 1.0 / evaluate(self.specs[k], z, 2)
        return g

    def energy(self, mu):
        zu, zb = self.strains(mu)
        e = 0.0
        for k, c in enumerate(self.counts):
            if c > 0:
                e += c * excess(self.specs[k], zu[k])
        for k, z in zip(self.broken_species, zb):
            e += excess(self.specs[k], z)
        return e


def _make_problem(realization, gamma_n, crack_set):
    n = realization.n
    specs = list(realization.ensemble.support)
    counts = np.bincount(realization.bond_index, minlength=len(specs)).astype(float)
    broken_species = []
    for i in crack_set:
        k = int(realization.bond_index[i])
        counts[k] -= 1
        broken_species.append(k)
    present = np.bincount(realization.bond_index, minlength=len(specs)) > 0
    z_cap = CAP_FACTOR * float(max(describe(s).delta for s, p in zip(specs, present) if p))
    S = gamma_n * math.sqrt(n)
    return _Problem(specs, counts, broken_species, S, z_cap)


def _polish(prob, mu, lo, hi):
    """One Newton correction of the multiplier on the length residual."""
    r = prob.residual(mu)
    g = prob.slope(mu)
    if g != 0 and np.isfinite(g):
        mu2 = min(max(mu - r / g, lo), hi)
        if abs(prob.residual(mu2)) < abs(r):
            return mu2
    return mu


def _assemble(realization, gamma_n, crack_set, prob, mu, status, iterations):
    zu, zb = prob.strains(mu)
    deltas = realization.ensemble.deltas
    s_species = np.array([(z - d) if c > 0 else 0.0 for z, d, c in zip(zu, deltas, prob.counts)])
    s = s_species[realization.bond_index]
    for i, z, k in zip(crack_set, zb, prob.broken_species):
        s[i] = z - deltas[k]
    return _from_increments(realization, gamma_n, s, tuple(sorted(crack_set)), mu, status, iterations)


def _from_increments(realization, gamma_n, s, crack_set, mu, status, iterations, alternatives=()):
    lam = realization.lam
    v = DisplacementField.from_increments(s * math.sqrt(lam), gamma_n)
    z = bond_strains(realization, v)
    e = energy_rescaled(realization, v)
    return MinimizationResult(v, e, z, crack_set, float(mu), status, iterations, tuple(alternatives))


def _status(crack_set):
    return "elastic" if not crack_set else f"fractured({len(crack_set)})"


def solve_elastic(realization: ChainRealization, gamma_n: float, crack_set=()) -> MinimizationResult:
    """Stationary point with bonds in ``crack_set`` on the concave branch and the rest convex.

    Among several stationary points for the same branch assignment the one
    of least energy is returned.
    """
    crack_set = tuple(sorted(int(i) for i in crack_set))
    n = realization.n
    if len(set(crack_set)) != len(crack_set) or any(not 0 <= i < n for i in crack_set):
        raise ValueError(f"invalid crack set {crack_set}")
    if gamma_n < 0:
        raise InfeasibleBranch("negative boundary value")
    prob = _make_problem(realization, gamma_n, crack_set)
    involved = [k for k, c in enumerate(prob.counts) if c > 0] + prob.broken_species
    mu_hi = min(describe(prob.specs[k]).peak_force for k in set(involved))

    if not crack_set:
        if gamma_n == 0:
            return _from_increments(realization, 0.0, np.zeros(n), (), 0.0, "elastic", 0)
        r_hi = prob.residual(mu_hi)
        if r_hi < 0:
            raise InfeasibleBranch("length cannot be reached with every bond on the convex branch")
        if r_hi == 0:
            mu, it = mu_hi, 0
        else:
            mu, info = optimize.brentq(prob.residual, 0.0, mu_hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                       maxiter=2000, full_output=True)
            it = info.iterations
        mu = _polish(prob, mu, 0.0, mu_hi)
        return _assemble(realization, gamma_n, crack_set, prob, mu, "elastic", it)

    mu_lo = max(evaluate(prob.specs[k], prob.z_cap, 1) for k in prob.broken_species)
    if not mu_lo < mu_hi:
        raise NoDualRoot("empty force interval for this crack set")
    r_lo = prob.residual(mu_lo)
    if r_lo < 0:
        # even fully capped broken bonds cannot absorb the imposed length:
        # the remainder is shared equally among the broken bonds
        zu, _ = prob.strains(mu_lo)
        deltas = realization.ensemble.deltas
        s_species = np.array([(z - d) if c > 0 else 0.0 for z, d, c in zip(zu, deltas, prob.counts)])
        s = s_species[realization.bond_index]
        rest = prob.S - float(np.sum(np.delete(s, crack_set)))
        s[list(crack_set)] = rest / len(crack_set)
        return _from_increments(realization, gamma_n, s, crack_set, mu_lo, "boundary-capped", 0)

    # tails that decay exponentially can push J'(z_cap) to (or below) underflow;
    # the log-spaced scan then starts at a fixed depth below the peak force
    grid_lo = max(mu_lo, 1e-12 * mu_hi)
    decades = math.log10(mu_hi / grid_lo)
    mus = np.geomspace(grid_lo, mu_hi, max(int(20 * decades) + 2, 8))
    if grid_lo > mu_lo:
        mus = np.concatenate([[mu_lo], mus])
    res = prob.residual_grid(mus)
    roots = []
    iters = 0
    for j in range(len(mus) - 1):
        a, b = res[j], res[j + 1]
        if a == 0:
            roots.append(mus[j])
        elif a * b < 0:
            mu, info = optimize.brentq(prob.residual, mus[j], mus[j + 1], xtol=1e-300,
                                       rtol=4 * np.finfo(float).eps, maxiter=2000, full_output=True)
            iters += info.iterations
            roots.append(_polish(prob, mu, mus[j], mus[j + 1]))
    if res[-1] == 0:
        roots.append(mus[-1])
    if not roots:
        raise InfeasibleBranch(f"no stationary point with crack set {crack_set}")
    best = min(roots, key=prob.energy)
    return _assemble(realization, gamma_n, crack_set, prob, best, _status(crack_set), iters)


# ---------------------------------------------------------------------------
# global minimisation

def weakest_candidates(realization: ChainRealization, m: int | None = None) -> list[int]:
    """The m bonds of smallest well depth -J(delta), ties broken by index."""
    n = realization.n
    m = min(n, 32) if m is None else min(n, int(m))
    order = np.lexsort((np.arange(n), -realization.well_depth))
    return [int(i) for i in order[:m]]


def candidate_crack_sets(realization, k_max=2, candidate_rule="weakest", m=None):
    """Crack sets to try, one representative per species signature."""
    if candidate_rule == "weakest":
        cand = weakest_candidates(realization, m)
    elif candidate_rule == "all":
        cand = list(range(realization.n))
    else:
        raise ValueError(f"unknown candidate rule {candidate_rule!r}")
    cand = sorted(cand)
    out = {(): ()}
    for size in range(1, k_max + 1):
        for combo in itertools.combinations(cand, size):
            sig = (size,) + tuple(sorted(int(realization.bond_index[i]) for i in combo))
            if sig not in out or combo < out[sig]:
                out[sig] = combo
    return sorted(out.values())


def minimize_global(realization: ChainRealization, gamma_n: float, k_max: int = 2,
                    candidate_rule: str = "weakest", m: int | None = None) -> MinimizationResult:
    """Least-energy stationary point over candidate crack sets."""
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    n = realization.n
    if gamma_n == 0:
        return _from_increments(realization, 0.0, np.zeros(n), (), 0.0, "elastic", 0, (((), 0.0),))
    results = []
    errors = []
    for cs in candidate_crack_sets(realization, k_max, candidate_rule, m):
        try:
            results.append(solve_elastic(realization, gamma_n, cs))
        except (InfeasibleBranch, NoDualRoot) as exc:
            errors.append((cs, exc))
    if not results:
        raise InfeasibleBranch(f"every crack set infeasible: {errors[:3]}")
    e_min = min(r.energy for r in results)
    tol = 1e-13 * max(1.0, abs(e_min))
    best = min((r for r in results if r.energy <= e_min + tol), key=lambda r: r.broken_set)
    alts = tuple((r.broken_set, r.energy) for r in results)
    return MinimizationResult(best.v_star, best.energy, best.strains, best.broken_set, best.multiplier,
                              best.status, best.iterations, alts)


def branch_energies(result: MinimizationResult) -> dict[str, float]:
    """Lowest energy per regime among the evaluated crack sets."""
    out = {}
    for cs, e in result.alternatives:
        key = _status(cs)
        out[key] = min(out.get(key, math.inf), e)
    return out


# ---------------------------------------------------------------------------
# brute-force oracle

def oracle_grid_dp(realization: ChainRealization, gamma_n: float, bins: int = 4000,
                   max_n: int = 12) -> MinimizationResult:
    """Dynamic programme over a uniform grid of per-bond elongations s_i in [0, S].

    The imposed total S = gamma_n * sqrt(n) is split into ``bins`` cells; each
    bond takes an integer number of cells and the cells must add up to
    ``bins``.  Only grid configurations are admitted, so the result is an
    upper bound on the true minimum; see :func:`oracle_slack`.
    """
    n = realization.n
    if n > max_n:
        raise OracleTooLarge(f"oracle limited to n <= {max_n}, got {n}")
    S = gamma_n * math.sqrt(n)
    if S == 0:
        return _from_increments(realization, 0.0, np.zeros(n), (), 0.0, "elastic", 0)
    specs = realization.ensemble.support
    deltas = realization.delta
    if n == 1:
        s = np.array([S])
    else:
        h = S / bins
        grid = np.arange(bins + 1) * h
        cost = [excess(specs[int(k)], d + grid) for k, d in zip(realization.bond_index, deltas)]
        D = cost[0].copy()
        back = []
        for i in range(1, n):
            c = cost[i]
            if i == n - 1:
                # only the full length matters at the last bond
                tot = D[::-1] + c
                j = int(np.argmin(tot))
                back.append(np.array([j]))
                D = np.array([tot[j]])
                break
            best = D + c[0]
            arg = np.zeros(bins + 1, dtype=np.int64)
            for j in range(1, bins + 1):
                cand = D[: bins + 1 - j] + c[j]
                better = cand < best[j:]
                if better.any():
                    best[j:][better] = cand[better]
                    arg[j:][better] = j
            back.append(arg)
            D = best
        cells = np.zeros(n, dtype=np.int64)
        t = bins
        cells[n - 1] = back[-1][0]
        t -= cells[n - 1]
        for i in range(n - 2, 0, -1):
            cells[i] = back[i - 1][t]
            t -= cells[i]
        cells[0] = t
        s = cells * h
    z = deltas + s
    broken = tuple(int(i) for i in range(n) if evaluate(realization.spec(i), z[i], 2) < 0)
    forces = np.array([evaluate(realization.spec(i), z[i], 1) for i in range(n)])
    return _from_increments(realization, gamma_n, s, broken, float(np.median(forces)), _status(broken), 0)


def oracle_slack(realization: ChainRealization, gamma_n: float, bins: int = 4000) -> float:
    """Grid error bound 0.5 * n * h^2 * max|J''| over the reachable strain range."""
    n = realization.n
    S = gamma_n * math.sqrt(n)
    if n == 1 or S == 0:
        return 0.0
    h = S / bins
    m = 0.0
    for k in set(int(x) for x in realization.bond_index):
        spec = realization.ensemble.support[k]
        d = describe(spec).delta
        z = np.linspace(d, d + S, 2001)
        m = max(m, float(np.max(np.abs(evaluate(spec, z, 2)))))
    return 0.5 * n * h * h * m


# ---------------------------------------------------------------------------
# jumps

def detect_jumps(result: MinimizationResult, exponent: float = -1.0 / 8.0) -> JumpReport:
    """Flag bonds whose rescaled increment v^{i+1} - v^i exceeds lam^(1 + exponent)."""
    n = result.n
    lam = 1.0 / n
    inc = np.diff(result.v_star.values)
    thr = lam ** (1.0 + exponent)
    idx = np.nonzero(inc > thr)[0]
    return JumpReport(tuple(int(i) for i in idx), tuple(float(inc[i]) for i in idx))

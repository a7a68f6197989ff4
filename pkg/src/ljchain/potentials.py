"""Lennard-Jones type pair potentials.

A :class:`PotentialSpec` names an analytic family (or a tabulated curve) and
its parameters.  Every family evaluates J and its first three derivatives on
``z > 0``; ``z <= 0`` is outside the domain (the energy is +inf there).

Families
--------
twelve-six        J(z) = depth * ((length/z)**12 - 2*(length/z)**6)
morse             J(z) = depth * (exp(-2a(z-r0)) - 2 exp(-a(z-r0)))
shifted-quadratic J(z) = -depth + k s**2 + k s**4 / (r0 z)         z < r0
                  J(z) = -depth / (1 + (k/depth) s**2 + tail s**4) z >= r0
                  with s = z - r0, k = stiffness.  C3 at r0, J''(r0) = 2k.
tabulated         spline through (knots, values); degree 3 (C2) or 5 (C4)
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import interpolate, optimize

FAMILIES = ("twelve-six", "morse", "shifted-quadratic", "tabulated")

_REQUIRED = {
    "twelve-six": ("depth", "length"),
    "morse": ("depth", "width", "r0"),
    "shifted-quadratic": ("stiffness", "depth"),
    "tabulated": ("knots", "values"),
}
_DEFAULTS = {
    "shifted-quadratic": {"r0": 1.0, "tail": 0.0},
    "tabulated": {"degree": 3},
}


class DomainError(ValueError):
    """Raised when a potential is evaluated at a non-positive strain."""


class NoInteriorMinimum(ValueError):
    pass


class ClassViolation(ValueError):
    """A potential fails a structural requirement of the Lennard-Jones class."""


@dataclass(frozen=True)
class PotentialSpec:
    family: str
    params: tuple[tuple[str, Any], ...]
    label: str = ""
    _spline: Any = field(default=None, init=False, repr=False, compare=False, hash=False)
    _pdict: Any = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown potential family {self.family!r}")
        p = dict(_DEFAULTS.get(self.family, {}))
        p.update(dict(self.params))
        missing = [k for k in _REQUIRED[self.family] if k not in p]
        if missing:
            raise ValueError(f"{self.family}: missing parameters {missing}")
        # canonical ordering so equal specs hash equal
        canon = []
        for k in sorted(p):
            v = p[k]
            if isinstance(v, (list, tuple, np.ndarray)):
                v = tuple(float(x) for x in v)
            elif k == "degree":
                v = int(v)
            else:
                v = float(v)
            canon.append((k, v))
        object.__setattr__(self, "params", tuple(canon))
        object.__setattr__(self, "_pdict", dict(canon))
        self._check()
        if self.family == "tabulated":
            knots = np.asarray(self["knots"])
            values = np.asarray(self["values"])
            if self["degree"] == 3:
                spl = interpolate.CubicSpline(knots, values, extrapolate=True)
            else:
                spl = interpolate.make_interp_spline(knots, values, k=5)
            object.__setattr__(self, "_spline", spl)

    def __getitem__(self, name):
        return self._pdict[name]

    def get(self, name, default=None):
        return self._pdict.get(name, default)

    def _check(self):
        p = dict(self.params)
        if self.family == "tabulated":
            knots = np.asarray(p["knots"])
            if len(knots) != len(p["values"]):
                raise ValueError("tabulated: knots and values differ in length")
            if len(knots) < 6:
                raise ValueError("tabulated: need at least 6 knots")
            if knots[0] <= 0 or np.any(np.diff(knots) <= 0):
                raise ValueError("tabulated: knots must be positive and strictly increasing")
            if p["degree"] not in (3, 5):
                raise ValueError("tabulated: degree must be 3 or 5")
            return
        for k, v in p.items():
            if k == "tail":
                if v < 0:
                    raise ValueError(f"{self.family}: tail must be >= 0")
            elif not v > 0:
                raise ValueError(f"{self.family}: parameter {k} must be > 0, got {v}")

    def to_dict(self) -> dict:
        d = {"label": self.label, "family": self.family}
        for k, v in self.params:
            d[k] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PotentialSpec":
        d = dict(d)
        family = d.pop("family")
        label = d.pop("label", "")
        return cls(family, tuple(d.items()), label)


def twelve_six(depth=1.0, length=1.0, label="") -> PotentialSpec:
    return PotentialSpec("twelve-six", (("depth", depth), ("length", length)), label)


def morse(depth=1.0, width=1.0, r0=1.0, label="") -> PotentialSpec:
    return PotentialSpec("morse", (("depth", depth), ("width", width), ("r0", r0)), label)


def shifted_quadratic(stiffness, depth, tail=0.0, r0=1.0, label="") -> PotentialSpec:
    return PotentialSpec(
        "shifted-quadratic",
        (("stiffness", stiffness), ("depth", depth), ("tail", tail), ("r0", r0)),
        label,
    )


def tabulated(knots, values, degree=3, label="") -> PotentialSpec:
    return PotentialSpec(
        "tabulated", (("knots", tuple(knots)), ("values", tuple(values)), ("degree", degree)), label
    )


# ---------------------------------------------------------------------------
# family kernels: vectorised over z, z > 0 assumed

def _twelve_six(z, order, p):
    eps, sig = p["depth"], p["length"]
    r6 = (sig / z) ** 6
    r12 = r6 * r6
    if order == 0:
        return eps * (r12 - 2.0 * r6)
    if order == 1:
        return eps * (12.0 * r6 - 12.0 * r12) / z
    if order == 2:
        return eps * (156.0 * r12 - 84.0 * r6) / z**2
    return eps * (672.0 * r6 - 2184.0 * r12) / z**3


def _morse(z, order, p):
    D, a, r0 = p["depth"], p["width"], p["r0"]
    e = np.exp(-a * (z - r0))
    e2 = e * e
    if order == 0:
        return D * (e2 - 2.0 * e)
    if order == 1:
        return 2.0 * a * D * (e - e2)
    if order == 2:
        return a**2 * D * (4.0 * e2 - 2.0 * e)
    return a**3 * D * (2.0 * e - 8.0 * e2)


def _shifted_quadratic(z, order, p):
    k, w, c, r0 = p["stiffness"], p["depth"], p["tail"], p["r0"]
    s = z - r0
    # left branch: quadratic well plus a barrier k s^4/(r0 z) that is flat to third order at r0
    b = k / r0
    if order == 0:
        left = -w + k * s**2 + b * s**4 / z
    elif order == 1:
        left = 2 * k * s + b * (4 * s**3 / z - s**4 / z**2)
    elif order == 2:
        left = 2 * k + b * (12 * s**2 / z - 8 * s**3 / z**2 + 2 * s**4 / z**3)
    else:
        left = b * (24 * s / z - 36 * s**2 / z**2 + 24 * s**3 / z**3 - 6 * s**4 / z**4)
    a = k / w
    g = 1 + a * s**2 + c * s**4
    if order == 0:
        right = -w / g
    else:
        g1 = 2 * a * s + 4 * c * s**3
        g2 = 2 * a + 12 * c * s**2
        g3 = 24 * c * s
        if order == 1:
            right = w * g1 / g**2
        elif order == 2:
            right = w * (g2 / g**2 - 2 * g1**2 / g**3)
        else:
            right = w * (g3 / g**2 - 6 * g1 * g2 / g**3 + 6 * g1**3 / g**4)
    return np.where(z < r0, left, right)


def raw_eval(spec: PotentialSpec, z, order: int):
    """Unchecked J^(order)(z) for z > 0 (scalar or array); used in solver inner loops."""
    fam = spec.family
    if fam == "twelve-six":
        return _twelve_six(z, order, spec._pdict)
    if fam == "morse":
        return _morse(z, order, spec._pdict)
    if fam == "shifted-quadratic":
        return _shifted_quadratic(z, order, spec._pdict)
    return spec._spline(z, order)


def evaluate(spec: PotentialSpec, z, order: int = 0):
    """J^(order)(z) for ``order`` in 0..3.  Accepts scalars or arrays."""
    if order not in (0, 1, 2, 3):
        raise ValueError(f"order must be 0..3, got {order}")
    za = np.asarray(z, dtype=float)
    if not (za > 0).all():
        raise DomainError("potential evaluated at z <= 0 (J = +inf there)")
    p = spec._pdict
    if spec.family == "twelve-six":
        out = _twelve_six(za, order, p)
    elif spec.family == "morse":
        out = _morse(za, order, p)
    elif spec.family == "shifted-quadratic":
        out = _shifted_quadratic(za, order, p)
    else:
        out = spec._spline(za, order)
    if np.ndim(z) == 0:
        return float(out)
    return np.asarray(out, dtype=float)


def excess(spec: PotentialSpec, z):
    """J(z) - J(delta), computed without cancellation for the analytic families.

    Non-positive z gives +inf.
    """
    za = np.asarray(z, dtype=float)
    out = np.full(za.shape, np.inf)
    ok = za > 0
    zz = za[ok]
    p = dict(spec.params)
    if spec.family == "twelve-six":
        t = (p["length"] / zz) ** 6
        out[ok] = p["depth"] * (t - 1.0) ** 2
    elif spec.family == "morse":
        e = np.exp(-p["width"] * (zz - p["r0"]))
        out[ok] = p["depth"] * (1.0 - e) ** 2
    elif spec.family == "shifted-quadratic":
        k, w, c, r0 = p["stiffness"], p["depth"], p["tail"], p["r0"]
        s = zz - r0
        q = (k / w) * s**2 + c * s**4
        out[ok] = np.where(zz < r0, k * s**2 + (k / r0) * s**4 / zz, w * q / (1 + q))
    else:
        out[ok] = evaluate(spec, zz, 0) - describe(spec).well_depth
    if np.ndim(z) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# minimiser, stiffness, inflection

def _default_bracket(spec):
    if spec.family == "tabulated":
        knots = spec["knots"]
        return (knots[0], knots[-1])
    return (1e-3, 1e3)


def _bisect_newton(f, df, lo, hi, width=1e-6, newton_iters=50, rtol=1e-15):
    """Root of f on [lo, hi] (f(lo) < 0 < f(hi) or reverse): bisect, then Newton."""
    flo = f(lo)
    while hi - lo > width * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi) if hi / lo < 4 else math.sqrt(lo * hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    a, b = lo, hi
    for _ in range(newton_iters):
        fx = f(x)
        d = df(x)
        if d == 0 or not np.isfinite(d):
            break
        step = fx / d
        xn = x - step
        if not (a <= xn <= b):
            break
        x = xn
        if abs(step) <= rtol * abs(x):
            break
    return x


def find_minimizer(spec: PotentialSpec, bracket=None) -> tuple[float, float]:
    """Unique minimiser delta and well depth J(delta).

    J' is scanned on a geometric grid over ``bracket`` for sign changes from
    negative to positive; the lowest such well is refined by bisection to
    width 1e-6 followed by a Newton polish.
    """
    lo, hi = bracket if bracket is not None else _default_bracket(spec)
    grid = np.geomspace(lo, hi, 4001)
    d1 = evaluate(spec, grid, 1)
    idx = np.nonzero((d1[:-1] < 0) & (d1[1:] >= 0))[0]
    if len(idx) == 0:
        raise NoInteriorMinimum(f"{spec.label or spec.family}: no interior minimum in bracket ({lo}, {hi})")
    f = lambda x: evaluate(spec, x, 1)
    df = lambda x: evaluate(spec, x, 2)
    best = None
    for i in idx:
        if d1[i + 1] == 0:
            x = float(grid[i + 1])
        else:
            x = _bisect_newton(f, df, float(grid[i]), float(grid[i + 1]))
        jx = evaluate(spec, x, 0)
        if best is None or jx < best[1]:
            best = (x, jx)
    delta, depth = best
    if depth >= 0:
        raise ClassViolation(f"{spec.label or spec.family}: J(delta) = {depth} is not negative")
    return delta, depth


def stiffness(spec: PotentialSpec) -> float:
    """alpha = J''(delta) / 2."""
    delta, _ = find_minimizer(spec)
    j2 = evaluate(spec, delta, 2)
    if not j2 > 0:
        raise ClassViolation(f"{spec.label or spec.family}: J''(delta) = {j2} <= 0")
    return 0.5 * j2


def inflection(spec: PotentialSpec, delta: float | None = None) -> float:
    """First zero of J'' to the right of the minimiser (end of the convex branch)."""
    if delta is None:
        delta, _ = find_minimizer(spec)
    hi = _default_bracket(spec)[1]
    grid = np.geomspace(delta, max(hi, 10 * delta), 4001)[1:]
    d2 = evaluate(spec, grid, 2)
    idx = np.nonzero(d2 <= 0)[0]
    if len(idx) == 0:
        raise ClassViolation(f"{spec.label or spec.family}: no inflection point right of delta")
    i = idx[0]
    lo = delta if i == 0 else float(grid[i - 1])
    return _bisect_newton(lambda x: -evaluate(spec, x, 2), lambda x: -evaluate(spec, x, 3),
                          lo, float(grid[i]), width=1e-9)


def third_derivative_bound(spec: PotentialSpec, kappa: float, samples: int = 10_000) -> float:
    """C^kappa = sup |J'''| on [delta - kappa, delta + kappa].

    Interior local maxima of |J'''| are located once on a dense grid over
    (0, 2 delta) and refined; the bound is the largest of those inside the
    interval and the two endpoint values, so nested intervals give
    nondecreasing bounds exactly.
    """
    delta, _ = find_minimizer(spec)
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if kappa >= delta:
        raise DomainError(f"interval [delta - kappa, delta + kappa] leaves the domain (delta={delta})")
    ends = np.abs(evaluate(spec, np.array([delta - kappa, delta + kappa]), 3))
    best = float(np.max(ends))
    for x, val in _third_derivative_peaks(spec, int(samples)):
        if abs(x - delta) <= kappa:
            best = max(best, val)
    return best


@functools.lru_cache(maxsize=256)
def _third_derivative_peaks(spec, samples):
    delta, _ = find_minimizer(spec)
    z = np.linspace(delta * 1e-3, delta * (2 - 1e-3), samples)
    a3 = np.abs(evaluate(spec, z, 3))
    inner = np.nonzero((a3[1:-1] >= a3[:-2]) & (a3[1:-1] >= a3[2:]))[0] + 1
    peaks = []
    for i in inner:
        res = optimize.minimize_scalar(lambda x: -abs(evaluate(spec, x, 3)),
                                       bounds=(float(z[i - 1]), float(z[i + 1])),
                                       method="bounded", options={"xatol": 1e-14})
        if -float(res.fun) >= a3[i]:
            peaks.append((float(res.x), -float(res.fun)))
        else:
            peaks.append((float(z[i]), float(a3[i])))
    return tuple(peaks)


@dataclass(frozen=True)
class PotentialDescriptor:
    spec: PotentialSpec
    delta: float
    well_depth: float
    alpha: float
    inflection: float
    peak_force: float

    def ckappa(self, kappa: float) -> float:
        return _ckappa_cached(self.spec, float(kappa))


@functools.lru_cache(maxsize=256)
def _ckappa_cached(spec, kappa):
    return third_derivative_bound(spec, kappa)


@functools.lru_cache(maxsize=256)
def describe(spec: PotentialSpec) -> PotentialDescriptor:
    delta, depth = find_minimizer(spec)
    j2 = evaluate(spec, delta, 2)
    if not j2 > 0:
        raise ClassViolation(f"{spec.label or spec.family}: J''(delta) = {j2} <= 0")
    zi = inflection(spec, delta)
    return PotentialDescriptor(spec, delta, depth, 0.5 * j2, zi, evaluate(spec, zi, 1))


# ---------------------------------------------------------------------------
# class certification

@dataclass(frozen=True)
class ClassParams:
    """Constants of the potential class.  Psi(z) = z**-psi_power + psi_slope*z for z > 0."""

    b: float = 1.1
    c: float = 1.0
    d: float = 4.0
    eta: float = 0.1
    psi_power: float = 12.0
    psi_slope: float = 0.0
    alpha_floor: float | None = None

    def __post_init__(self):
        for name in ("b", "c", "d", "eta", "psi_power"):
            if not getattr(self, name) > 0:
                raise ValueError(f"class parameter {name} must be > 0")
        if not self.d > 1:
            raise ValueError("class parameter d must be > 1")
        if self.psi_slope < 0:
            raise ValueError("psi_slope must be >= 0 (Psi must map into [0, inf])")
        if self.alpha_floor is not None and not self.alpha_floor > 0:
            raise ValueError("alpha_floor must be > 0")

    @property
    def floor(self) -> float:
        # the harmonic lower bound forces alpha >= 1/c
        return self.alpha_floor if self.alpha_floor is not None else 1.0 / self.c

    def psi(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(z > 0, np.maximum(z, 0) ** -self.psi_power + self.psi_slope * z, np.inf)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("b", "c", "d", "eta", "psi_power", "psi_slope")}
        if self.alpha_floor is not None:
            d["alpha_floor"] = self.alpha_floor
        return d


@dataclass(frozen=True)
class CertEntry:
    condition: str
    passed: bool
    witness_z: float | None
    margin: float

    def to_dict(self):
        return {"condition": self.condition, "pass": bool(self.passed),
                "witness_z": self.witness_z, "margin": self.margin}


@dataclass(frozen=True)
class CertReport:
    label: str
    entries: tuple[CertEntry, ...]
    constants: dict

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> list[str]:
        return [e.condition for e in self.entries if not e.passed]

    def __getitem__(self, condition) -> CertEntry:
        for e in self.entries:
            if e.condition == condition:
                return e
        raise KeyError(condition)

    def to_dict(self) -> dict:
        return {"label": self.label, "pass": self.passed, "constants": self.constants,
                "conditions": [e.to_dict() for e in self.entries]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _entry(name, passed, witness, margin):
    w = None if witness is None else float(witness)
    return CertEntry(name, bool(passed), w, float(margin))


def validate_class(spec: PotentialSpec, params: ClassParams | None = None) -> CertReport:
    """Sampled certification of ``spec`` against the Lennard-Jones class.

    Each condition becomes one report entry; nothing here raises for a
    failing potential.
    """
    params = params or ClassParams()
    entries = []
    consts = {"params": params.to_dict()}

    if spec.family == "tabulated":
        ok = spec["degree"] >= 5
        entries.append(_entry("LJ1:C3", ok, None, 1.0 if ok else -1.0))
    else:
        entries.append(_entry("LJ1:C3", True, None, 1.0))

    decades = 10.0 ** -np.arange(1, 7)
    jd = evaluate(spec, decades, 0)
    ratio = jd[-1] / jd[-2] if jd[-2] > 0 else -np.inf
    ok = bool(np.all(np.diff(jd) > 0) and jd[-2] > 0 and ratio >= 2.0)
    entries.append(_entry("LJ1:blowup", ok, decades[-1], ratio - 2.0))

    try:
        desc = describe(spec)
    except (NoInteriorMinimum, ClassViolation) as exc:
        entries.append(_entry("LJ2:minimizer", False, None, -1.0))
        consts["error"] = str(exc)
        return CertReport(spec.label, tuple(entries), consts)
    delta, jmin = desc.delta, desc.well_depth
    consts.update(delta=delta, well_depth=jmin, alpha=desc.alpha)

    grid = np.geomspace(1e-3 * delta, 1e3 * delta, 20001)
    d1 = evaluate(spec, grid, 1)
    n_wells = int(np.count_nonzero((d1[:-1] < 0) & (d1[1:] >= 0)))
    jg = evaluate(spec, grid, 0)
    lowest = float(np.min(jg))
    ok = n_wells == 1 and lowest >= jmin - 1e-12 * max(1.0, abs(jmin)) and jmin < 0
    entries.append(_entry("LJ2:minimizer", ok, delta, -jmin if n_wells == 1 else -float(n_wells)))

    lo, hi = 1.0 / params.d, params.d
    entries.append(_entry("LJ2:delta_range", lo < delta < hi, delta, min(delta - lo, hi - delta)))

    left = np.geomspace(1e-3 * delta, delta * (1 - 1e-9), 5001)
    d2 = evaluate(spec, left, 2)
    i = int(np.argmin(d2))
    entries.append(_entry("LJ2:convex_left", d2[i] > 0, left[i], d2[i]))

    psi = params.psi(grid)
    lower = jg - (psi / params.d - params.d)
    upper = params.d * np.maximum(psi, grid) - jg
    both = np.minimum(lower, upper)
    i = int(np.argmin(both))
    entries.append(_entry("LJ2:sandwich", both[i] >= 0, grid[i], both[i]))

    right = grid[grid > delta]
    sup = max(float(np.max(np.abs(evaluate(spec, right, 0)))), abs(jmin))
    entries.append(_entry("LJ2:sup_bound", sup < params.b, delta, params.b - sup))

    far = delta * 10.0 ** np.arange(2, 7)
    jf = np.abs(evaluate(spec, far, 0))
    tol = 1e-6 * abs(jmin)
    ok = bool(jf[-1] <= tol and np.all(np.diff(jf) <= 0))
    entries.append(_entry("LJ3:decay", ok, far[-1], tol - jf[-1]))

    near = np.linspace(max(delta - params.eta, 1e-12), delta + params.eta, 4003)[1:-1]
    gap = excess(spec, near) - (near - delta) ** 2 / params.c
    i = int(np.argmin(gap))
    entries.append(_entry("LJ4:harmonic", gap[i] >= -1e-14, near[i], gap[i]))

    entries.append(_entry("alpha_floor", desc.alpha >= params.floor, delta, desc.alpha - params.floor))

    # quadratic-or-constant lower bound: excess >= min(K1 s^2, K2)
    outside = grid[np.abs(grid - delta) >= params.eta]
    k2 = float(np.min(excess(spec, outside))) if len(outside) else -jmin
    k2 = min(k2, -jmin)
    k1 = 1.0 / params.c
    consts.update(K1=k1, K2=k2)
    entries.append(_entry("LJ4:K1K2", k2 > 0, None, k2))

    return CertReport(spec.label, tuple(entries), consts)

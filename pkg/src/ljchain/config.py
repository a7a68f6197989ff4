"""TOML run configuration: parsing, validation and serialization."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .ensemble import Ensemble
from .potentials import ClassParams, PotentialSpec

EXPERIMENTS = ("validate", "predict", "minimize", "sweep", "recover", "ergodic")


class ConfigError(ValueError):
    pass


class ConfigParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownLabelError(ConfigError):
    def __init__(self, label, where):
        super().__init__(f"unknown label {label!r} in {where}")
        self.label = label


class ConfigRangeError(ConfigError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


# experiment keys: name -> (checker, description)
def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _int(x):
    return isinstance(x, int) and not isinstance(x, bool)


_EXPERIMENT_KEYS = {
    "gamma": (lambda x: _num(x) and x >= 0, "a number >= 0"),
    "gammas": (lambda x: isinstance(x, list) and all(_num(g) and g >= 0 for g in x), "a list of numbers >= 0"),
    "n": (lambda x: _int(x) and x >= 1, "an integer >= 1"),
    "seed": (_int, "an integer"),
    "n_list": (lambda x: isinstance(x, list) and x and all(_int(v) and v >= 1 for v in x)
               and all(b > a for a, b in zip(x, x[1:])), "a nonempty ascending list of integers >= 1"),
    "seeds": (lambda x: isinstance(x, list) and x and all(_int(v) for v in x), "a nonempty list of integers"),
    "k_max": (lambda x: _int(x) and x >= 0, "an integer >= 0"),
    "mode": (lambda x: x in ("global-min", "recovery"), "'global-min' or 'recovery'"),
    "slope": (lambda x: _num(x) and x >= 0, "a number >= 0"),
    "rho": (lambda x: _num(x) and 0 < x < 1, "a number in (0, 1)"),
    "mu0": (lambda x: _num(x) and x > 0, "a number > 0"),
    "at": (lambda x: _num(x) and 0 <= x <= 1, "a number in [0, 1]"),
    "kappa": (lambda x: _num(x) and x >= 0, "a number >= 0"),
    "x_list": (lambda x: isinstance(x, list) and all(_num(v) and 0 <= v <= 1 for v in x), "numbers in [0, 1]"),
    "eps": (lambda x: _num(x) and x > 0, "a number > 0"),
    "k": (_num, "a number"),
    "bins": (lambda x: _int(x) and x >= 2, "an integer >= 2"),
}

_EXPERIMENT_DEFAULTS = {
    "gamma": 0.05, "n": 1000, "seed": 0, "n_list": [100, 1000], "seeds": [0], "k_max": 2,
    "mode": "global-min", "slope": 0.3, "rho": 0.2, "mu0": 0.1, "at": 0.0,
}


@dataclass(frozen=True)
class RunConfig:
    potentials: tuple[PotentialSpec, ...]
    ensemble: Ensemble
    class_params: ClassParams = field(default_factory=ClassParams)
    experiment: dict = field(default_factory=dict)
    workers: int = 1

    def get(self, key):
        if key in self.experiment:
            return self.experiment[key]
        return _EXPERIMENT_DEFAULTS.get(key)

    def to_dict(self) -> dict:
        labels = [p.label for p in self.potentials]
        ens = self.ensemble
        e = {"law": ens.law, "support": [s.label for s in ens.support]}
        if ens.label:
            e["label"] = ens.label
        if ens.law == "iid":
            e["probabilities"] = list(ens.probabilities)
        elif ens.law == "markov":
            e["transition"] = [list(r) for r in ens.transition]
            e["stationary"] = list(ens.stationary)
        else:
            e["pattern"] = [ens.support[k].label for k in ens.pattern]
        assert all(lab in labels for lab in e["support"])
        return {
            "potential": [p.to_dict() for p in self.potentials],
            "ensemble": e,
            "class_params": self.class_params.to_dict(),
            "experiment": dict(self.experiment),
            "run": {"workers": self.workers},
        }


def serialize_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def parse_config(path) -> RunConfig:
    text = Path(path).read_text()
    return parse_config_text(text)


def parse_config_text(text: str) -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ConfigParseError(f"parse error: {exc}", line, col) from None
    return config_from_dict(data)


_TOP_KEYS = {"potential", "ensemble", "class_params", "experiment", "run"}


def config_from_dict(data: dict) -> RunConfig:
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ConfigRangeError(sorted(extra)[0], "unknown top-level table")
    blocks = data.get("potential")
    if not isinstance(blocks, list) or not blocks:
        raise ConfigRangeError("potential", "at least one [[potential]] block is required")
    potentials = []
    seen = set()
    for i, b in enumerate(blocks):
        b = dict(b)
        label = b.get("label")
        if not isinstance(label, str) or not label:
            raise ConfigRangeError(f"potential[{i}].label", "a nonempty string is required")
        if label in seen:
            raise ConfigRangeError(f"potential[{i}].label", f"duplicate label {label!r}")
        seen.add(label)
        if "family" not in b:
            raise ConfigRangeError(f"potential[{i}].family", "missing")
        try:
            potentials.append(PotentialSpec.from_dict(b))
        except ValueError as exc:
            raise ConfigRangeError(f"potential[{i}]", str(exc)) from None
    by_label = {p.label: p for p in potentials}

    def resolve(lab, where):
        if lab not in by_label:
            raise UnknownLabelError(lab, where)
        return by_label[lab]

    e = dict(data.get("ensemble", {}))
    law = e.get("law", "periodic")
    if law not in ("iid", "markov", "periodic"):
        raise ConfigRangeError("ensemble.law", f"unknown law {law!r}")
    if "support" in e:
        support = [resolve(lab, "ensemble.support") for lab in e["support"]]
    else:
        support = list(potentials)
    sup_labels = [s.label for s in support]
    kw = {}
    if law == "iid":
        probs = e.get("probabilities")
        if not isinstance(probs, list) or len(probs) != len(support) or not all(_num(p) for p in probs):
            raise ConfigRangeError("probabilities", f"need {len(support)} numbers")
        if any(p < 0 for p in probs) or abs(sum(probs) - 1) > 1e-12:
            raise ConfigRangeError("probabilities", f"must be nonnegative and sum to 1 (sum={sum(probs)!r})")
        kw["probabilities"] = tuple(float(p) for p in probs)
    elif law == "markov":
        for key in ("transition", "stationary"):
            if key not in e:
                raise ConfigRangeError(f"ensemble.{key}", "required for a markov law")
        kw["transition"] = tuple(tuple(float(x) for x in r) for r in e["transition"])
        kw["stationary"] = tuple(float(x) for x in e["stationary"])
    else:
        pat = e.get("pattern", [sup_labels[0]])
        if not isinstance(pat, list) or not pat:
            raise ConfigRangeError("pattern", "a nonempty list of labels is required")
        for lab in pat:
            resolve(lab, "ensemble.pattern")
            if lab not in sup_labels:
                raise UnknownLabelError(lab, "ensemble.pattern (not in support)")
        kw["pattern"] = tuple(sup_labels.index(lab) for lab in pat)
    try:
        ensemble = Ensemble(tuple(support), law, label=e.get("label", ""), **kw)
    except ValueError as exc:
        raise ConfigRangeError("ensemble", str(exc)) from None

    cp = dict(data.get("class_params", {}))
    try:
        class_params = ClassParams(**cp)
    except TypeError as exc:
        raise ConfigRangeError("class_params", str(exc)) from None
    except ValueError as exc:
        raise ConfigRangeError("class_params", str(exc)) from None

    exp = dict(data.get("experiment", {}))
    for key, val in exp.items():
        if key not in _EXPERIMENT_KEYS:
            raise ConfigRangeError(f"experiment.{key}", "unknown key")
        check, desc = _EXPERIMENT_KEYS[key]
        if not check(val):
            raise ConfigRangeError(f"experiment.{key}", f"must be {desc}, got {val!r}")

    run = dict(data.get("run", {}))
    workers = run.get("workers", 1)
    if not (_int(workers) and workers >= 1):
        raise ConfigRangeError("run.workers", "must be an integer >= 1")
    return RunConfig(tuple(potentials), ensemble, class_params, exp, workers)

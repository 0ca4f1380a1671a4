"""Test oracles and the synthetic scenarios that stand in for a real product line.

An oracle labels a configuration +1 (acceptable) or -1 (non-acceptable) and
counts how often it was asked; querying is the expensive step in practice, so
experiments report the count.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .encoding import build_encoder
from .varmodel import (
    BOOLEAN,
    CATEGORICAL,
    NUMERIC,
    Atom,
    Constraint,
    ConfigurationError,
    Implies,
    Not,
    OptionDef,
    VariabilityModel,
    sample_valid,
)

SCENARIOS = ("band2d", "motivlike80")


class Oracle:
    """Wrap a labelling function ``config -> bool`` (True = acceptable)."""

    def __init__(self, name: str, fn: Callable[[Mapping], bool], options: Sequence[str] | None = None):
        self.name = name
        self._fn = fn
        self._options = tuple(options) if options is not None else None
        self._lock = threading.Lock()
        self._queries = 0

    @property
    def queries(self) -> int:
        return self._queries

    def reset(self) -> None:
        with self._lock:
            self._queries = 0

    def _check(self, config: Mapping) -> None:
        if self._options is not None:
            missing = [o for o in self._options if o not in config]
            if missing:
                raise ConfigurationError(f"incomplete configuration, missing {missing}")

    def _count(self) -> None:
        with self._lock:
            self._queries += 1

    def __call__(self, config: Mapping) -> int:
        self._check(config)
        self._count()
        return 1 if self._fn(config) else -1

    def label_many(self, configs) -> list:
        return [self(c) for c in configs]


class CompositeOracle(Oracle):
    """Acceptable iff every named sub-check accepts."""

    def __init__(self, name: str, checks: Sequence[tuple], options: Sequence[str] | None = None):
        super().__init__(name, self._all, options)
        self.checks = list(checks)

    def _all(self, config) -> bool:
        return not self.failed_checks(config)

    def failed_checks(self, config: Mapping) -> list:
        return [name for name, sub in self.checks if sub(config) != 1]

    def explain(self, config: Mapping) -> tuple:
        """Label plus the names of failing sub-checks, counted as one query."""
        self._check(config)
        self._count()
        failed = self.failed_checks(config)
        return (-1 if failed else 1), failed


def label(o: Oracle, c: Mapping) -> int:
    return o(c)


@dataclass
class Scenario:
    name: str
    seed: int
    model: VariabilityModel
    oracle: Oracle


def _band2d(seed: int) -> Scenario:
    model = VariabilityModel(
        (OptionDef("x0", NUMERIC, min=0.0, max=1.0), OptionDef("x1", NUMERIC, min=0.0, max=1.0))
    )

    def inside(c):
        return c["x1"] <= 0.5 + 0.2 * math.sin(2.0 * math.pi * c["x0"])

    return Scenario("band2d", seed, model, Oracle("band2d", inside, model.names))


def _premise(rng, opt: OptionDef) -> Atom:
    # holds for roughly 15-50% of uniform draws
    if opt.kind == BOOLEAN:
        return Atom(opt.name, "==", bool(rng.integers(2)))
    if opt.kind == CATEGORICAL:
        return Atom(opt.name, "==", opt.choices[int(rng.integers(len(opt.choices)))])
    q = float(rng.uniform(0.5, 0.85))
    return Atom(opt.name, ">=", round(opt.min + q * (opt.max - opt.min), 3))


def _consequent(rng, opt: OptionDef):
    # holds for at least half of uniform draws
    if opt.kind == BOOLEAN:
        return Atom(opt.name, "==", bool(rng.integers(2)))
    if opt.kind == CATEGORICAL:
        return Not(Atom(opt.name, "==", opt.choices[int(rng.integers(len(opt.choices)))]))
    q = float(rng.uniform(0.5, 0.85))
    return Atom(opt.name, "<=", round(opt.min + q * (opt.max - opt.min), 3))


def _motivlike80(seed: int) -> Scenario:
    rng = np.random.default_rng([seed, 80])
    kinds = [BOOLEAN] * 8 + [CATEGORICAL] * 24 + [NUMERIC] * 48
    rng.shuffle(kinds)
    counters = {BOOLEAN: 0, CATEGORICAL: 0, NUMERIC: 0}
    options = []
    for kind in kinds:
        k = counters[kind]
        counters[kind] += 1
        if kind == BOOLEAN:
            options.append(OptionDef(f"b{k:02d}", BOOLEAN))
        elif kind == CATEGORICAL:
            n = int(rng.integers(3, 6))
            options.append(OptionDef(f"c{k:02d}", CATEGORICAL, choices=tuple(f"v{j}" for j in range(n))))
        else:
            lo = round(float(rng.uniform(-5.0, 5.0)), 2)
            width = round(float(rng.uniform(0.5, 20.0)), 2)
            options.append(OptionDef(f"n{k:02d}", NUMERIC, min=lo, max=lo + width))

    constraints = []
    for _ in range(10):
        a, b = rng.choice(len(options), size=2, replace=False)
        constraints.append(Constraint(Implies(_premise(rng, options[a]), _consequent(rng, options[b]))))
    model = VariabilityModel(tuple(options), tuple(constraints))

    enc = build_encoder(model)
    d = enc.dimension
    weights = rng.normal(0.0, 1.0, size=d)
    pairs = [tuple(int(i) for i in rng.choice(d, size=2, replace=False)) for _ in range(5)]
    pair_weights = rng.normal(0.0, 2.0, size=5)

    def score(x: np.ndarray) -> float:
        s = float(weights @ x)
        for (i, j), w in zip(pairs, pair_weights):
            s += w * x[i] * x[j]
        return s

    calibration_seed = int(rng.integers(2**31))
    calib = sample_valid(model, 1000, seed=calibration_seed)
    scores = np.sort([score(enc.encode_one(c)) for c in calib])
    # 325 of the 1000 calibration configurations land above the threshold
    threshold = 0.5 * (scores[674] + scores[675])

    def acceptable(c):
        return score(enc.encode_one(c)) <= threshold

    oracle = Oracle("motivlike80", acceptable, model.names)
    oracle.threshold = threshold
    oracle.calibration_seed = calibration_seed
    return Scenario("motivlike80", seed, model, oracle)


def make_scenario(name: str, seed: int = 0) -> Scenario:
    if name == "band2d":
        return _band2d(seed)
    if name == "motivlike80":
        return _motivlike80(seed)
    raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")

"""Gradient-guided evasion of a trained SVM.

A copy of a known point is walked along the normalised gradient of the
decision value, a fixed distance per iteration, toward the target class and
clipped back into the unit box after every move.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_unit_box, check_vector
from .svm import SvmModel

COMPLETED = "completed"
STATIONARY = "stationary"
EARLY_STOPPED = "early_stopped"

STATIONARY_NORM = 1e-12


@dataclass(frozen=True)
class AttackParams:
    target: int = 1
    step: float = 0.002
    iterations: int = 100
    early_stop: bool = False
    frozen_features: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.target not in (-1, 1):
            raise ValueError("target must be -1 or +1")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        object.__setattr__(self, "frozen_features", frozenset(int(i) for i in self.frozen_features))


@dataclass(frozen=True, eq=False)
class AttackTrace:
    points: np.ndarray  # (len, d)
    decisions: np.ndarray  # (len,)
    status: str

    @property
    def source(self) -> np.ndarray:
        return self.points[0]

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    @property
    def moves(self) -> int:
        return len(self.points) - 1

    def gain(self, target: int) -> float:
        """Change of ``target * g`` from start to end."""
        return float(target * (self.decisions[-1] - self.decisions[0]))

    def crossed(self, target: int) -> bool:
        """True if the walk started off the target side and ended on it."""
        start, end = self.decisions[0], self.decisions[-1]
        on_target = (lambda g: g >= 0.0) if target == 1 else (lambda g: g < 0.0)
        return not on_target(start) and on_target(end)


def _reached(g: float, target: int) -> bool:
    return g >= 0.0 if target == 1 else g < 0.0


def evade(m: SvmModel, x0, p: AttackParams = AttackParams()) -> AttackTrace:
    x = check_vector(x0, m.dim).copy()
    check_unit_box(x, "x0")
    frozen = sorted(i for i in p.frozen_features if 0 <= i < m.dim)
    if len(frozen) != len(p.frozen_features):
        raise ValueError("frozen feature index out of range")
    points = [x.copy()]
    decisions = [m.decision(x)]
    status = COMPLETED
    for _ in range(p.iterations):
        if p.early_stop and _reached(decisions[-1], p.target):
            status = EARLY_STOPPED
            break
        grad = m.gradient(x)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient")
        grad[frozen] = 0.0
        norm = float(np.linalg.norm(grad))
        if norm < STATIONARY_NORM:
            status = STATIONARY
            break
        x = np.clip(x + (p.step * p.target / norm) * grad, 0.0, 1.0)
        points.append(x.copy())
        decisions.append(m.decision(x))
    return AttackTrace(np.array(points), np.array(decisions), status)


def batch_evade(m: SvmModel, sources, p: AttackParams = AttackParams(), threads: int = 1) -> list:
    """Run :func:`evade` on every source; output order matches input order."""
    sources = [check_vector(s, m.dim) for s in sources]
    if threads <= 1 or len(sources) < 2:
        return [evade(m, s, p) for s in sources]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: evade(m, s, p), sources))


class GradientEvasion(BaseEstimator):
    """Estimator-style wrapper: ``transform`` maps sources to attack endpoints.

    Parameters mirror :class:`AttackParams`; ``fit`` takes the model to attack.
    """

    def __init__(self, target=1, step=0.002, iterations=100, early_stop=False,
                 frozen_features=(), threads=1):
        self.target = target
        self.step = step
        self.iterations = iterations
        self.early_stop = early_stop
        self.frozen_features = frozen_features
        self.threads = threads

    def fit(self, model: SvmModel, y=None):
        self.model_ = model
        return self

    def attack_params(self) -> AttackParams:
        return AttackParams(self.target, self.step, self.iterations, self.early_stop,
                            frozenset(self.frozen_features))

    def traces(self, X) -> list:
        return batch_evade(self.model_, list(np.atleast_2d(X)), self.attack_params(), self.threads)

    def transform(self, X) -> np.ndarray:
        return np.array([t.endpoint for t in self.traces(X)])


def traces_to_csv(traces) -> str:
    """Concatenated trace export; a row with ``iter == 0`` starts a new trace."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    d = traces[0].points.shape[1] if traces else 0
    writer.writerow(["iter", "g"] + [f"coord_{k}" for k in range(d)])
    for t in traces:
        for it, (pt, g) in enumerate(zip(t.points, t.decisions)):
            writer.writerow([it, repr(float(g))] + [repr(float(v)) for v in pt])
    return buf.getvalue()

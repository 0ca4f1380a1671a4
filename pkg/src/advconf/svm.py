"""Soft-margin kernel SVM trained with simplified SMO.

The fitted model exposes its decision value ``g(x)`` and the analytic gradient
of ``g`` with respect to the input, which is what the evasion attack follows.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_labels, check_matrix, check_vector

logger = logging.getLogger(__name__)

KERNELS = ("linear", "rbf")
_CHUNK = 64


class DegenerateTrainingSet(ValueError):
    pass


@dataclass(frozen=True)
class TrainParams:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: float | None = None  # None -> 1 / d
    tol: float = 1e-3
    max_passes: int = 10
    seed: int = 0
    max_updates: int = 200_000

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")


@dataclass(frozen=True, eq=False)
class SvmModel:
    """A trained SVM: ``g(x) = sum_i dual_coeffs[i] * k(x, sv_i) + bias``."""

    support_vectors: np.ndarray
    dual_coeffs: np.ndarray
    bias: float
    kernel: str
    gamma: float
    dim: int

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=float).reshape(-1, self.dim)
        coef = np.asarray(self.dual_coeffs, dtype=float).reshape(-1)
        if len(sv) != len(coef):
            raise ValueError("support_vectors and dual_coeffs differ in length")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coeffs", coef)
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "gamma", float(self.gamma))

    def _kernel_rows(self, X: np.ndarray) -> np.ndarray:
        # Elementwise reductions, so a row's value does not depend on how many
        # rows are evaluated together.
        sv = self.support_vectors
        if self.kernel == "linear":
            return (X[:, None, :] * sv[None, :, :]).sum(axis=-1)
        diff = X[:, None, :] - sv[None, :, :]
        return np.exp(-self.gamma * (diff * diff).sum(axis=-1))

    def decision_function(self, X) -> np.ndarray:
        X = check_matrix(X, self.dim)
        out = np.empty(len(X))
        for start in range(0, len(X), _CHUNK):
            K = self._kernel_rows(X[start:start + _CHUNK])
            out[start:start + _CHUNK] = (K * self.dual_coeffs).sum(axis=1) + self.bias
        return out

    def decision(self, x) -> float:
        x = check_vector(x, self.dim)
        return float(self.decision_function(x[None, :])[0])

    def predict(self, X) -> np.ndarray:
        # g == 0 predicts +1
        return np.where(self.decision_function(X) >= 0.0, 1, -1)

    def gradient(self, x) -> np.ndarray:
        x = check_vector(x, self.dim)
        if self.kernel == "linear":
            return (self.dual_coeffs[:, None] * self.support_vectors).sum(axis=0)
        diff = x[None, :] - self.support_vectors
        k = np.exp(-self.gamma * (diff * diff).sum(axis=1))
        return (-2.0 * self.gamma) * ((self.dual_coeffs * k)[:, None] * diff).sum(axis=0)

    def to_json(self) -> str:
        return dumps_model(self)

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        return loads_model(text)


def _num(x: float) -> str:
    return format(float(x), ".17g")


def dumps_model(m: SvmModel) -> str:
    """Serialise with 17 significant digits so floats round-trip bit-exactly."""
    sv = ",".join("[" + ",".join(_num(v) for v in row) + "]" for row in m.support_vectors)
    coef = ",".join(_num(v) for v in m.dual_coeffs)
    return (
        "{"
        f'"kernel":"{m.kernel}","gamma":{_num(m.gamma)},"bias":{_num(m.bias)},"dim":{m.dim},'
        f'"support_vectors":[{sv}],"dual_coeffs":[{coef}]'
        "}\n"
    )


def loads_model(text: str) -> SvmModel:
    doc = json.loads(text)
    dim = int(doc["dim"])
    return SvmModel(
        support_vectors=np.array(doc["support_vectors"], dtype=float).reshape(-1, dim),
        dual_coeffs=np.array(doc["dual_coeffs"], dtype=float),
        bias=float(doc["bias"]),
        kernel=doc["kernel"],
        gamma=float(doc.get("gamma", 0.0)),
        dim=dim,
    )


def _gram(X: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    G = X @ X.T
    if kernel == "linear":
        return G
    sq = np.diag(G)
    D = np.maximum(sq[:, None] + sq[None, :] - 2.0 * G, 0.0)
    return np.exp(-gamma * D)


def _violators(alpha, yE, C, tol):
    return ((yE < -tol) & (alpha < C)) | ((yE > tol) & (alpha > 0))


def _kkt_bias(alpha, y, f0, C):
    """Bias consistent with the KKT conditions for fixed multipliers.

    ``f0`` is the decision value without bias. Free multipliers pin the bias
    (their mean is used); with none free, take the midpoint of the interval
    allowed by the bound ones.
    """
    r = y - f0  # bias that puts each point exactly on its margin
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(np.mean(r[free]))
    at_c = alpha >= C
    lower = r[(~at_c & (y > 0)) | (at_c & (y < 0))]
    upper = r[(~at_c & (y < 0)) | (at_c & (y > 0))]
    if len(lower) and len(upper):
        return float(0.5 * (lower.max() + upper.min()))
    return float(lower.max() if len(lower) else upper.min())


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_passes: int, rng, max_updates: int):
    """Simplified SMO on a precomputed Gram matrix; returns ``(alpha, b)``.

    The second index is drawn at random; if that pair cannot make progress
    every other index is tried and the one allowing the largest step wins.
    Once ``max_passes`` consecutive sweeps change nothing, the bias is reset
    from the KKT conditions, the error cache is recomputed from scratch and
    the sweep restarts if any KKT violation remains. If a second idle round
    follows, the solver gives up with a warning; otherwise a return satisfies
    KKT to ``tol``.
    """
    n = len(y)
    alpha = np.zeros(n)
    b = 0.0
    E = -y.astype(float)  # f(x_i) - y_i with alpha = 0, b = 0
    diagK = np.diag(K).copy()
    updates = 0

    def step(i, j):
        nonlocal b
        ai, aj = alpha[i], alpha[j]
        if y[i] == y[j]:
            L, H = max(0.0, ai + aj - C), min(C, ai + aj)
        else:
            L, H = max(0.0, aj - ai), min(C, C + aj - ai)
        if H - L < 1e-12:
            return False
        eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
        if eta >= 0:
            return False
        aj_new = min(max(aj - y[j] * (E[i] - E[j]) / eta, L), H)
        if abs(aj_new - aj) < 1e-5 * (aj_new + aj + 1e-5):
            return False
        ai_new = ai + y[i] * y[j] * (aj - aj_new)
        dai, daj = ai_new - ai, aj_new - aj
        b1 = b - E[i] - y[i] * dai * K[i, i] - y[j] * daj * K[i, j]
        b2 = b - E[j] - y[i] * dai * K[i, j] - y[j] * daj * K[j, j]
        if 0 < ai_new < C:
            b_new = b1
        elif 0 < aj_new < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)
        E[:] += y[i] * dai * K[i] + y[j] * daj * K[j] + (b_new - b)
        alpha[i], alpha[j], b = ai_new, aj_new, b_new
        # clip accumulated round-off at the box edges
        for k in (i, j):
            if alpha[k] < 1e-12 * C:
                alpha[k] = 0.0
            elif alpha[k] > C * (1 - 1e-12):
                alpha[k] = C
        return True

    def best_partner(i):
        # largest feasible |delta alpha_j| over all j != i
        ai = alpha[i]
        same = y == y[i]
        L = np.where(same, np.maximum(0.0, ai + alpha - C), np.maximum(0.0, alpha - ai))
        H = np.where(same, np.minimum(C, ai + alpha), np.minimum(C, C + alpha - ai))
        eta = 2.0 * K[i] - diagK[i] - diagK
        with np.errstate(divide="ignore", invalid="ignore"):
            aj_new = np.clip(alpha - y * (E[i] - E) / eta, L, H)
        gain = np.abs(aj_new - alpha)
        gain[(eta >= 0) | (H - L < 1e-12)] = -1.0
        gain[i] = -1.0
        j = int(np.argmax(gain))
        return j if gain[j] > 0 else None

    passes = 0
    refreshed = False
    while updates < max_updates:
        changed = 0
        for i in range(n):
            yEi = y[i] * E[i]
            if not ((yEi < -tol and alpha[i] < C) or (yEi > tol and alpha[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            j += j >= i
            moved = step(i, j)
            if not moved:
                j = best_partner(i)
                moved = j is not None and step(i, j)
            if moved:
                changed += 1
                updates += 1
        if changed:
            passes = 0
            refreshed = False
            continue
        passes += 1
        if passes >= max_passes:
            f0 = K @ (alpha * y)
            b = _kkt_bias(alpha, y, f0, C)
            E[:] = f0 + b - y
            if not _violators(alpha, y * E, C, tol).any():
                break
            if refreshed:
                # fresh errors and still no pair can move: numerically stuck
                logger.warning("SMO stalled with %d KKT violators", int(_violators(alpha, y * E, C, tol).sum()))
                break
            refreshed = True
            passes = 0
    else:
        logger.warning("SMO stopped after %d updates without full convergence", updates)
    return alpha, b


def train_svm(X, y, params: TrainParams = TrainParams()) -> SvmModel:
    X = check_matrix(X)
    y = check_labels(y, len(X))
    if len(np.unique(y)) < 2:
        raise DegenerateTrainingSet("degenerate training set: both labels -1 and +1 are required")
    d = X.shape[1]
    gamma = (1.0 / d if params.gamma is None else params.gamma) if params.kernel == "rbf" else 0.0
    K = _gram(X, params.kernel, gamma)
    rng = np.random.default_rng(params.seed)
    alpha, b = smo(K, y.astype(float), params.C, params.tol, params.max_passes, rng, params.max_updates)
    sv = alpha > 0
    return SvmModel(
        support_vectors=X[sv].copy(),
        dual_coeffs=alpha[sv] * y[sv],
        bias=b,
        kernel=params.kernel,
        gamma=gamma,
        dim=d,
    )


def decision(m: SvmModel, x) -> float:
    return m.decision(x)


def gradient(m: SvmModel, x) -> np.ndarray:
    return m.gradient(x)


@dataclass(frozen=True)
class Metrics:
    error_rate: float
    true_pos: int
    true_neg: int
    false_pos: int
    false_neg: int
    mean_abs_g: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def evaluate(m: SvmModel, X, y) -> Metrics:
    X = check_matrix(X, m.dim)
    y = check_labels(y, len(X))
    if len(X) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    g = m.decision_function(X)
    pred = np.where(g >= 0.0, 1, -1)
    return Metrics(
        error_rate=float(np.mean(pred != y)),
        true_pos=int(np.sum((pred == 1) & (y == 1))),
        true_neg=int(np.sum((pred == -1) & (y == -1))),
        false_pos=int(np.sum((pred == 1) & (y == -1))),
        false_neg=int(np.sum((pred == -1) & (y == 1))),
        mean_abs_g=float(np.mean(np.abs(g))),
    )


class SMOClassifier(ClassifierMixin, BaseEstimator):
    """Binary kernel SVM (labels -1/+1) fitted by simplified SMO.

    Parameters
    ----------
    C : float, default 1.0
    kernel : {"rbf", "linear"}, default "rbf"
    gamma : float or None, default None
        RBF width; None means ``1 / n_features``.
    tol : float, default 1e-3
        KKT tolerance.
    max_passes : int, default 10
    random_state : int, default 0
        Seeds the choice of the second SMO index.
    """

    def __init__(self, C=1.0, kernel="rbf", gamma=None, tol=1e-3, max_passes=10, random_state=0):
        self.C = C
        self.kernel = kernel
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes
        self.random_state = random_state

    def _params(self) -> TrainParams:
        return TrainParams(
            C=self.C, kernel=self.kernel, gamma=self.gamma, tol=self.tol,
            max_passes=self.max_passes, seed=self.random_state,
        )

    def fit(self, X, y):
        self.model_ = train_svm(X, y, self._params())
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = self.model_.dim
        self.support_vectors_ = self.model_.support_vectors
        self.dual_coef_ = self.model_.dual_coeffs
        self.intercept_ = self.model_.bias
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return self.model_.decision_function(X)

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(X)

    def gradient(self, x):
        check_is_fitted(self, "model_")
        return self.model_.gradient(x)

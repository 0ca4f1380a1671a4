"""Distil a classifier into a decision tree and turn its rejecting leaves into constraints.

Every leaf predicting -1 yields one constraint forbidding the conjunction of
the tests on its root path, so a configuration reaches a rejecting leaf
exactly when it violates one of the injected constraints.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_labels, check_matrix
from .encoding import ConfigEncoder
from .svm import SvmModel
from .varmodel import (
    Atom,
    And,
    Constraint,
    Not,
    Or,
    VariabilityModel,
    check_expr,
    format_expr,
    parse_constraint,
    sample_valid,
)

_GINI_EPS = 1e-12


@dataclass
class Leaf:
    label: int
    n_neg: int
    n_pos: int

    @property
    def count(self) -> int:
        return self.n_neg + self.n_pos


@dataclass
class Split:
    slot: int
    threshold: float
    left: "Leaf | Split"  # x[slot] < threshold
    right: "Leaf | Split"  # x[slot] >= threshold


def _gini(n_neg, n_pos):
    n = n_neg + n_pos
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n > 0, n_pos / n, 0.0)
    return 2.0 * p * (1.0 - p)


def _leaf(y: np.ndarray) -> Leaf:
    n_pos = int(np.sum(y == 1))
    n_neg = len(y) - n_pos
    # majority vote, ties go to +1
    return Leaf(1 if n_pos >= n_neg else -1, n_neg, n_pos)


def _best_split(X: np.ndarray, y: np.ndarray):
    """Lowest weighted Gini over midpoints of sorted unique values.

    Ties keep the earliest candidate: lower slot first, then lower threshold.
    """
    n = len(y)
    best = None
    best_score = np.inf
    for slot in range(X.shape[1]):
        order = np.argsort(X[:, slot], kind="stable")
        xs, ys = X[order, slot], y[order]
        cut = np.flatnonzero(xs[1:] > xs[:-1])  # split after position cut
        if len(cut) == 0:
            continue
        pos_left = np.cumsum(ys == 1)[cut]
        n_left = cut + 1
        n_right = n - n_left
        pos_right = int(np.sum(ys == 1)) - pos_left
        score = (
            n_left * _gini(n_left - pos_left, pos_left)
            + n_right * _gini(n_right - pos_right, pos_right)
        ) / n
        k = int(np.argmin(score))
        if score[k] < best_score - _GINI_EPS:
            best_score = score[k]
            best = (slot, 0.5 * (xs[cut[k]] + xs[cut[k] + 1]))
    return best, best_score


def _grow(X, y, depth, max_depth):
    leaf = _leaf(y)
    if depth >= max_depth or leaf.n_neg == 0 or leaf.n_pos == 0:
        return leaf
    split, score = _best_split(X, y)
    if split is None or score >= _gini(leaf.n_neg, leaf.n_pos) - _GINI_EPS:
        return leaf
    slot, thr = split
    go_left = X[:, slot] < thr
    return Split(
        slot, float(thr),
        _grow(X[go_left], y[go_left], depth + 1, max_depth),
        _grow(X[~go_left], y[~go_left], depth + 1, max_depth),
    )


class GiniTree(ClassifierMixin, BaseEstimator):
    """CART classifier for -1/+1 labels with Gini impurity and exhaustive thresholds.

    Parameters
    ----------
    max_depth : int, default 4
    """

    def __init__(self, max_depth=4):
        self.max_depth = max_depth

    def fit(self, X, y):
        X = check_matrix(X)
        y = check_labels(y, len(X))
        if len(X) == 0:
            raise ValueError("cannot fit a tree on zero samples")
        if self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        self.tree_ = _grow(X, y, 0, self.max_depth)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([-1, 1])
        return self

    def apply_one(self, x) -> Leaf:
        check_is_fitted(self, "tree_")
        node = self.tree_
        while isinstance(node, Split):
            node = node.left if x[node.slot] < node.threshold else node.right
        return node

    def predict(self, X):
        X = check_matrix(X, self.n_features_in_)
        return np.array([self.apply_one(x).label for x in X], dtype=int)

    @property
    def depth(self) -> int:
        def walk(node):
            return 0 if isinstance(node, Leaf) else 1 + max(walk(node.left), walk(node.right))
        return walk(self.tree_)

    def leaves(self) -> list:
        """Leaves with their root paths, left subtree first.

        Each path entry is ``(slot, threshold, went_right)``.
        """
        out = []

        def walk(node, path):
            if isinstance(node, Leaf):
                out.append((node, path))
            else:
                walk(node.left, path + [(node.slot, node.threshold, False)])
                walk(node.right, path + [(node.slot, node.threshold, True)])

        walk(self.tree_, [])
        return out

    def export_text(self, slot_names=None) -> str:
        lines = []

        def walk(node, indent):
            pad = "  " * indent
            if isinstance(node, Leaf):
                lines.append(f"{pad}leaf {node.label} {node.count}")
                return
            name = slot_names[node.slot] if slot_names is not None else f"x{node.slot}"
            lines.append(f"{pad}slot {name} < {node.threshold!r}")
            walk(node.left, indent + 1)
            walk(node.right, indent + 1)

        walk(self.tree_, 0)
        return "\n".join(lines) + "\n"


def distill_tree(m: SvmModel, enc: ConfigEncoder, model: VariabilityModel,
                 n_samples: int = 2000, max_depth: int = 4, seed: int = 0) -> GiniTree:
    """Fit a tree to the SVM's predictions on freshly sampled valid configurations."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    X = enc.transform(sample_valid(model, n_samples, seed))
    return GiniTree(max_depth=max_depth).fit(X, m.predict(X))


def fidelity(tree: GiniTree, m: SvmModel, enc: ConfigEncoder, model: VariabilityModel,
             n_samples: int = 1000, seed: int = 1) -> float:
    """Fraction of fresh valid configurations where tree and SVM agree."""
    X = enc.transform(sample_valid(model, n_samples, seed))
    return float(np.mean(tree.predict(X) == m.predict(X)))


def _atom(slot, threshold: float, went_right: bool):
    """Option-level test for one tree edge; None if always true, False if never."""
    if slot.kind == "numeric":
        value = slot.min + threshold * (slot.max - slot.min)
        return Atom(slot.option, ">=" if went_right else "<", float(value))
    # 0/1 slots: x >= t holds for x == 1 iff 0 < t <= 1
    if threshold <= 0.0:
        return None if went_right else False
    if threshold > 1.0:
        return False if went_right else None
    if slot.kind == "boolean":
        return Atom(slot.option, "==", went_right)
    atom = Atom(slot.option, "==", slot.choice)
    return atom if went_right else Not(atom)


def extract_constraints(tree: GiniTree, enc: ConfigEncoder) -> list:
    """One constraint per -1 leaf: the negated conjunction of its path tests."""
    constraints = []
    for leaf, path in tree.leaves():
        if leaf.label != -1:
            continue
        atoms = [_atom(enc.layout_[slot], thr, right) for slot, thr, right in path]
        if any(a is False for a in atoms):
            continue  # no encoded configuration reaches this leaf
        atoms = [a for a in atoms if a is not None]
        if not atoms:
            # the leaf accepts everything; forbid everything with "a || !a"
            first = enc.layout_[0]
            probe = _atom(first, 0.5, True)
            constraints.append(Constraint(Not(Or(probe, Not(probe)))))
            continue
        conj = atoms[0]
        for a in atoms[1:]:
            conj = And(conj, a)
        constraints.append(Constraint(Not(conj)))
    return constraints


def inject_constraints(model: VariabilityModel, cs) -> VariabilityModel:
    """New model with ``cs`` appended; strings are parsed in the model's grammar."""
    parsed = []
    by_name = {o.name: o for o in model.options}
    for c in cs:
        if isinstance(c, str):
            c = Constraint(parse_constraint(c))
        check_expr(c.expr, by_name)
        parsed.append(c)
    if not parsed:
        return model
    return VariabilityModel(model.options, model.constraints + tuple(parsed))


def format_constraints(cs) -> str:
    return "".join(format_expr(c.expr) + "\n" for c in cs)


def parse_constraints(text: str) -> list:
    return [Constraint(parse_constraint(line)) for line in text.splitlines() if line.strip()]


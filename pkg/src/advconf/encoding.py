"""Configuration <-> feature-vector mapping.

Booleans become one 0/1 slot, categorical options one slot per choice
(one-hot), numeric options one min-max normalised slot. ``inverse_transform``
snaps arbitrary real vectors back to configurations, which is what the attack
needs after moving points continuously.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .varmodel import BOOLEAN, CATEGORICAL, NUMERIC, ConfigurationError, VariabilityModel


@dataclass(frozen=True)
class Slot:
    kind: str  # "boolean" | "onehot" | "numeric"
    option: str
    choice: str | None = None
    min: float | None = None
    max: float | None = None

    @property
    def name(self) -> str:
        if self.kind == "onehot":
            return f"{self.option}={self.choice}"
        return self.option


def _layout(model: VariabilityModel) -> tuple:
    slots = []
    for opt in model.options:
        if opt.kind == BOOLEAN:
            slots.append(Slot("boolean", opt.name))
        elif opt.kind == CATEGORICAL:
            slots.extend(Slot("onehot", opt.name, choice=c) for c in opt.choices)
        else:
            slots.append(Slot("numeric", opt.name, min=opt.min, max=opt.max))
    return tuple(slots)


class ConfigEncoder(TransformerMixin, BaseEstimator):
    """Encode configurations of a variability model into ``[0, 1]^d``.

    Parameters
    ----------
    model : VariabilityModel
        The model whose options define the layout. Slots follow model option
        order, with one-hot groups in declared choice order.

    Attributes
    ----------
    layout_ : tuple of Slot
    n_features_out_ : int
    """

    def __init__(self, model: VariabilityModel):
        self.model = model

    def fit(self, X=None, y=None):
        self.layout_ = _layout(self.model)
        self.n_features_out_ = len(self.layout_)
        groups, pos = [], 0
        for opt in self.model.options:
            width = len(opt.choices) if opt.kind == CATEGORICAL else 1
            groups.append((opt, pos, width))
            pos += width
        self._groups = groups
        return self

    @property
    def dimension(self) -> int:
        check_is_fitted(self, "layout_")
        return self.n_features_out_

    @property
    def slot_names(self) -> list:
        return [s.name for s in self.layout_]

    def encode_one(self, config: Mapping) -> np.ndarray:
        check_is_fitted(self, "layout_")
        x = np.zeros(self.n_features_out_)
        for opt, pos, width in self._groups:
            if opt.name not in config:
                raise ConfigurationError(f"missing assignment for {opt.name}")
            v = config[opt.name]
            if not opt.contains(v):
                raise ConfigurationError(f"value {v!r} outside domain of {opt.name}")
            if opt.kind == BOOLEAN:
                x[pos] = 1.0 if v else 0.0
            elif opt.kind == CATEGORICAL:
                x[pos + opt.choices.index(v)] = 1.0
            else:
                x[pos] = (float(v) - opt.min) / (opt.max - opt.min)
        return x

    def project_one(self, x) -> dict:
        check_is_fitted(self, "layout_")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features_out_,):
            raise ValueError(f"expected vector of dimension {self.n_features_out_}, got shape {x.shape}")
        config = {}
        for opt, pos, width in self._groups:
            if opt.kind == BOOLEAN:
                config[opt.name] = bool(x[pos] >= 0.5)
            elif opt.kind == CATEGORICAL:
                # np.argmax returns the first maximum: lowest declared index wins ties
                config[opt.name] = opt.choices[int(np.argmax(x[pos:pos + width]))]
            else:
                t = min(max(float(x[pos]), 0.0), 1.0)
                v = t * (opt.max - opt.min) + opt.min
                config[opt.name] = min(max(v, opt.min), opt.max)
        return config

    def transform(self, X: Iterable[Mapping]) -> np.ndarray:
        configs = list(X)
        if not configs:
            return np.zeros((0, self.dimension))
        return np.vstack([self.encode_one(c) for c in configs])

    def inverse_transform(self, X) -> list:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return [self.project_one(row) for row in X]


def build_encoder(model: VariabilityModel) -> ConfigEncoder:
    return ConfigEncoder(model).fit()


def encode(enc: ConfigEncoder, config: Mapping) -> np.ndarray:
    return enc.encode_one(config)


def project(enc: ConfigEncoder, x) -> dict:
    return enc.project_one(x)


def configs_equal(model: VariabilityModel, a: Mapping, b: Mapping, rtol: float = 1e-12) -> bool:
    """Equality of configurations, numeric values compared to ``rtol`` of the domain width.

    Min-max normalisation followed by denormalisation is not always exact in
    binary floating point, so numeric round-trips can differ in the last bits.
    """
    for opt in model.options:
        va, vb = a[opt.name], b[opt.name]
        if opt.kind == NUMERIC:
            if abs(float(va) - float(vb)) > rtol * (opt.max - opt.min):
                return False
        elif va != vb:
            return False
    return True

"""Variability models: options, cross-tree constraints, validation and sampling.

A model is a list of typed options plus boolean constraints written in a small
text grammar::

    expr := atom | "!" expr | expr "&&" expr | expr "||" expr
          | expr "=>" expr | "(" expr ")"
    atom := name ("==" | "<" | "<=" | ">" | ">=") literal

Precedence from tightest to loosest is ``!``, ``&&``, ``||``, ``=>``; the
implication is right-associative. Configurations are plain ``dict`` objects
mapping option names to ``bool``, ``str`` (a declared choice) or ``float``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

BOOLEAN = "boolean"
CATEGORICAL = "categorical"
NUMERIC = "numeric"
KINDS = (BOOLEAN, CATEGORICAL, NUMERIC)

Value = Union[bool, str, float]
Configuration = dict


class ModelError(ValueError):
    """Raised for malformed model documents or constraints."""


class ConfigurationError(ValueError):
    """Raised when a configuration is not total over a model."""


class SamplingBudgetExceeded(RuntimeError):
    pass


_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


@dataclass(frozen=True)
class OptionDef:
    name: str
    kind: str
    choices: tuple = ()
    min: float | None = None
    max: float | None = None

    def __post_init__(self):
        if not isinstance(self.name, str) or not _IDENT.match(self.name):
            raise ModelError(f"invalid option name {self.name!r}")
        if self.kind not in KINDS:
            raise ModelError(f"unknown option kind {self.kind!r} for {self.name}")
        if self.kind == CATEGORICAL:
            choices = tuple(self.choices)
            if len(choices) < 2:
                raise ModelError(f"categorical option {self.name} needs at least 2 choices")
            if len(set(choices)) != len(choices):
                raise ModelError(f"duplicate choices in option {self.name}")
            for c in choices:
                if not isinstance(c, str) or not _IDENT.match(c) or c in ("true", "false"):
                    raise ModelError(f"invalid choice {c!r} in option {self.name}")
            object.__setattr__(self, "choices", choices)
        if self.kind == NUMERIC:
            try:
                lo, hi = float(self.min), float(self.max)
            except (TypeError, ValueError):
                raise ModelError(f"numeric option {self.name} needs min and max") from None
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ModelError(f"non-finite bounds for option {self.name}")
            if lo >= hi:
                raise ModelError(f"empty numeric domain for option {self.name}")
            object.__setattr__(self, "min", lo)
            object.__setattr__(self, "max", hi)

    def contains(self, value) -> bool:
        if self.kind == BOOLEAN:
            return isinstance(value, (bool, np.bool_))
        if self.kind == CATEGORICAL:
            return value in self.choices
        if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, float, np.number)):
            return False
        return self.min <= float(value) <= self.max

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.kind == CATEGORICAL:
            d["choices"] = list(self.choices)
        elif self.kind == NUMERIC:
            d["min"] = self.min
            d["max"] = self.max
        return d


# --------------------------------------------------------------------------
# Constraint expressions

@dataclass(frozen=True)
class Atom:
    option: str
    op: str
    value: Value

    def evaluate(self, config: Mapping) -> bool:
        v = config[self.option]
        if self.op == "==":
            return v == self.value
        v = float(v)
        if self.op == "<":
            return v < self.value
        if self.op == "<=":
            return v <= self.value
        if self.op == ">":
            return v > self.value
        return v >= self.value


@dataclass(frozen=True)
class Not:
    operand: "Expr"

    def evaluate(self, config):
        return not self.operand.evaluate(config)


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"

    def evaluate(self, config):
        return self.left.evaluate(config) and self.right.evaluate(config)


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"

    def evaluate(self, config):
        return self.left.evaluate(config) or self.right.evaluate(config)


@dataclass(frozen=True)
class Implies:
    left: "Expr"
    right: "Expr"

    def evaluate(self, config):
        return (not self.left.evaluate(config)) or self.right.evaluate(config)


Expr = Union[Atom, Not, And, Or, Implies]

_PREC = {Implies: 1, Or: 2, And: 3}
_SYMBOL = {Implies: "=>", Or: "||", And: "&&"}


def format_literal(value: Value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    return repr(float(value))


def format_expr(expr: Expr) -> str:
    """Render an expression in canonical text form (parses back to the same tree)."""
    if isinstance(expr, Atom):
        return f"{expr.option} {expr.op} {format_literal(expr.value)}"
    if isinstance(expr, Not):
        return f"!({format_expr(expr.operand)})"
    prec = _PREC[type(expr)]
    left, right = format_expr(expr.left), format_expr(expr.right)
    lp = _PREC.get(type(expr.left), 4)
    rp = _PREC.get(type(expr.right), 4)
    # && and || associate left, => associates right
    if lp < prec or (lp == prec and isinstance(expr, Implies)):
        left = f"({left})"
    if rp < prec or (rp == prec and not isinstance(expr, Implies)):
        right = f"({right})"
    return f"{left} {_SYMBOL[type(expr)]} {right}"


_TOKEN = re.compile(
    r"\s*(?:(?P<op>==|<=|>=|<|>|&&|\|\||=>|!|\(|\))"
    r"|(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.\-]*))"
)


def _tokenize(text: str) -> list:
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ModelError(f"unexpected character at {pos} in constraint {text!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            want = value or "token"
            raise ModelError(f"expected {want} in constraint {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Expr:
        expr = self.implies()
        if self.i != len(self.tokens):
            raise ModelError(f"trailing input in constraint {self.text!r}")
        return expr

    def implies(self):
        left = self.disjunction()
        if self.peek() == ("op", "=>"):
            self.take()
            return Implies(left, self.implies())
        return left

    def disjunction(self):
        expr = self.conjunction()
        while self.peek() == ("op", "||"):
            self.take()
            expr = Or(expr, self.conjunction())
        return expr

    def conjunction(self):
        expr = self.unary()
        while self.peek() == ("op", "&&"):
            self.take()
            expr = And(expr, self.unary())
        return expr

    def unary(self):
        tok = self.peek()
        if tok == ("op", "!"):
            self.take()
            return Not(self.unary())
        if tok == ("op", "("):
            self.take()
            expr = self.implies()
            self.take(")")
            return expr
        if tok[0] != "name":
            raise ModelError(f"expected option name in constraint {self.text!r}")
        name = self.take()[1]
        kind, op = self.take()
        if kind != "op" or op not in ("==", "<", "<=", ">", ">="):
            raise ModelError(f"expected comparison after {name!r} in constraint {self.text!r}")
        kind, lit = self.take()
        if kind == "num":
            value = float(lit)
        elif kind == "name":
            value = {"true": True, "false": False}.get(lit, lit)
        else:
            raise ModelError(f"expected literal after {name} {op} in constraint {self.text!r}")
        return Atom(name, op, value)


def parse_constraint(text: str, options: Sequence[OptionDef] | None = None) -> Expr:
    """Parse constraint text; with ``options`` also type-check every atom."""
    expr = _Parser(text).parse()
    if options is not None:
        check_expr(expr, {o.name: o for o in options})
    return expr


def _atoms(expr: Expr):
    if isinstance(expr, Atom):
        yield expr
    elif isinstance(expr, Not):
        yield from _atoms(expr.operand)
    else:
        yield from _atoms(expr.left)
        yield from _atoms(expr.right)


def check_expr(expr: Expr, by_name: Mapping[str, OptionDef]) -> None:
    for atom in _atoms(expr):
        opt = by_name.get(atom.option)
        if opt is None:
            raise ModelError(f"constraint references unknown option {atom.option!r}")
        if opt.kind == BOOLEAN:
            ok = atom.op == "==" and isinstance(atom.value, bool)
        elif opt.kind == CATEGORICAL:
            ok = atom.op == "==" and atom.value in opt.choices
        else:
            ok = atom.op != "==" and isinstance(atom.value, float) and math.isfinite(atom.value)
        if not ok:
            raise ModelError(
                f"type-mismatched atom '{format_expr(atom)}' for {opt.kind} option {opt.name}"
            )


@dataclass(frozen=True)
class Constraint:
    expr: Expr

    @property
    def text(self) -> str:
        return format_expr(self.expr)

    def evaluate(self, config: Mapping) -> bool:
        return self.expr.evaluate(config)

    def __str__(self):
        return self.text


# --------------------------------------------------------------------------
# Models

@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    violations: tuple = ()
    domain_errors: tuple = ()


@dataclass(frozen=True)
class VariabilityModel:
    options: tuple
    constraints: tuple = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        options = tuple(self.options)
        if not options:
            raise ModelError("model has no options")
        names = [o.name for o in options]
        if len(set(names)) != len(names):
            raise ModelError("duplicate option names")
        object.__setattr__(self, "options", options)
        object.__setattr__(self, "_index", {o.name: o for o in options})
        constraints = tuple(
            c if isinstance(c, Constraint) else Constraint(parse_constraint(c)) for c in self.constraints
        )
        for c in constraints:
            check_expr(c.expr, self._index)
        object.__setattr__(self, "constraints", constraints)

    @property
    def names(self) -> list:
        return [o.name for o in self.options]

    def option(self, name: str) -> OptionDef:
        return self._index[name]

    def to_dict(self) -> dict:
        return {
            "options": [o.to_dict() for o in self.options],
            "constraints": [c.text for c in self.constraints],
        }


def parse_model(text: str | bytes) -> VariabilityModel:
    """Build a model from its JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("options"), list):
        raise ModelError("model document needs an 'options' list")
    options = []
    for entry in doc["options"]:
        if not isinstance(entry, dict):
            raise ModelError("option entries must be objects")
        options.append(
            OptionDef(
                name=entry.get("name"),
                kind=entry.get("kind"),
                choices=tuple(entry.get("choices", ())),
                min=entry.get("min"),
                max=entry.get("max"),
            )
        )
    constraints = doc.get("constraints", [])
    if not isinstance(constraints, list) or not all(isinstance(c, str) for c in constraints):
        raise ModelError("'constraints' must be a list of strings")
    by_name = {o.name: o for o in options}
    parsed = []
    for text_c in constraints:
        expr = parse_constraint(text_c)
        check_expr(expr, by_name)
        parsed.append(Constraint(expr))
    return VariabilityModel(tuple(options), tuple(parsed))


def serialize_model(model: VariabilityModel) -> str:
    return json.dumps(model.to_dict(), indent=2) + "\n"


def load_model(path) -> VariabilityModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def _check_total(model: VariabilityModel, config: Mapping) -> None:
    names = set(model.names)
    keys = set(config)
    missing, extra = names - keys, keys - names - {"label"}
    if missing:
        raise ConfigurationError(f"missing assignments for {sorted(missing)}")
    if extra:
        raise ConfigurationError(f"unknown options {sorted(extra)}")


def validate(model: VariabilityModel, config: Mapping) -> ValidityReport:
    _check_total(model, config)
    domain_errors = tuple(o.name for o in model.options if not o.contains(config[o.name]))
    if domain_errors:
        return ValidityReport(False, (), domain_errors)
    violations = tuple(i for i, c in enumerate(model.constraints) if not c.evaluate(config))
    return ValidityReport(not violations, violations, ())


def is_valid(model: VariabilityModel, config: Mapping) -> bool:
    return validate(model, config).valid


def _draw(model: VariabilityModel, u: np.ndarray) -> dict:
    config = {}
    for opt, ui in zip(model.options, u):
        if opt.kind == BOOLEAN:
            config[opt.name] = bool(ui < 0.5)
        elif opt.kind == CATEGORICAL:
            config[opt.name] = opt.choices[min(int(ui * len(opt.choices)), len(opt.choices) - 1)]
        else:
            config[opt.name] = float(opt.min + ui * (opt.max - opt.min))
    return config


def sample_valid(model: VariabilityModel, n: int, seed: int, budget: int | None = None) -> list:
    """Draw ``n`` valid configurations by rejection sampling.

    Each attempt draws every option uniformly from its domain. At most
    ``budget`` attempts are made (default ``1000 * n``).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    budget = 1000 * n if budget is None else budget
    rng = np.random.default_rng(seed)
    out, attempts = [], 0
    while len(out) < n:
        if attempts >= budget:
            raise SamplingBudgetExceeded(
                f"sampling budget exceeded after {attempts} attempts; model may be over-constrained"
            )
        attempts += 1
        config = _draw(model, rng.random(len(model.options)))
        if all(c.evaluate(config) for c in model.constraints):
            out.append(config)
    return out


# --------------------------------------------------------------------------
# Configuration CSV

def _format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    return repr(float(value))


def _parse_value(opt: OptionDef, text: str):
    text = text.strip()
    if opt.kind == BOOLEAN:
        if text not in ("true", "false"):
            raise ConfigurationError(f"bad boolean {text!r} for {opt.name}")
        return text == "true"
    if opt.kind == CATEGORICAL:
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigurationError(f"bad number {text!r} for {opt.name}") from None


def write_configurations(model: VariabilityModel, configs: Iterable[Mapping], labels=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = model.names + (["label"] if labels is not None else [])
    writer.writerow(header)
    labels = list(labels) if labels is not None else None
    for k, config in enumerate(configs):
        row = [_format_value(config[name]) for name in model.names]
        if labels is not None:
            row.append(str(int(labels[k])))
        writer.writerow(row)
    return buf.getvalue()


def read_configurations(model: VariabilityModel, text: str):
    """Parse configuration CSV; returns ``(configs, labels)`` with ``labels`` None if absent."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ConfigurationError("empty configuration CSV") from None
    header = [h.strip() for h in header]
    has_label = header[-1:] == ["label"]
    names = header[:-1] if has_label else header
    if names != model.names:
        raise ConfigurationError("CSV header does not match model option order")
    configs, labels = [], [] if has_label else None
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise ConfigurationError(f"row has {len(row)} fields, expected {len(header)}")
        configs.append({o.name: _parse_value(o, t) for o, t in zip(model.options, row)})
        if has_label:
            lab = int(row[-1])
            if lab not in (-1, 1):
                raise ConfigurationError(f"label must be -1 or 1, got {lab}")
            labels.append(lab)
    return configs, labels

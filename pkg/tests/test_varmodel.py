import json

import pytest
from hypothesis import given, settings, strategies as st

from advconf.oracle import make_scenario
from advconf.varmodel import (
    And,
    Atom,
    ConfigurationError,
    Implies,
    ModelError,
    Not,
    Or,
    SamplingBudgetExceeded,
    format_expr,
    parse_constraint,
    parse_model,
    read_configurations,
    sample_valid,
    serialize_model,
    validate,
    write_configurations,
)

FOG_BLUR = json.dumps({
    "options": [{"name": "fog", "kind": "boolean"}, {"name": "blur", "kind": "boolean"}],
    "constraints": ["fog == true => blur == false"],
})

THREE = json.dumps({
    "options": [
        {"name": "fog", "kind": "boolean"},
        {"name": "weather", "kind": "categorical", "choices": ["sun", "rain", "fog3"]},
        {"name": "noise", "kind": "numeric", "min": 0, "max": 10},
    ],
    "constraints": [],
})


def test_minimal_document():
    m = parse_model('{"options":[{"name":"fog","kind":"boolean"}]}')
    assert len(m.options) == 1
    assert m.constraints == ()


@pytest.mark.parametrize(
    "doc, message",
    [
        ('{"options":[{"name":"n","kind":"numeric","min":1.0,"max":0.0}]}', "empty numeric domain"),
        ('{"options":[{"name":"n","kind":"numeric","min":1.0,"max":1.0}]}', "empty numeric domain"),
        ('{"options":[{"name":"x","kind":"weird"}]}', "unknown option kind"),
        ('{"options": [', "malformed JSON"),
        ('{"options":[{"name":"a","kind":"boolean"}],"constraints":["b == true"]}', "unknown option"),
        ('{"options":[{"name":"a","kind":"boolean"}],"constraints":["a == 3"]}', "type-mismatched"),
        ('{"options":[{"name":"a","kind":"boolean"}],"constraints":["a < 0.5"]}', "type-mismatched"),
        ('{"options":[{"name":"n","kind":"numeric","min":0,"max":1}],"constraints":["n == 0.5"]}',
         "type-mismatched"),
        ('{"options":[{"name":"c","kind":"categorical","choices":["a","b"]}],"constraints":["c == z"]}',
         "type-mismatched"),
        ('{"options":[{"name":"c","kind":"categorical","choices":["a","a"]}]}', "duplicate choices"),
        ('{"options":[{"name":"a","kind":"boolean"},{"name":"a","kind":"boolean"}]}', "duplicate option"),
        ('{"options":[]}', "no options"),
    ],
)
def test_parse_errors(doc, message):
    with pytest.raises(ModelError, match=message):
        parse_model(doc)


def test_generated_80_option_model_parses():
    text = serialize_model(make_scenario("motivlike80", 1).model)
    assert len(parse_model(text).options) == 80


def test_validate_implication():
    m = parse_model(FOG_BLUR)
    bad = validate(m, {"fog": True, "blur": True})
    assert not bad.valid and bad.violations == (0,)
    assert validate(m, {"fog": False, "blur": True}).valid


def test_validate_constraint_free_model():
    m = parse_model(THREE)
    assert validate(m, {"fog": True, "weather": "rain", "noise": 3.0}).valid


def test_domain_errors_reported_separately():
    m = parse_model(THREE)
    report = validate(m, {"fog": True, "weather": "hail", "noise": 11.0})
    assert not report.valid
    assert report.violations == ()
    assert report.domain_errors == ("weather", "noise")


def test_validate_rejects_partial_or_extra_assignments():
    m = parse_model(FOG_BLUR)
    with pytest.raises(ConfigurationError):
        validate(m, {"fog": True})
    with pytest.raises(ConfigurationError):
        validate(m, {"fog": True, "blur": False, "rain": True})


@pytest.mark.parametrize(
    "text, expected",
    [
        ("a == true && b == true || c == true",
         Or(And(Atom("a", "==", True), Atom("b", "==", True)), Atom("c", "==", True))),
        ("a == true => b == true => c == true",
         Implies(Atom("a", "==", True), Implies(Atom("b", "==", True), Atom("c", "==", True)))),
        ("!a == true && b == true", And(Not(Atom("a", "==", True)), Atom("b", "==", True))),
        ("!(a == true && b == true)", Not(And(Atom("a", "==", True), Atom("b", "==", True)))),
        ("x >= 8", Atom("x", ">=", 8.0)),
        ("x < -1.5e-3", Atom("x", "<", -1.5e-3)),
    ],
)
def test_constraint_precedence(text, expected):
    assert parse_constraint(text) == expected


@pytest.mark.parametrize("text", ["a ==", "a == true &&", "(a == true", "a == true)", "a ? true", "== true"])
def test_constraint_syntax_errors(text):
    with pytest.raises(ModelError):
        parse_constraint(text)


def test_sample_zero():
    assert sample_valid(parse_model(THREE), 0, seed=1) == []


def test_sample_unsatisfiable_model_exhausts_budget():
    m = parse_model(json.dumps({
        "options": [{"name": "fog", "kind": "boolean"}],
        "constraints": ["fog == true", "fog == false"],
    }))
    with pytest.raises(SamplingBudgetExceeded, match="sampling budget exceeded"):
        sample_valid(m, 1, seed=0)


def test_sample_deterministic_and_valid():
    m = parse_model(THREE)
    a = sample_valid(m, 100, seed=7)
    assert a == sample_valid(m, 100, seed=7)
    assert len(a) == 100
    assert all(validate(m, c).valid for c in a)
    assert a != sample_valid(m, 100, seed=8)


def test_samples_respect_constraints():
    m = parse_model(FOG_BLUR)
    configs = sample_valid(m, 200, seed=3)
    assert not any(c["fog"] and c["blur"] for c in configs)


@pytest.mark.parametrize("name, seed", [("band2d", 0), ("motivlike80", 1), ("motivlike80", 5)])
def test_model_json_round_trip(name, seed):
    text = serialize_model(make_scenario(name, seed).model)
    model = parse_model(text)
    assert serialize_model(model) == text
    assert model == make_scenario(name, seed).model


def test_configuration_csv_round_trip():
    m = parse_model(THREE)
    configs = sample_valid(m, 20, seed=2)
    labels = [1, -1] * 10
    text = write_configurations(m, configs, labels)
    assert text.splitlines()[0] == "fog,weather,noise,label"
    back, back_labels = read_configurations(m, text)
    assert back == configs and back_labels == labels
    assert read_configurations(m, write_configurations(m, configs))[1] is None


# -- property tests over random expressions ---------------------------------

_names = st.sampled_from(["a", "b", "c"])
_atoms = st.one_of(
    st.builds(lambda n, v: Atom(n, "==", v), _names, st.booleans()),
    st.builds(
        lambda op, v: Atom("x", op, v),
        st.sampled_from(["<", "<=", ">", ">="]),
        st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False),
    ),
)
_exprs = st.recursive(
    _atoms,
    lambda inner: st.one_of(
        st.builds(Not, inner),
        st.builds(And, inner, inner),
        st.builds(Or, inner, inner),
        st.builds(Implies, inner, inner),
    ),
    max_leaves=12,
)


@settings(max_examples=300, deadline=None)
@given(_exprs)
def test_format_parse_round_trip(expr):
    assert parse_constraint(format_expr(expr)) == expr


@settings(max_examples=100, deadline=None)
@given(_exprs, st.booleans(), st.booleans(), st.booleans(), st.floats(-1e6, 1e6))
def test_validate_is_pure(expr, a, b, c, x):
    config = {"a": a, "b": b, "c": c, "x": x}
    assert expr.evaluate(config) == expr.evaluate(dict(config))

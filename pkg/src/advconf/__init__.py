"""Adversarial configurations for hardening classifiers of configurable systems."""

__version__ = "0.1.0"

from .attack import AttackParams, AttackTrace, GradientEvasion, batch_evade, evade
from .encoding import ConfigEncoder, build_encoder, encode, project
from .loop import LoopParams, LoopReport, run_adversarial_loop, run_random_loop
from .oracle import CompositeOracle, Oracle, Scenario, label, make_scenario
from .rules import GiniTree, distill_tree, extract_constraints, inject_constraints
from .svm import SMOClassifier, SvmModel, TrainParams, decision, evaluate, gradient, train_svm
from .varmodel import (
    Configuration,
    Constraint,
    OptionDef,
    VariabilityModel,
    parse_model,
    sample_valid,
    serialize_model,
    validate,
)

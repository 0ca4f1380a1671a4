"""Retraining loops: adversarial acquisition and the random-acquisition baseline.

Both loops share one report schema so their curves can be compared row by
row. Rounds are sequential; attacks inside a round go through
:func:`batch_evade`, whose results do not depend on threading.
"""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .attack import AttackParams, batch_evade
from .encoding import build_encoder
from .oracle import Scenario
from .svm import DegenerateTrainingSet, SvmModel, TrainParams, train_svm
from .varmodel import is_valid, sample_valid

logger = logging.getLogger(__name__)

SOURCE_LABEL = "source_label"
ORACLE_LABEL = "oracle_label"
REPORT_COLUMNS = ("round", "train_size", "disagreement", "mean_abs_g", "crossed", "valid_adv", "oracle_queries")
_INIT_RETRIES = 10
_HOLDOUT_BATCHES = 100


@dataclass(frozen=True)
class LoopParams:
    rounds: int = 100
    attacks_per_round: int = 10
    attack: AttackParams = field(default_factory=AttackParams)
    labeling: str = SOURCE_LABEL
    seed: int = 0
    holdout_size: int = 500
    discard_invalid: bool = False
    threads: int = 1

    def __post_init__(self):
        for name in ("rounds", "attacks_per_round", "holdout_size"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.labeling not in (SOURCE_LABEL, ORACLE_LABEL):
            raise ValueError(f"labeling must be {SOURCE_LABEL!r} or {ORACLE_LABEL!r}")


@dataclass(frozen=True)
class RoundRow:
    round: int
    train_size: int
    disagreement: float
    mean_abs_g: float
    crossed: int
    valid_adv: int
    oracle_queries: int


@dataclass
class LoopReport:
    strategy: str
    rows: list = field(default_factory=list)
    status: str = "ok"
    error: str | None = None
    metadata: dict = field(default_factory=dict)
    model: SvmModel | None = None
    X: np.ndarray | None = None
    y: np.ndarray | None = None

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.rows:
            writer.writerow([
                r.round, r.train_size, repr(r.disagreement), repr(r.mean_abs_g),
                r.crossed, r.valid_adv, r.oracle_queries,
            ])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "status": self.status,
            "error": self.error,
            "metadata": self.metadata,
            "rows": [asdict(r) for r in self.rows],
        }

    def to_json(self, manifest: dict | None = None) -> str:
        doc = self.to_dict()
        if manifest is not None:
            doc["manifest"] = manifest
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


class _State:
    """Training set, holdout and the current classifier for one run."""

    def __init__(self, scenario: Scenario, init_train_size: int, train_params: TrainParams, p: LoopParams):
        if init_train_size < 2:
            raise ValueError("init_train_size must be at least 2")
        self.scenario = scenario
        self.model = scenario.model
        self.oracle = scenario.oracle
        self.enc = build_encoder(self.model)
        self.train_params = train_params
        self.p = p
        seq = np.random.SeedSequence(p.seed)
        init_seq, holdout_seq, select_seq, random_seq = seq.spawn(4)
        self.select_rng = np.random.default_rng(select_seq)
        self.random_rng = np.random.default_rng(random_seq)
        self.queries_at_start = self.oracle.queries

        init_rng = np.random.default_rng(init_seq)
        for attempt in range(_INIT_RETRIES):
            configs = sample_valid(self.model, init_train_size, int(init_rng.integers(2**31)))
            labels = self.oracle.label_many(configs)
            if len(set(labels)) == 2:
                break
            logger.info("initial sample has a single class, resampling (attempt %d)", attempt + 1)
        else:
            raise DegenerateTrainingSet("could not draw an initial training set containing both classes")
        self.X = self.enc.transform(configs)
        self.y = np.array(labels, dtype=int)

        # holdout disjoint from the training set
        seen = {row.tobytes() for row in self.X}
        holdout_rng = np.random.default_rng(holdout_seq)
        hold = []
        for _ in range(_HOLDOUT_BATCHES):
            if len(hold) >= p.holdout_size:
                break
            batch = sample_valid(self.model, p.holdout_size - len(hold), int(holdout_rng.integers(2**31)))
            for c in batch:
                key = self.enc.encode_one(c).tobytes()
                if key not in seen:
                    seen.add(key)
                    hold.append(c)
        else:
            if len(hold) < p.holdout_size:
                raise ValueError("cannot draw a holdout disjoint from the training set")
        self.X_hold = self.enc.transform(hold) if hold else np.zeros((0, self.enc.dimension))
        self.y_hold = np.array(self.oracle.label_many(hold), dtype=int)
        self.svm = train_svm(self.X, self.y, train_params)

    @property
    def queries(self) -> int:
        return self.oracle.queries - self.queries_at_start

    def retrain(self) -> None:
        self.svm = train_svm(self.X, self.y, self.train_params)

    def add(self, X_new: np.ndarray, y_new) -> None:
        if len(X_new):
            self.X = np.vstack([self.X, X_new])
            self.y = np.concatenate([self.y, np.asarray(y_new, dtype=int)])

    def row(self, r: int, crossed: int = 0, valid_adv: int = 0) -> RoundRow:
        if len(self.X_hold):
            g = self.svm.decision_function(self.X_hold)
            pred = np.where(g >= 0.0, 1, -1)
            disagreement = float(np.mean(pred != self.y_hold))
            mean_abs_g = float(np.mean(np.abs(g)))
        else:
            disagreement = mean_abs_g = 0.0
        return RoundRow(r, len(self.X), disagreement, mean_abs_g, int(crossed), int(valid_adv), self.queries)


def _metadata(strategy, scenario, init_train_size, train_params, p) -> dict:
    return {
        "strategy": strategy,
        "scenario": scenario.name,
        "scenario_seed": scenario.seed,
        "init_train_size": init_train_size,
        "train_params": asdict(train_params),
        "loop_params": {
            **{k: v for k, v in asdict(p).items() if k not in ("attack", "threads")},
            "attack": {**asdict(p.attack), "frozen_features": sorted(p.attack.frozen_features)},
        },
    }


def _run(strategy, round_fn, scenario, init_train_size, train_params, p) -> LoopReport:
    report = LoopReport(strategy, metadata=_metadata(strategy, scenario, init_train_size, train_params, p))
    state = _State(scenario, init_train_size, train_params, p)
    report.rows.append(state.row(0))
    for r in range(1, p.rounds + 1):
        try:
            crossed, valid_adv = round_fn(state)
        except DegenerateTrainingSet as exc:
            report.status = "error"
            report.error = f"round {r}: {exc}"
            logger.error("aborting loop: %s", report.error)
            break
        report.rows.append(state.row(r, crossed, valid_adv))
        logger.debug("round %d: %s", r, report.rows[-1])
    report.model, report.X, report.y = state.svm, state.X, state.y
    return report


def _adversarial_round(state: _State):
    p = state.p
    negatives = np.flatnonzero(state.y == -1)
    if len(negatives) == 0:
        raise DegenerateTrainingSet("no non-acceptable points left to attack")
    k = p.attacks_per_round
    picks = state.select_rng.choice(negatives, size=k, replace=len(negatives) < k)
    attack = AttackParams(
        target=1, step=p.attack.step, iterations=p.attack.iterations,
        early_stop=p.attack.early_stop, frozen_features=p.attack.frozen_features,
    )
    traces = batch_evade(state.svm, state.X[picks], attack, threads=p.threads)
    crossed = valid_adv = 0
    X_new, y_new = [], []
    for idx, trace in zip(picks, traces):
        crossed += trace.crossed(attack.target)
        config = state.enc.project_one(trace.endpoint)
        valid = is_valid(state.model, config)
        valid_adv += valid
        if p.discard_invalid and not valid:
            continue
        lab = int(state.y[idx]) if p.labeling == SOURCE_LABEL else state.oracle(config)
        X_new.append(state.enc.encode_one(config))
        y_new.append(lab)
    if X_new:
        state.add(np.array(X_new), y_new)
        state.retrain()
    return crossed, valid_adv


def _random_round(state: _State):
    k = state.p.attacks_per_round
    configs = sample_valid(state.model, k, int(state.random_rng.integers(2**31))) if k else []
    if not configs:
        return 0, 0
    X_new = state.enc.transform(configs)
    labels = np.array(state.oracle.label_many(configs), dtype=int)
    diverge = state.svm.predict(X_new) != labels
    if diverge.any():
        state.add(X_new[diverge], labels[diverge])
        state.retrain()
    return int(diverge.sum()), len(configs)


def run_adversarial_loop(scenario: Scenario, init_train_size: int = 200,
                         train_params: TrainParams = TrainParams(), p: LoopParams = LoopParams()) -> LoopReport:
    """Attack non-acceptable training points each round, add the endpoints, retrain.

    Row 0 holds metrics before any attack. ``crossed`` counts walks that
    ended on the acceptable side of the boundary they started behind, and
    ``valid_adv`` counts endpoints valid under the variability model.
    """
    return _run("adversarial", _adversarial_round, scenario, init_train_size, train_params, p)


def run_random_loop(scenario: Scenario, init_train_size: int = 200,
                    train_params: TrainParams = TrainParams(), p: LoopParams = LoopParams()) -> LoopReport:
    """Sample random valid configurations, keep those the classifier gets wrong.

    Spends ``attacks_per_round`` oracle queries per round. ``crossed`` holds
    the number of divergences found; ``valid_adv`` the number of sampled
    configurations (all valid by construction).
    """
    return _run("random", _random_round, scenario, init_train_size, train_params, p)

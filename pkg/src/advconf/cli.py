"""``advconf`` command-line interface.

Every subcommand takes its randomness from ``--seed`` and writes only to paths
given by flags (stdout when ``--out`` is omitted). JSON outputs carry a
``manifest`` block with the command, parameters and seeds.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .attack import AttackParams, batch_evade, traces_to_csv
from .encoding import build_encoder
from .loop import ORACLE_LABEL, SOURCE_LABEL, LoopParams, run_adversarial_loop, run_random_loop
from .oracle import SCENARIOS, make_scenario
from .rules import (
    distill_tree,
    extract_constraints,
    fidelity,
    format_constraints,
    inject_constraints,
    parse_constraints,
)
from .svm import SvmModel, TrainParams, evaluate, train_svm
from .varmodel import (
    load_model,
    read_configurations,
    sample_valid,
    serialize_model,
    write_configurations,
)

logger = logging.getLogger("advconf")


class UsageError(Exception):
    pass


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def _pos_int(text):
    value = _nonneg_int(text)
    if value == 0:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def _pos_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0 or not np.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _labeling(text):
    aliases = {"source": SOURCE_LABEL, "oracle": ORACLE_LABEL, SOURCE_LABEL: SOURCE_LABEL, ORACLE_LABEL: ORACLE_LABEL}
    if text not in aliases:
        raise argparse.ArgumentTypeError("expected 'source' or 'oracle'")
    return aliases[text]


def _shared(p, *flags):
    if "seed" in flags:
        p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="output path (default: stdout)")
    if "model" in flags:
        p.add_argument("--model", type=Path, help="variability model JSON")
    if "scenario" in flags:
        p.add_argument("--scenario", choices=SCENARIOS)
    if "dataset" in flags:
        p.add_argument("--dataset", type=Path, required=True, help="configuration CSV")
    if "classifier" in flags:
        p.add_argument("--classifier", type=Path, required=True, help="classifier JSON")
    p.add_argument("--threads", type=_pos_int, default=1)


def _train_flags(p):
    p.add_argument("--C", type=_pos_float, default=1.0)
    p.add_argument("--kernel", choices=("linear", "rbf"), default="rbf")
    p.add_argument("--gamma", type=_pos_float, default=None, help="RBF width (default 1/d)")
    p.add_argument("--tol", type=_pos_float, default=1e-3)


def _attack_flags(p):
    p.add_argument("--step", type=_pos_float, default=0.002)
    p.add_argument("--iterations", type=_nonneg_int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="advconf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"advconf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-model", help="write a scenario's variability model as JSON")
    _shared(p, "seed")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)

    p = sub.add_parser("sample", help="sample valid configurations to CSV")
    _shared(p, "seed", "model", "scenario")
    p.add_argument("--n", type=_nonneg_int, required=True)

    p = sub.add_parser("label", help="append oracle labels to a configuration CSV")
    _shared(p, "seed", "dataset")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)

    p = sub.add_parser("train", help="train an SVM on a labelled configuration CSV")
    _shared(p, "seed", "model", "scenario", "dataset")
    _train_flags(p)

    p = sub.add_parser("evaluate", help="error rate of a classifier on a labelled CSV")
    _shared(p, "seed", "model", "scenario", "dataset", "classifier")

    p = sub.add_parser("attack", help="run evasion attacks from the configurations of a CSV")
    _shared(p, "seed", "model", "scenario", "dataset", "classifier")
    _attack_flags(p)
    p.add_argument("--target", type=int, choices=(-1, 1), default=1)
    p.add_argument("--early-stop", action="store_true")
    p.add_argument("--freeze", type=_nonneg_int, nargs="*", default=[], help="slot indices that never move")
    p.add_argument("--configs-out", type=Path, help="materialised endpoint configurations CSV")

    for name, helptext in (("loop", "adversarial retraining loop"), ("random-loop", "random acquisition baseline")):
        p = sub.add_parser(name, help=helptext)
        _shared(p, "seed")
        p.add_argument("--scenario", choices=SCENARIOS, default="band2d")
        p.add_argument("--scenario-seed", type=int, default=None, help="default: --seed")
        _train_flags(p)
        _attack_flags(p)
        p.add_argument("--rounds", type=_nonneg_int, default=100)
        p.add_argument("--attacks-per-round", type=_nonneg_int, default=10)
        p.add_argument("--init-size", type=_nonneg_int, default=200)
        p.add_argument("--holdout-size", type=_nonneg_int, default=500)
        p.add_argument("--labeling", type=_labeling, default=SOURCE_LABEL)
        p.add_argument("--discard-invalid", action="store_true")
        p.add_argument("--json", type=Path, help="also write the JSON report here")
        p.add_argument("--classifier-out", type=Path, help="write the final classifier JSON here")

    p = sub.add_parser("distill", help="distil a classifier into a tree and constraints")
    _shared(p, "seed", "model", "scenario", "classifier")
    p.add_argument("--n-samples", type=_pos_int, default=2000)
    p.add_argument("--max-depth", type=_nonneg_int, default=4)
    p.add_argument("--constraints-out", type=Path)

    p = sub.add_parser("inject", help="append constraints (one per line) to a model")
    _shared(p, "model", "scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--constraints", type=Path, required=True)

    p = sub.add_parser("boundary-map", help="decision values on a regular grid over [0,1]^2")
    _shared(p, "classifier")
    p.add_argument("--grid", type=_pos_int, required=True)
    return parser


def _setup_logging() -> None:
    level = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("ADVCONF_LOG", "quiet").lower(), logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _emit(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _manifest(args, started: float) -> dict:
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    return {
        "command": args.command,
        "version": __version__,
        "params": params,
        "seeds": {k: v for k, v in params.items() if k.endswith("seed") and v is not None},
        "duration_s": round(time.perf_counter() - started, 3),
    }


def _resolve_model(args):
    if getattr(args, "model", None) is not None:
        return load_model(args.model)
    if getattr(args, "scenario", None) is not None:
        return make_scenario(args.scenario, args.seed).model
    raise UsageError("one of --model or --scenario is required")


def _train_params(args) -> TrainParams:
    return TrainParams(C=args.C, kernel=args.kernel, gamma=args.gamma, tol=args.tol, seed=args.seed)


def _read_dataset(model, path: Path, need_labels=False):
    configs, labels = read_configurations(model, path.read_text(encoding="utf-8"))
    if need_labels and labels is None:
        raise UsageError(f"{path} has no label column")
    return configs, labels


def _cmd_gen_model(args, started):
    _emit(args.out, serialize_model(make_scenario(args.scenario, args.seed).model))


def _cmd_sample(args, started):
    model = _resolve_model(args)
    _emit(args.out, write_configurations(model, sample_valid(model, args.n, args.seed)))


def _cmd_label(args, started):
    scenario = make_scenario(args.scenario, args.seed)
    configs, _ = _read_dataset(scenario.model, args.dataset)
    labels = scenario.oracle.label_many(configs)
    _emit(args.out, write_configurations(scenario.model, configs, labels))


def _cmd_train(args, started):
    model = _resolve_model(args)
    enc = build_encoder(model)
    configs, labels = _read_dataset(model, args.dataset, need_labels=True)
    svm = train_svm(enc.transform(configs), labels, _train_params(args))
    # splice the manifest in so model fields keep their 17-digit formatting
    manifest = json.dumps(_manifest(args, started), sort_keys=True)
    text = svm.to_json().rstrip()[:-1] + ',"manifest":' + manifest + "}\n"
    _emit(args.out, text)


def _load_classifier(path: Path) -> SvmModel:
    return SvmModel.from_json(path.read_text(encoding="utf-8"))


def _cmd_evaluate(args, started):
    model = _resolve_model(args)
    enc = build_encoder(model)
    svm = _load_classifier(args.classifier)
    configs, labels = _read_dataset(model, args.dataset, need_labels=True)
    metrics = evaluate(svm, enc.transform(configs), labels).as_dict()
    _emit(args.out, json.dumps({"metrics": metrics, "manifest": _manifest(args, started)}, indent=2, sort_keys=True) + "\n")


def _cmd_attack(args, started):
    model = _resolve_model(args)
    enc = build_encoder(model)
    svm = _load_classifier(args.classifier)
    configs, _ = _read_dataset(model, args.dataset)
    params = AttackParams(target=args.target, step=args.step, iterations=args.iterations,
                          early_stop=args.early_stop, frozen_features=frozenset(args.freeze))
    traces = batch_evade(svm, list(enc.transform(configs)), params, threads=args.threads)
    _emit(args.out, traces_to_csv(traces))
    if args.configs_out is not None:
        ends = [enc.project_one(t.endpoint) for t in traces]
        args.configs_out.write_text(write_configurations(model, ends), encoding="utf-8")


def _cmd_loop(args, started):
    scenario_seed = args.seed if args.scenario_seed is None else args.scenario_seed
    scenario = make_scenario(args.scenario, scenario_seed)
    params = LoopParams(
        rounds=args.rounds,
        attacks_per_round=args.attacks_per_round,
        attack=AttackParams(target=1, step=args.step, iterations=args.iterations),
        labeling=args.labeling,
        seed=args.seed,
        holdout_size=args.holdout_size,
        discard_invalid=args.discard_invalid,
        threads=args.threads,
    )
    run = run_adversarial_loop if args.command == "loop" else run_random_loop
    report = run(scenario, args.init_size, _train_params(args), params)
    if args.out is not None and args.out.suffix == ".json":
        _emit(args.out, report.to_json(_manifest(args, started)))
    else:
        _emit(args.out, report.to_csv())
    if args.json is not None:
        args.json.write_text(report.to_json(_manifest(args, started)), encoding="utf-8")
    if args.classifier_out is not None and report.model is not None:
        args.classifier_out.write_text(report.model.to_json(), encoding="utf-8")
    if report.status != "ok":
        raise RuntimeError(report.error)


def _cmd_distill(args, started):
    model = _resolve_model(args)
    enc = build_encoder(model)
    svm = _load_classifier(args.classifier)
    tree = distill_tree(svm, enc, model, args.n_samples, args.max_depth, args.seed)
    logger.info("tree/SVM agreement on 1000 fresh configurations: %.4f",
                fidelity(tree, svm, enc, model, 1000, args.seed + 1))
    _emit(args.out, tree.export_text(enc.slot_names))
    if args.constraints_out is not None:
        args.constraints_out.write_text(format_constraints(extract_constraints(tree, enc)), encoding="utf-8")


def _cmd_inject(args, started):
    model = _resolve_model(args)
    cs = parse_constraints(args.constraints.read_text(encoding="utf-8"))
    _emit(args.out, serialize_model(inject_constraints(model, cs)))


def boundary_map(m: SvmModel, grid: int) -> str:
    """CSV of ``x0,x1,g`` over a ``grid x grid`` lattice on [0,1]^2 (x0 outer)."""
    if grid < 1:
        raise UsageError("grid must be at least 1")
    if m.dim != 2:
        raise ValueError(f"boundary map needs a 2-D classifier, got dimension {m.dim}")
    ticks = np.linspace(0.0, 1.0, grid) if grid > 1 else np.array([0.0])
    pts = np.array([(a, b) for a in ticks for b in ticks])
    g = m.decision_function(pts)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x0", "x1", "g"])
    for (a, b), v in zip(pts, g):
        writer.writerow([repr(float(a)), repr(float(b)), repr(float(v))])
    return buf.getvalue()


def _cmd_boundary_map(args, started):
    _emit(args.out, boundary_map(_load_classifier(args.classifier), args.grid))


COMMANDS = {
    "gen-model": _cmd_gen_model,
    "sample": _cmd_sample,
    "label": _cmd_label,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "attack": _cmd_attack,
    "loop": _cmd_loop,
    "random-loop": _cmd_loop,
    "distill": _cmd_distill,
    "inject": _cmd_inject,
    "boundary-map": _cmd_boundary_map,
}


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        COMMANDS[args.command](args, started)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"advconf: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.debug("failure", exc_info=True)
        print(f"advconf: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

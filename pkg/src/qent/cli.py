"""Command-line interface: gen-data, train, classify, eval, gen-bound, verify.

QENT_THREADS caps the BLAS worker count; it must be honored before numpy
loads, so it is applied at module import time.
"""

from __future__ import annotations

import os

_threads = os.environ.get("QENT_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import json
import secrets
import sys

import numpy as np

from . import boundgen, pipeline, storage
from .errors import (
    DimensionMismatchError,
    DivergedLossError,
    NoFeasibleStateError,
    ParamOutOfRangeError,
    StorageError,
)
from .pipeline import TASK_DISCORD, TASK_ENTANGLEMENT, TrainConfig
from .states import StateFamily, sample_batch

EXIT_BAD_FLAGS = 2
EXIT_IO = 3
EXIT_DIMENSION = 4
EXIT_DIVERGED = 5
EXIT_NO_FEASIBLE = 6

_TASKS = {"ent": TASK_ENTANGLEMENT, "discord": TASK_DISCORD}


def _load_config_file(path):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _resolve(args, defaults):
    """Precedence: explicit flags > config file > built-in defaults."""
    config = _load_config_file(getattr(args, "config", None))
    resolved = {}
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in config:
            resolved[key] = config[key]
        else:
            resolved[key] = default
    return resolved


def _resolve_seed(value):
    if value is not None:
        return int(value), False
    return secrets.randbits(63), True


def _echo(command, resolved):
    print(f"config[{command}]: " + json.dumps(resolved, sort_keys=True))


def _print_accuracies(accuracies):
    for family in sorted(accuracies):
        print(f"accuracy[{family}]: {accuracies[family]:.4f}")


def _cmd_gen_data(args):
    resolved = _resolve(args, {"d": 3, "family": "mix_sep", "n": 1000, "mmax": 2, "seed": None, "out": None})
    if resolved["out"] is None:
        raise ParamOutOfRangeError("--out is required")
    seed, drawn = _resolve_seed(resolved["seed"])
    resolved["seed"] = seed
    _echo("gen-data", resolved)
    if drawn:
        print(f"seed: {seed}")
    family = StateFamily.from_tag(resolved["family"])
    state_set = sample_batch(family, resolved["d"], resolved["n"], seed, m_max=resolved["mmax"])
    storage.write_states(resolved["out"], state_set)
    print(f"wrote {resolved['n']} states to {resolved['out']}")
    return 0


def _cmd_train(args):
    resolved = _resolve(
        args,
        {
            "d": 3,
            "task": "ent",
            "data": None,
            "n": 20_000,
            "mmax": 2,
            "epochs": None,
            "batch": 128,
            "lr": 1e-4,
            "reg": 0.0,
            "threshold_size": 2_000,
            "seed": None,
            "out": None,
        },
    )
    if resolved["out"] is None:
        raise ParamOutOfRangeError("--out is required")
    task = _TASKS[resolved["task"]]
    if resolved["epochs"] is None:
        resolved["epochs"] = 1 if task == TASK_DISCORD else 20
    seed, drawn = _resolve_seed(resolved["seed"])
    resolved["seed"] = seed
    _echo("train", resolved)
    if drawn:
        print(f"seed: {seed}")

    dataset = None
    if resolved["data"] is not None:
        dataset = storage.read_states(resolved["data"])
        resolved["n"] = len(dataset)
    cfg = TrainConfig(
        d=resolved["d"],
        task=task,
        n_samples=resolved["n"],
        m_max=resolved["mmax"],
        epochs=resolved["epochs"],
        batch_size=resolved["batch"],
        learning_rate=resolved["lr"],
        threshold_set_size=resolved["threshold_size"],
        seed=seed,
        regularization=resolved["reg"],
    )
    model, record = pipeline.train(
        cfg, dataset=dataset, log=lambda epoch, loss: print(f"epoch {epoch}: loss {loss:.6f}")
    )
    storage.write_checkpoint(resolved["out"], model, record, cfg)
    print(f"threshold epsilon_d: {record.epsilon!r}")
    print(f"wrote checkpoint to {resolved['out']}")
    return 0


def _cmd_classify(args):
    resolved = _resolve(
        args, {"model": None, "infile": None, "unitaries": 0, "csv": None, "seed": None}
    )
    if resolved["model"] is None or resolved["infile"] is None:
        raise ParamOutOfRangeError("--model and --in are required")
    seed, drawn = _resolve_seed(resolved["seed"])
    resolved["seed"] = seed
    _echo("classify", resolved)
    if drawn:
        print(f"seed: {seed}")
    model, record, _ = storage.read_checkpoint(resolved["model"])
    state_set = storage.read_states(resolved["infile"])
    k = resolved["unitaries"]
    rng = np.random.Generator(np.random.PCG64(seed))

    families, labels, errors = [], [], []
    tag = state_set.family.tag
    for state in state_set.states:
        if k >= 1:
            label, trace = pipeline.classify_with_unitaries(model, record, state, k, rng)
            error = float(np.median(trace))
        else:
            label, error = pipeline.classify(model, record, state)
        families.append(tag)
        labels.append(label)
        errors.append(error)

    truth = pipeline.expected_label(record.task, state_set.family)
    accuracy = sum(lab == truth for lab in labels) / len(labels)
    report = pipeline.ClassificationReport(
        task=record.task,
        epsilon=record.epsilon,
        families=families,
        errors=np.array(errors),
        labels=labels,
        accuracies={tag: accuracy},
        k_unitaries=k,
    )
    _print_accuracies(report.accuracies)
    if resolved["csv"]:
        storage.write_error_csv(resolved["csv"], report)
        print(f"wrote error trace to {resolved['csv']}")
    return 0


def _cmd_eval(args):
    resolved = _resolve(args, {"model": None, "sets": None, "csv": None})
    if resolved["model"] is None or not resolved["sets"]:
        raise ParamOutOfRangeError("--model and --sets are required")
    _echo("eval", resolved)
    model, record, _ = storage.read_checkpoint(resolved["model"])
    sets = [storage.read_states(path) for path in resolved["sets"]]
    report = pipeline.evaluate(model, record, sets)
    _print_accuracies(report.accuracies)
    if resolved["csv"]:
        storage.write_error_csv(resolved["csv"], report)
        print(f"wrote error trace to {resolved['csv']}")
    return 0


def _cmd_gen_bound(args):
    resolved = _resolve(
        args,
        {
            "model": None,
            "kappa": 3,
            "steps": 10_000,
            "lr": 2e-4,
            "restarts": 10,
            "certify_k": 1000,
            "seed": None,
            "out": None,
        },
    )
    if resolved["model"] is None or resolved["out"] is None:
        raise ParamOutOfRangeError("--model and --out are required")
    seed, drawn = _resolve_seed(resolved["seed"])
    resolved["seed"] = seed
    _echo("gen-bound", resolved)
    if drawn:
        print(f"seed: {seed}")
    model, record, _ = storage.read_checkpoint(resolved["model"])
    d = int(round(np.sqrt(model.spec.side)))

    no_feasible = None
    try:
        results = boundgen.generate(
            model,
            record.epsilon,
            d,
            resolved["kappa"],
            resolved["steps"],
            resolved["lr"],
            resolved["restarts"],
            seed,
        )
    except NoFeasibleStateError as exc:
        results = exc.results
        no_feasible = exc

    rng = np.random.Generator(np.random.PCG64(seed + 1))
    records = []
    feasible_states = []
    for i, result in enumerate(results):
        entry = {
            "restart": i,
            "seed": result.seed,
            "feasible": result.feasible,
            "nudged": result.nudged,
            "reconstruction_error": result.reconstruction_error,
            "min_pt_eigenvalue": result.min_pt_eigenvalue,
            "ccnr": result.ccnr,
            "threshold": record.epsilon,
            "steps": result.steps,
            "best_objective": max(result.objective_trace) if result.objective_trace else None,
        }
        if result.feasible and result.state is not None:
            entry.update(boundgen.certify(result.state, model, record, rng, k=resolved["certify_k"]))
            feasible_states.append(result.state)
        records.append(entry)

    report_path = resolved["out"] + ".jsonl"
    storage.write_jsonl(report_path, records)
    print(f"wrote certification report to {report_path}")
    if feasible_states:
        from .states import LabeledStateSet

        storage.write_states(
            resolved["out"],
            LabeledStateSet(
                family=StateFamily.BOUND_CANDIDATE, states=feasible_states, d=d, seed=seed
            ),
        )
        print(f"wrote {len(feasible_states)} candidate states to {resolved['out']}")
    if no_feasible is not None:
        print("no feasible bound-entangled candidate found")
        raise no_feasible
    return 0


def _cmd_verify(args):
    resolved = _resolve(args, {"infile": None, "criteria": "ppt,ccnr"})
    if resolved["infile"] is None:
        raise ParamOutOfRangeError("--in is required")
    _echo("verify", resolved)
    criteria = [c.strip() for c in resolved["criteria"].split(",") if c.strip()]
    unknown = set(criteria) - {"ppt", "ccnr"}
    if unknown:
        raise ParamOutOfRangeError(f"unknown criteria: {sorted(unknown)}")
    from .linalg import is_ppt, realignment_ccnr

    state_set = storage.read_states(resolved["infile"])
    for i, state in enumerate(state_set.states):
        parts = []
        if "ppt" in criteria:
            ppt, min_eig = is_ppt(state)
            parts.append(f"ppt: {str(ppt).lower()}, min_pt_eig: {min_eig:.12g}")
        if "ccnr" in criteria:
            parts.append(f"ccnr: {realignment_ccnr(state):.12g}")
        print(f"state {i}: " + ", ".join(parts))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qent",
        description="Autoencoder-based entanglement/discord classification and bound-entangled state generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a labeled state dataset")
    p.add_argument("--d", type=int)
    p.add_argument("--family", choices=["mix_sep", "npt", "cc", "cq", "qc"])
    p.add_argument("--n", type=int)
    p.add_argument("--mmax", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a model and calibrate its threshold")
    p.add_argument("--d", type=int)
    p.add_argument("--task", choices=["ent", "discord"])
    p.add_argument("--data", help="QSD1 training set (generated when omitted)")
    p.add_argument("--n", type=int, help="training set size when generating")
    p.add_argument("--mmax", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--reg", type=float, help="L1 weight-penalty strength")
    p.add_argument("--threshold-size", dest="threshold_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("classify", help="classify states from a file")
    p.add_argument("--model")
    p.add_argument("--in", dest="infile")
    p.add_argument("--unitaries", type=int, help="median vote over K local-unitary conjugations")
    p.add_argument("--csv")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("eval", help="evaluate per-family accuracy over labeled sets")
    p.add_argument("--model")
    p.add_argument("--sets", nargs="+")
    p.add_argument("--csv")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gen-bound", help="search for bound-entangled candidates")
    p.add_argument("--model")
    p.add_argument("--kappa", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--restarts", type=int)
    p.add_argument("--certify-k", dest="certify_k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_gen_bound)

    p = sub.add_parser("verify", help="print entanglement-criterion values per state")
    p.add_argument("--in", dest="infile")
    p.add_argument("--criteria")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParamOutOfRangeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_FLAGS
    except (StorageError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DimensionMismatchError as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except DivergedLossError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except NoFeasibleStateError as exc:
        print(f"no feasible state: {exc}", file=sys.stderr)
        return EXIT_NO_FEASIBLE


if __name__ == "__main__":
    sys.exit(main())

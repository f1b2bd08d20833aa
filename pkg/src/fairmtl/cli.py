"""Command-line entry point: ``fairmtl <subcommand> ...``.

Every flag can also be given in a YAML file passed with ``--config``; keys
are flag names with dashes replaced by underscores.  ``FAIRMTL_OUTPUT_DIR``
sets the default output directory.  Exit codes: 0 ok, 2 input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import bounds as bnd
from .dataset import (
    Schema,
    SyntheticEnvSpec,
    append_sensitive_onehot,
    generate_synthetic,
    load_collection,
    load_csv,
    save_collection,
    standardize,
)
from .errors import FairMTLError
from .fairness import collection_gaps
from .harness import (
    METHODS,
    TABLE1_METHODS,
    GridSpec,
    emit_report,
    parse_report,
    render_table,
    run_protocol,
    two_step_select,
)
from .solver import SolverConfig, fit, fit_m1_output_constrained, load_fit, save_fit
from .transfer import evaluate_transfer

log = logging.getLogger("fairmtl")


def _outdir() -> Path:
    return Path(os.environ.get("FAIRMTL_OUTPUT_DIR", "."))


def _out(path: str | None, default: str) -> Path:
    p = Path(path) if path else _outdir() / default
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _floats(text):
    if text is None or isinstance(text, (list, tuple)):
        return text
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text):
    if text is None or isinstance(text, (list, tuple)):
        return text
    return [int(x) for x in str(text).split(",") if x.strip()]


def _grid(args) -> GridSpec:
    cfg = {}
    if args.lambda_grid is not None:
        cfg["lambda_grid"] = tuple(_floats(args.lambda_grid))
    if args.r_grid is not None:
        cfg["r_grid"] = tuple(_ints(args.r_grid))
    for key in ("folds", "shortlist_fraction", "max_outer_iters", "rel_tol"):
        if getattr(args, key, None) is not None:
            cfg[key] = getattr(args, key)
    return GridSpec(**cfg)


def _matching(coll, d: int):
    """Append the sensitive one-hot columns when the model expects them."""
    if d == coll.d + 2 and not coll.sensitive_encoded:
        return append_sensitive_onehot(coll)
    return coll


def _dump(obj, path: Path | None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args):
    schema = Schema.load(args.schema)
    coll = load_csv(args.csv, schema, args.task_column)
    out = _out(args.out, f"{coll.name}.npz")
    if not args.no_standardize:
        coll, params = standardize(coll)
        params.save(out.with_suffix(".std.csv"))
    save_collection(coll, out)
    print(f"{out}: {coll.T} tasks, d={coll.d}")


def cmd_synth(args):
    spec = SyntheticEnvSpec.load(args.spec)
    coll, truth = generate_synthetic(spec)
    out = _out(args.out, "synthetic.npz")
    save_collection(coll, out)
    np.savez(out.with_suffix(".truth.npz"), A_star=truth.A_star, B_star=truth.B_star, v=truth.v)
    print(f"{out}: {coll.T} tasks, d={coll.d}")


def cmd_train(args):
    coll = load_collection(args.data)
    if args.sensitive_in_form:
        coll = append_sensitive_onehot(coll)
    cfg = SolverConfig(
        args.lam, args.r, args.mode, args.epsilon, args.gamma, args.max_outer_iters, args.rel_tol, args.seed
    )
    res = fit_m1_output_constrained(coll, cfg) if args.method == "M1" else fit(coll, cfg)
    npz, meta = save_fit(res, _out(args.out, "fit"))
    print(f"{npz}, {meta}: mode={res.mode} converged={res.converged} objective={res.objective_trace[-1]:.6g}")


def cmd_transfer(args):
    res = load_fit(args.fit)
    coll = _matching(load_collection(args.data), res.A.d)
    task = coll.task(args.task)
    lam = args.lam if args.lam is not None else res.config.lam
    err, fair = evaluate_transfer(
        res.A, task, lam, args.train_fraction, args.seed, coll.output_levels, coll.output_range
    )
    _dump({"task": args.task, "lam": lam, "ERR": err, "FAIR": fair}, Path(args.out) if args.out else None)


def cmd_bounds(args):
    res = load_fit(args.fit)
    coll = _matching(load_collection(args.data), res.A.d)
    lam = args.lam if args.lam is not None else res.config.lam
    cert = bnd.certify(coll, res.A, collection_gaps(coll, skip_missing=True), lam, args.delta)
    _dump(cert, _out(args.out, "bounds.json") if args.out else None)


def cmd_gridsearch(args):
    coll = load_collection(args.data)
    if args.sensitive_in_form:
        coll = append_sensitive_onehot(coll)
    lam, r = two_step_select(coll, _grid(args), args.seed, args.method)
    _dump({"method": args.method, "lam": lam, "r": r}, Path(args.out) if args.out else None)


def cmd_run(args):
    coll = load_collection(args.data)
    arms = {"out": (False,), "in": (True,), "both": (False, True)}[args.sensitive_arms]
    report = run_protocol(
        coll,
        methods=args.methods,
        grid=_grid(args),
        repetitions=args.repetitions,
        seed=args.seed,
        settings=args.settings,
        sensitive_arms=arms,
    )
    js, txt = emit_report(report, _out(args.out, "report.json"))
    sys.stdout.write(render_table(report))
    print(f"wrote {js} and {txt}")


def cmd_report(args):
    sys.stdout.write(render_table(parse_report(args.input)))


# ---------------------------------------------------------------------------

def _grid_flags(p):
    p.add_argument("--lambda-grid", help="comma-separated lambda values")
    p.add_argument("--r-grid", help="comma-separated factor counts")
    p.add_argument("--folds", type=int)
    p.add_argument("--shortlist-fraction", type=float)
    p.add_argument("--max-outer-iters", type=int)
    p.add_argument("--rel-tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairmtl", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="YAML file with default values for any flag")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="CSV + schema -> canonical collection")
    p.add_argument("--csv", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--task-column")
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="synthetic environment spec -> collection + ground truth")
    p.add_argument("--spec", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a representation")
    p.add_argument("--data", required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--mode", choices=("none", "hard", "soft", "penalty"), default="hard")
    p.add_argument("--method", choices=("MTL", "M1"), default="MTL")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--max-outer-iters", type=int, default=500)
    p.add_argument("--rel-tol", type=float, default=1e-7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sensitive-in-form", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("transfer", help="evaluate a frozen representation on a novel task")
    p.add_argument("--fit", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--lam", type=float)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("bounds", help="transfer certificates for a fitted representation")
    p.add_argument("--fit", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--lam", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("gridsearch", help="two-step hyperparameter selection")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=METHODS, default="MTL-Cons")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sensitive-in-form", action="store_true")
    p.add_argument("--out")
    _grid_flags(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("run", help="full protocol -> experiment report")
    p.add_argument("--data", required=True)
    p.add_argument("--methods", nargs="+", choices=METHODS, default=list(TABLE1_METHODS))
    p.add_argument("--settings", nargs="+", choices=("same", "new"), default=["same", "new"])
    p.add_argument("--sensitive-arms", choices=("out", "in", "both"), default="both")
    p.add_argument("--repetitions", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    _grid_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render a report file as a table")
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def _config_tokens(cfg: dict, parser: argparse.ArgumentParser, command: str) -> list[str]:
    """Turn config entries into flags for ``command`` (explicit flags given later win)."""
    sub = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in sub._actions}
    tokens = []
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in actions or value is None:
            continue
        flag = "--" + dest.replace("_", "-")
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            if value:
                tokens.append(flag)
        elif action.nargs == "+":
            tokens += [flag, *map(str, value if isinstance(value, list) else [value])]
        elif isinstance(value, list):
            tokens += [flag, ",".join(map(str, value))]
        else:
            tokens += [flag, str(value)]
    return tokens


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        pre.add_argument("-v", "--verbose", action="store_true")
        known, rest = pre.parse_known_args(argv)
        if known.config and rest:
            with open(known.config, encoding="utf-8") as fh:
                cfg = yaml.safe_load(fh) or {}
            command = rest[0]
            if command in parser._subparsers._group_actions[0].choices:
                rest = [command, *_config_tokens(cfg, parser, command), *rest[1:]]
            argv = (["-v"] if known.verbose else []) + rest
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    except (OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except FairMTLError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return getattr(exc, "exit_code", 2)
    except (OSError, KeyError, yaml.YAMLError) as exc:
        log.error("input error: %s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

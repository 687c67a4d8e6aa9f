"""Command line entry point: ``idealdefer <command> [--config C] [--seed S] [--out DIR]``.

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import experiment as ex
from .config import PRESETS, ConfigError, ExperimentConfig, load_config
from .core import load_jsonl, save_jsonl
from .estimators import HEADS, MLPClassifier
from .models import load_checkpoint, params_from_json, params_to_json, save_checkpoint
from .verify import run_checks

SPLIT_FILES = {"base-train": "base_train.jsonl", "deferral-train": "deferral_train.jsonl",
               "test": "test.jsonl"}
EXIT_OK, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2


def _config(args) -> ExperimentConfig:
    if args.config is None:
        cfg = PRESETS[args.preset]()
    else:
        cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if getattr(args, "seeds", None) is not None:
        changes["seeds"] = args.seeds
    return cfg.replace(**changes) if changes else cfg


def _load_splits(cfg, data_dir):
    spec = cfg.mixture_spec()
    out = []
    for split, name in SPLIT_FILES.items():
        path = os.path.join(data_dir, name)
        if not os.path.exists(path):
            raise FileNotFoundError(f"{path} missing; run gen-data first")
        out.append(load_jsonl(path, spec.num_classes, split=split, posterior=spec.posterior))
    return out


def _load_models(cfg, dirpath):
    models = []
    for role in ("base", "expert"):
        params, _ = load_checkpoint(os.path.join(dirpath, f"{role}.json"))
        models.append(MLPClassifier.from_params(params))
    return models


def _head_file(method, c, i):
    tag = method if c is None else f"{method}-c{c:g}"
    return f"{tag}-{i:02d}.json"


def cmd_gen_data(cfg, args):
    os.makedirs(cfg.out, exist_ok=True)
    for d in ex.generate_splits(cfg):
        save_jsonl(d, os.path.join(cfg.out, SPLIT_FILES[d.split]))
    _write_config(cfg)
    return EXIT_OK


def cmd_train_base(cfg, args):
    train, _, _ = _load_splits(cfg, args.data or cfg.out)
    model, expert = ex.train_models(cfg, train)
    os.makedirs(cfg.out, exist_ok=True)
    save_checkpoint(model.params_, os.path.join(cfg.out, "base.json"), {"role": "base"})
    save_checkpoint(expert.params_, os.path.join(cfg.out, "expert.json"), {"role": "expert"})
    return EXIT_OK


def cmd_train_defer(cfg, args):
    train, deferral, test = _load_splits(cfg, args.data or cfg.out)
    model, expert = _load_models(cfg, args.models or cfg.out)
    heads = ex.fit_heads(cfg, ex.PreparedData(train, deferral, test, model, expert))
    head_dir = os.path.join(cfg.out, "heads")
    os.makedirs(head_dir, exist_ok=True)
    for method, by_cost in heads.items():
        for c, hs in by_cost.items():
            for i, h in enumerate(hs):
                meta = {"method": method, "cost": c, "restart": i,
                        "params": h.get_params()}
                doc = (params_to_json(h.params_, meta) if hasattr(h, "params_")
                       else {"format": "idealdefer.head", "meta": meta})
                with open(os.path.join(head_dir, _head_file(method, c, i)), "w") as fh:
                    json.dump(doc, fh, indent=1, sort_keys=True)
    return EXIT_OK


def _load_heads(cfg, head_dir):
    out = {}
    for method in cfg.methods:
        costs = cfg.twostage_costs if method == "twostage-exp" else [None]
        restarts = 1 if method == "conf" else cfg.seeds
        out[method] = {}
        for c in costs:
            hs = []
            for i in range(restarts):
                with open(os.path.join(head_dir, _head_file(method, c, i))) as fh:
                    doc = json.load(fh)
                head = HEADS[method](**doc["meta"]["params"])
                if "layers" in doc:
                    head.params_, _ = params_from_json(doc)
                hs.append(head)
            out[method][c] = hs
    return out


def cmd_eval_curve(cfg, args):
    train, deferral, test = _load_splits(cfg, args.data or cfg.out)
    model, expert = _load_models(cfg, args.models or cfg.out)
    prep = ex.PreparedData(train, deferral, test, model, expert)
    heads = _load_heads(cfg, os.path.join(args.models or cfg.out, "heads"))
    curves, summary = ex.evaluate(cfg, prep, heads)
    ex.write_outputs(cfg.out, cfg, curves, summary)
    print(ex.curves_to_csv(list(curves.values())), end="")
    return EXIT_OK


def cmd_run(cfg, args):
    curves, _ = ex.run_experiment(cfg)
    _write_config(cfg)
    print(ex.curves_to_csv(list(curves.values())), end="")
    return EXIT_OK


def _write_config(cfg):
    with open(os.path.join(cfg.out, "config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)


def cmd_verify(args):
    try:
        report = run_checks(args.select)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    status = EXIT_OK if report["passed"] else EXIT_VERIFY
    if args.config is not None:
        entry = {"name": "config", "passed": True, "seconds": 0.0,
                 "detail": {"path": args.config}}
        try:
            load_config(args.config)
        except ConfigError as exc:
            entry["passed"] = False
            entry["detail"]["violation"] = str(exc)
            status = EXIT_CONFIG
        report["checks"].insert(0, entry)
        report["passed"] = report["passed"] and entry["passed"]
    text = json.dumps(report, indent=1)
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return status


COMMANDS = {"gen-data": cmd_gen_data, "train-base": cmd_train_base,
            "train-defer": cmd_train_defer, "eval-curve": cmd_eval_curve, "run": cmd_run}


def build_parser():
    parser = argparse.ArgumentParser(prog="idealdefer",
                                     description="Learning to defer with ideal distributions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--preset", choices=sorted(PRESETS), default="default",
                       help="built-in config used when --config is absent")
        p.add_argument("--seed", type=int, help="experiment seed (data and base models)")
        p.add_argument("--out", help="output directory")
        if name in ("run", "train-defer", "eval-curve"):
            p.add_argument("--seeds", type=int, help="number of deferral-head restarts")
        if name in ("train-base", "train-defer", "eval-curve"):
            p.add_argument("--data", help="directory written by gen-data (default: --out)")
        if name in ("train-defer", "eval-curve"):
            p.add_argument("--models", help="directory with base/expert checkpoints "
                                            "(default: --out)")
    p = sub.add_parser("verify")
    p.add_argument("--select", default="all", help="check names or groups, comma separated")
    p.add_argument("--config", help="also validate this experiment config")
    p.add_argument("--seed", type=int, help="accepted for symmetry; checks use fixed seeds")
    p.add_argument("--out", help="write the JSON report here")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

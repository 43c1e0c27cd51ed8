"""Command line entry point.

    robustrec <command> [--config FILE] [--cache DIR] [--section.key VALUE ...]

Any config key can be overridden with its dotted path, e.g.
`--defense.lambda 0.5` or `--model.algo cer`. Commands: ingest, train,
attack, evaluate, sweep, report.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..evalkit import gold_explanations, train_feature_sets
from ..robustness import attack_weights, save_attack
from .config import (ConfigError, apply_overrides, defense_config, load_config,
                     training_config)
from .report import write_report
from .sweep import (SweepCell, ensure_bed, ensure_eval, ensure_trained, load_dataset,
                    resolve_cache, run_sweep)
from .training import hyperparameter_search


def parse_override_tokens(tokens: list[str]) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise SystemExit(f"unexpected argument: {tok!r}")
        body = tok[2:]
        if "=" in body:
            path, raw = body.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise SystemExit(f"missing value for override {tok!r}")
            path, raw = body, tokens[i + 1]
            i += 2
        pairs.append((path, raw))
    return pairs


def _cell_from_config(cfg: dict) -> SweepCell:
    lam = float(cfg["defense"]["lambda"])
    eps_d = float(cfg["defense"]["eps_d"]) if lam != 0.0 else 0.0
    return SweepCell(algo=cfg["model"]["algo"], lam=lam, eps_d=eps_d,
                     seed=int(cfg["training"]["seed"]))


def cmd_ingest(cfg: dict, cache: Path, args) -> None:
    split, X, Y, stats = load_dataset(cfg, cache)
    print(json.dumps(stats, indent=2, sort_keys=True))


def cmd_train(cfg: dict, cache: Path, args) -> None:
    split, X, Y, _ = load_dataset(cfg, cache)
    cell = _cell_from_config(cfg)
    if args.search:
        from ..models import build_model

        def make_model():
            model = build_model(cell.algo, split, {cell.algo: cfg["model"][cell.algo]})
            model.attach(split, X, Y)
            return model

        lr, wd, _ = hyperparameter_search(make_model, split, defense_config(cfg),
                                          training_config(cfg), cell.seed,
                                          search_epochs=args.search_epochs)
        cfg["training"]["lr"] = lr
        cfg["training"]["weight_decay"] = wd
        print(f"search selected lr={lr:g} weight_decay={wd:g}", file=sys.stderr)
    model, run_dir, run_id = ensure_trained(cfg, cell, split, X, Y, cache)
    manifest = json.loads((run_dir / "checkpoint" / "manifest.json").read_text())
    print(json.dumps({
        "run_id": run_id,
        "checkpoint": str(run_dir / "checkpoint"),
        "best_epoch": manifest["best_epoch"],
        "epochs_trained": manifest["epochs_trained"],
        "val_ndcg": manifest["val_history"][manifest["best_epoch"]],
    }, indent=2, sort_keys=True))


def cmd_attack(cfg: dict, cache: Path, args) -> None:
    split, X, Y, _ = load_dataset(cfg, cache)
    cell = _cell_from_config(cfg)
    model, run_dir, run_id = ensure_trained(cfg, cell, split, X, Y, cache)
    grid = [args.eps_a] if args.eps_a is not None else \
        [e for e in cfg["attack"]["eps_a_grid"] if e != 0.0]
    defense = defense_config(cfg)
    out = []
    for eps_a in grid:
        result = attack_weights(model, defense, float(eps_a),
                                seed=int(cfg["attack"]["seed"]),
                                batch_size=int(cfg["attack"]["batch_size"]))
        path = save_attack(run_dir, float(eps_a), result)
        out.append({"run_id": run_id, "eps_a": eps_a, "grad_norm": result.grad_norm,
                    "delta_norm": result.delta_norm, "artifact": str(path)})
    print(json.dumps(out, indent=2, sort_keys=True))


def cmd_evaluate(cfg: dict, cache: Path, args) -> None:
    split, X, Y, _ = load_dataset(cfg, cache)
    cell = _cell_from_config(cfg)
    model, run_dir, run_id = ensure_trained(cfg, cell, split, X, Y, cache)
    bed = ensure_bed(cfg, cell, model, run_dir, split, X, Y, cache)
    row = ensure_eval(cfg, cell, model, run_dir, run_id, float(args.eps_a), split,
                      bed, gold_explanations(split), train_feature_sets(split))
    print(json.dumps(row, indent=2, sort_keys=True))


def cmd_sweep(cfg: dict, cache: Path, args) -> None:
    out = run_sweep(cfg, cache)
    print(out)


def cmd_report(cfg: dict, cache: Path, args) -> None:
    results = Path(args.results) if args.results else cache / "results.csv"
    out_dir = Path(args.out) if args.out else cache / "report"
    written = write_report(results, out_dir, curve_lambda=args.curve_lambda)
    for path in written:
        print(path)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="robustrec",
        description="Train, attack and evaluate robust explainable recommenders.")
    parser.add_argument("--config", help="JSON config file (defaults otherwise)")
    parser.add_argument("--cache", help="cache root (default: $ROBUSTREC_CACHE or ./cache)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", help="parse reviews, build the split and aspect matrices, print stats")
    p_train = sub.add_parser("train", help="train one model per the config's defense settings")
    p_train.add_argument("--search", action="store_true",
                         help="grid-search lr and weight decay first")
    p_train.add_argument("--search-epochs", type=int, default=5)
    p_attack = sub.add_parser("attack", help="compute weight-attack artifacts for a trained run")
    p_attack.add_argument("--eps-a", type=float, default=None,
                          help="single budget (default: the config grid's nonzero entries)")
    p_eval = sub.add_parser("evaluate", help="evaluate one run (clean or attacked)")
    p_eval.add_argument("--eps-a", type=float, default=0.0)
    sub.add_parser("sweep", help="run the full grid and write results.csv")
    p_report = sub.add_parser("report", help="aggregate results.csv into tables and curves")
    p_report.add_argument("--results", default=None)
    p_report.add_argument("--out", default=None)
    p_report.add_argument("--curve-lambda", type=float, default=0.5)

    args, unknown = parser.parse_known_args(argv)
    try:
        cfg = load_config(args.config)
        apply_overrides(cfg, parse_override_tokens(unknown))
    except ConfigError as e:
        parser.error(str(e))
    cache = resolve_cache(args.cache)
    handlers = {"ingest": cmd_ingest, "train": cmd_train, "attack": cmd_attack,
                "evaluate": cmd_evaluate, "sweep": cmd_sweep, "report": cmd_report}
    handlers[args.command](cfg, cache, args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Aggregate results.csv into seed-averaged tables and F1-vs-eps_a curves."""
from __future__ import annotations

import csv
from pathlib import Path


def _fmt_eps(x: float) -> str:
    return f"{x:g}"


def read_results(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("lambda", "eps_d", "eps_a", "ndcg", "expl_pr", "expl_re", "expl_f1"):
            row[key] = float(row[key])
        for key in ("n_users", "n_pairs"):
            row[key] = int(row[key])
    return rows


def write_report(results_path: str | Path, out_dir: str | Path,
                 curve_lambda: float = 0.5) -> list[Path]:
    """Write aggregate.csv plus curve_<algo>_<dataset>_<eps_d>.csv files
    (expl_f1 against eps_a, averaged over seeds, at `curve_lambda`). Vanilla
    rows get their own curve_<algo>_<dataset>_vanilla.csv."""
    rows = read_results(results_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    # seed-averaged long table
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = (row["algo"], row["dataset"], row["lambda"], row["eps_d"],
               row["eps_a"], row["condition"])
        groups.setdefault(key, []).append(row)
    agg_path = out / "aggregate.csv"
    with open(agg_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["algo", "dataset", "lambda", "eps_d", "eps_a", "condition",
                         "ndcg", "expl_pr", "expl_re", "expl_f1", "n_runs"])
        for key in sorted(groups):
            bucket = groups[key]
            n = len(bucket)
            means = [sum(r[m] for r in bucket) / n
                     for m in ("ndcg", "expl_pr", "expl_re", "expl_f1")]
            algo, dataset, lam, eps_d, eps_a, condition = key
            writer.writerow([algo, dataset, _fmt_eps(lam), _fmt_eps(eps_d),
                             _fmt_eps(eps_a), condition,
                             *(f"{v:.6f}" for v in means), n])
    written.append(agg_path)

    # one curve per (algo, dataset, eps_d) at the figure lambda, plus vanilla
    pairs = sorted({(r["algo"], r["dataset"]) for r in rows})
    for algo, dataset in pairs:
        sub = [r for r in rows if r["algo"] == algo and r["dataset"] == dataset]
        lams = sorted({r["lambda"] for r in sub if r["lambda"] > 0.0})
        lam = curve_lambda if curve_lambda in lams else (lams[-1] if lams else None)
        curves: dict[str, list[dict]] = {}
        if any(r["lambda"] == 0.0 for r in sub):
            curves["vanilla"] = [r for r in sub if r["lambda"] == 0.0]
        if lam is not None:
            for eps_d in sorted({r["eps_d"] for r in sub if r["lambda"] == lam}):
                curves[_fmt_eps(eps_d)] = [r for r in sub
                                           if r["lambda"] == lam and r["eps_d"] == eps_d]
        for tag, bucket in curves.items():
            by_eps: dict[float, list[float]] = {}
            for r in bucket:
                by_eps.setdefault(r["eps_a"], []).append(r["expl_f1"])
            curve_path = out / f"curve_{algo}_{dataset}_{tag}.csv"
            with open(curve_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["eps_a", "expl_f1"])
                for eps_a in sorted(by_eps):
                    vals = by_eps[eps_a]
                    writer.writerow([_fmt_eps(eps_a), f"{sum(vals) / len(vals):.6f}"])
            written.append(curve_path)
    return written

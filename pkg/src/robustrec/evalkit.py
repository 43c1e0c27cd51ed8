"""Ranking and explanation-quality evaluation.

Headline ranking metric: binary NDCG@100 per user over the joint candidate
list of 6 held-out positives and 100 sampled negatives. Explanation metrics
run over a fixed evaluation bed: the test positives a reference (vanilla)
model placed in each user's top 5. Per pair, the model's explanation is
truncated to top_n, masked to features the user mentioned in training, and
scored as precision/recall/F1 against the positive-sentiment features of
that pair's held-out review; pair scores are macro-averaged.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import DatasetSplit
from .models.base import Recommender, rank_items


def ndcg_at(ranked: Sequence[int], relevant: set[int], k: int) -> float:
    """Binary NDCG@k: gains 1/log2(rank+1) at 1-based ranks, ideal DCG over
    min(k, |relevant|) hits. Raises on an empty relevant set."""
    if not relevant:
        raise ValueError("ndcg_at: empty relevant set")
    dcg = 0.0
    for i, item in enumerate(ranked[:k], start=1):
        if item in relevant:
            dcg += 1.0 / math.log2(i + 1.0)
    ideal = 0.0
    for i in range(1, min(k, len(relevant)) + 1):
        ideal += 1.0 / math.log2(i + 1.0)
    return dcg / ideal


def validation_ndcg(model: Recommender, split: DatasetSplit, k: int = 10) -> float:
    """Mean NDCG@k over each user's 1-positive + sampled-negatives list."""
    total = 0.0
    n = 0
    for u in sorted(split.validation):
        entry = split.validation[u]
        cands = np.asarray([entry.positive.item] + entry.negatives, dtype=np.int64)
        ranked = rank_items(model.scores(u, cands), cands)
        total += ndcg_at(ranked, {entry.positive.item}, k)
        n += 1
    return total / n if n else 0.0


def build_bed(model: Recommender, split: DatasetSplit, k_rec: int = 5) -> dict[int, list[int]]:
    """Per user, the test positives the given model ranks in its top `k_rec`
    of the user's candidate list. Evaluate every condition on the same bed."""
    bed: dict[int, list[int]] = {}
    for u in sorted(split.test):
        entry = split.test[u]
        cands = np.asarray([it.item for it in entry.positives] + list(entry.negatives),
                           dtype=np.int64)
        top = set(rank_items(model.scores(u, cands), cands)[:k_rec])
        hits = [it.item for it in entry.positives if it.item in top]
        if hits:
            bed[u] = hits
    return bed


def gold_explanations(split: DatasetSplit) -> dict[tuple[int, int], set[int]]:
    """Per test (u, v): features mentioned with positive sentiment in that
    pair's held-out review(s). Pairs with no positive mention are dropped."""
    gold: dict[tuple[int, int], set[int]] = {}
    for u, entry in split.test.items():
        for it in entry.positives:
            feats = {f for f, s in it.mentions if s == 1}
            if feats:
                gold[(u, it.item)] = feats
    return gold


def train_feature_sets(split: DatasetSplit) -> dict[int, set[int]]:
    """Features each user mentioned (any sentiment) in train interactions."""
    out: dict[int, set[int]] = {}
    for it in split.train:
        if it.mentions:
            feats = out.setdefault(it.user, set())
            feats.update(f for f, _ in it.mentions)
    return out


def mask_explanation(features: Sequence[int], user_features: set[int]) -> list[int]:
    """Keep only features the user has mentioned, preserving rank order."""
    return [f for f in features if f in user_features]


def explanation_prf(predicted: Sequence[int], gold: set[int]) -> tuple[float, float, float]:
    """Set precision/recall/F1 of a predicted feature list against gold.
    Empty predictions score P = 0; an empty gold set is a caller bug."""
    if not gold:
        raise ValueError("explanation_prf: empty gold set")
    pred = set(predicted)
    hit = len(pred & gold)
    p = hit / len(pred) if pred else 0.0
    r = hit / len(gold)
    f1 = 0.0 if (p + r) == 0.0 else 2.0 * p * r / (p + r)
    return p, r, f1


@dataclass
class EvalReport:
    ndcg: float
    expl_pr: float
    expl_re: float
    expl_f1: float
    n_users: int
    n_pairs: int
    n_skipped_users: int = 0
    k_ndcg: int = 100
    top_n: int = 1

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(asdict(self), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text


def evaluate(model: Recommender, split: DatasetSplit, bed: dict[int, list[int]],
             gold: dict[tuple[int, int], set[int]],
             user_features: dict[int, set[int]] | None = None,
             top_n: int = 1, k_ndcg: int = 100) -> EvalReport:
    """Rank every test user's candidates (NDCG@k) and explain every bed pair
    with nonempty gold. Explanations never enforce the top-K precondition
    here: the bed is fixed by the reference model, not the one under test."""
    if user_features is None:
        user_features = train_feature_sets(split)
    ndcg_total = 0.0
    n_users = 0
    n_skipped = 0
    for u in sorted(split.test):
        entry = split.test[u]
        relevant = {it.item for it in entry.positives}
        if not relevant:
            n_skipped += 1
            continue
        cands = np.asarray([it.item for it in entry.positives] + list(entry.negatives),
                           dtype=np.int64)
        ranked = rank_items(model.scores(u, cands), cands)
        ndcg_total += ndcg_at(ranked, relevant, k_ndcg)
        n_users += 1

    p_total = r_total = f_total = 0.0
    n_pairs = 0
    for u in sorted(bed):
        feats_u = user_features.get(u, set())
        for v in bed[u]:
            g = gold.get((u, v))
            if not g:
                continue
            expl = model.explain(u, v, top_n=top_n, require_recommended=False)
            masked = mask_explanation(expl.features, feats_u)
            p, r, f1 = explanation_prf(masked, g)
            p_total += p
            r_total += r
            f_total += f1
            n_pairs += 1

    return EvalReport(
        ndcg=ndcg_total / n_users if n_users else 0.0,
        expl_pr=p_total / n_pairs if n_pairs else 0.0,
        expl_re=r_total / n_pairs if n_pairs else 0.0,
        expl_f1=f_total / n_pairs if n_pairs else 0.0,
        n_users=n_users,
        n_pairs=n_pairs,
        n_skipped_users=n_skipped,
        k_ndcg=k_ndcg,
        top_n=top_n,
    )

"""Review ingestion and the temporal train/validation/test split.

Input is JSON lines, one review per line:

    {"user_id": ..., "item_id": ..., "rating": 1..N, "timestamp": int,
     "triples": [{"feature": ..., "opinion": ..., "sentiment": +1|-1}, ...]}

The split is per user, chronological: the 6 latest interactions become test
positives, the latest remaining one the validation positive, the rest train.
Test negatives (100) and validation negatives (10) are drawn independently
from items the user never interacted with; the two draws may overlap.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .rng import SplitMix64, derive_seed

log = logging.getLogger(__name__)


class IngestError(ValueError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SentimentTriple:
    feature: str
    opinion: str
    sentiment: int  # +1 or -1


@dataclass(frozen=True)
class ReviewRecord:
    user_id: str
    item_id: str
    rating: int
    timestamp: int
    triples: tuple[SentimentTriple, ...]


@dataclass(frozen=True)
class Interaction:
    """One (user, item) pair after id interning; mentions are (feature, sentiment)."""
    user: int
    item: int
    rating: float
    timestamp: int
    mentions: tuple[tuple[int, int], ...]


@dataclass
class ValidationEntry:
    positive: Interaction
    negatives: list[int]


@dataclass
class TestEntry:
    positives: list[Interaction]
    negatives: list[int]


@dataclass
class DatasetSplit:
    users: list[str]
    items: list[str]
    features: list[str]
    n_rating: int
    train: list[Interaction]
    validation: dict[int, ValidationEntry] = field(default_factory=dict)
    test: dict[int, TestEntry] = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_features(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class SplitConfig:
    seed: int = 0
    n_test_pos: int = 6
    n_test_neg: int = 100
    n_val_neg: int = 10


def _parse_record(obj: dict, line_no: int, max_rating: int) -> ReviewRecord:
    try:
        user_id = str(obj["user_id"])
        item_id = str(obj["item_id"])
        rating = obj["rating"]
        timestamp = obj["timestamp"]
        raw_triples = obj["triples"]
    except KeyError as e:
        raise IngestError(f"line {line_no}: missing key {e.args[0]!r}") from None
    if not isinstance(rating, (int, float)) or float(rating) != int(rating):
        raise IngestError(f"line {line_no}: rating must be an integer, got {rating!r}")
    rating = int(rating)
    if not (1 <= rating <= max_rating):
        raise IngestError(f"line {line_no}: rating {rating} outside [1, {max_rating}]")
    if not isinstance(timestamp, int):
        raise IngestError(f"line {line_no}: timestamp must be an integer, got {timestamp!r}")
    triples = []
    for t in raw_triples:
        try:
            sentiment = t["sentiment"]
        except (KeyError, TypeError):
            raise IngestError(f"line {line_no}: triple missing 'sentiment'") from None
        if sentiment not in (1, -1):
            raise IngestError(f"line {line_no}: sentiment must be +1 or -1, got {sentiment!r}")
        triples.append(SentimentTriple(str(t.get("feature", "")), str(t.get("opinion", "")), int(sentiment)))
    return ReviewRecord(user_id, item_id, rating, timestamp, tuple(triples))


def ingest_reviews(source: str | Path | Iterable[str], min_reviews_per_user: int = 1,
                   max_rating: int = 5) -> list[ReviewRecord]:
    """Parse JSON-lines reviews, drop sparse users, sort by (user_id, timestamp).

    Dropping a user never changes any other user's review count, so one
    filtering pass reaches the fixpoint.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    else:
        lines = list(source)
    records: list[ReviewRecord] = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise IngestError(f"line {i}: malformed JSON: {e.msg}") from None
        records.append(_parse_record(obj, i, max_rating))
    counts: dict[str, int] = {}
    for r in records:
        counts[r.user_id] = counts.get(r.user_id, 0) + 1
    records = [r for r in records if counts[r.user_id] >= min_reviews_per_user]
    records.sort(key=lambda r: (r.user_id, r.timestamp))
    return records


def dataset_stats(records: list[ReviewRecord]) -> dict:
    """Corpus-level counts plus sparsity% = 100*reviews/(users*items), 5 significant digits."""
    users = {r.user_id for r in records}
    items = {r.item_id for r in records}
    features = {t.feature for r in records for t in r.triples}
    n_reviews = len(records)
    if users and items:
        sparsity = float(f"{100.0 * n_reviews / (len(users) * len(items)):.5g}")
    else:
        sparsity = 0.0
    return {
        "n_users": len(users),
        "n_items": len(items),
        "n_features": len(features),
        "n_reviews": n_reviews,
        "sparsity_pct": sparsity,
    }


def build_split(records: list[ReviewRecord], config: SplitConfig = SplitConfig(),
                max_rating: int = 5) -> DatasetSplit:
    """Temporal per-user split with seeded negative sampling.

    Short users keep at least 1 train and 1 validation interaction and give
    up test (then validation) slots first, with a warning. Raises SplitError
    naming the user when the never-interacted pool cannot cover the negative
    sample sizes.
    """
    if not records:
        raise SplitError("no records to split")
    users = sorted({r.user_id for r in records})
    items = sorted({r.item_id for r in records})
    features = sorted({t.feature for r in records for t in r.triples})
    uidx = {u: i for i, u in enumerate(users)}
    iidx = {v: i for i, v in enumerate(items)}
    fidx = {f: i for i, f in enumerate(features)}

    # collapse multiple reviews of one (u, v): latest rating/timestamp wins,
    # sentiment mentions from all of them are kept
    merged: dict[tuple[str, str], dict] = {}
    for r in records:  # records come sorted by (user, time)
        key = (r.user_id, r.item_id)
        mentions = [(fidx[t.feature], t.sentiment) for t in r.triples]
        slot = merged.get(key)
        if slot is None:
            merged[key] = {"rating": r.rating, "ts": r.timestamp, "mentions": mentions}
        else:
            slot["rating"] = r.rating
            slot["ts"] = r.timestamp
            slot["mentions"].extend(mentions)

    by_user: dict[str, list[tuple[str, dict]]] = {}
    for (u, v), slot in merged.items():
        by_user.setdefault(u, []).append((v, slot))

    split = DatasetSplit(users=users, items=items, features=features,
                         n_rating=max_rating, train=[])
    n_items = len(items)
    for u in users:
        pairs = by_user.get(u, [])
        pairs.sort(key=lambda p: (p[1]["ts"], p[0]))  # time, then item id
        inters = [Interaction(uidx[u], iidx[v], float(s["rating"]), s["ts"], tuple(s["mentions"]))
                  for v, s in pairs]
        n = len(inters)
        n_test = min(config.n_test_pos, max(n - 2, 0))
        n_val = 1 if n - n_test >= 2 else 0
        if n_test < config.n_test_pos or n_val == 0:
            log.warning("user %s has only %d interactions; split reduced to "
                        "%d test / %d val", u, n, n_test, n_val)
        test_pos = inters[n - n_test:] if n_test else []
        rest = inters[:n - n_test] if n_test else inters
        val_pos = rest[-1] if n_val else None
        train_part = rest[:-1] if n_val else rest
        split.train.extend(train_part)

        interacted = {it.item for it in inters}
        pool_size = n_items - len(interacted)
        if test_pos:
            if pool_size < config.n_test_neg:
                raise SplitError(f"user {u}: need {config.n_test_neg} test negatives, "
                                 f"only {pool_size} never-interacted items available")
            rng = SplitMix64(derive_seed(config.seed, "test-neg", u))
            negs = rng.sample_range_excluding(n_items, interacted, config.n_test_neg)
            split.test[uidx[u]] = TestEntry(positives=test_pos, negatives=negs)
        if val_pos is not None:
            if pool_size < config.n_val_neg:
                raise SplitError(f"user {u}: need {config.n_val_neg} validation negatives, "
                                 f"only {pool_size} never-interacted items available")
            rng = SplitMix64(derive_seed(config.seed, "val-neg", u))
            negs = rng.sample_range_excluding(n_items, interacted, config.n_val_neg)
            split.validation[uidx[u]] = ValidationEntry(positive=val_pos, negatives=negs)
    return split


def user_positive_items(split: DatasetSplit) -> dict[int, set[int]]:
    """All items each user interacted with in any part of the split."""
    pos: dict[int, set[int]] = {u: set() for u in range(split.n_users)}
    for it in split.train:
        pos[it.user].add(it.item)
    for u, entry in split.validation.items():
        pos[u].add(entry.positive.item)
    for u, entry in split.test.items():
        for it in entry.positives:
            pos[u].add(it.item)
    return pos


def _interaction_to_json(it: Interaction) -> list:
    return [it.user, it.item, it.rating, it.timestamp, [list(m) for m in it.mentions]]


def _interaction_from_json(row: list) -> Interaction:
    u, v, rating, ts, mentions = row
    return Interaction(int(u), int(v), float(rating), int(ts),
                       tuple((int(f), int(s)) for f, s in mentions))


def save_split_manifest(split: DatasetSplit, path: str | Path) -> None:
    doc = {
        "users": split.users,
        "items": split.items,
        "features": split.features,
        "n_rating": split.n_rating,
        "train": [_interaction_to_json(it) for it in split.train],
        "validation": {str(u): {"positive": _interaction_to_json(e.positive),
                                "negatives": e.negatives}
                       for u, e in sorted(split.validation.items())},
        "test": {str(u): {"positives": [_interaction_to_json(it) for it in e.positives],
                          "negatives": e.negatives}
                 for u, e in sorted(split.test.items())},
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":"), sort_keys=True))


def load_split_manifest(path: str | Path) -> DatasetSplit:
    doc = json.loads(Path(path).read_text())
    return DatasetSplit(
        users=list(doc["users"]),
        items=list(doc["items"]),
        features=list(doc["features"]),
        n_rating=int(doc["n_rating"]),
        train=[_interaction_from_json(row) for row in doc["train"]],
        validation={int(u): ValidationEntry(_interaction_from_json(e["positive"]),
                                            [int(x) for x in e["negatives"]])
                    for u, e in doc["validation"].items()},
        test={int(u): TestEntry([_interaction_from_json(r) for r in e["positives"]],
                                [int(x) for x in e["negatives"]])
              for u, e in doc["test"].items()},
    )

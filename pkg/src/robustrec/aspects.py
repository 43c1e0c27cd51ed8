"""User/item aspect matrices from sentiment mention counts.

With N the rating scale, t a mention count and w a mean sentiment in [-1, 1]:

    X[u,f] = 0 if t_uf = 0 else 1 + (N-1) * (2 / (1 + exp(-t_uf)) - 1)
    Y[v,f] = 0 if t_vf = 0 else 1 + (N-1) / (1 + exp(-t_vf * w_vf))

The two saturations differ on purpose: user attention only grows with count,
item quality is signed by sentiment. Entries are 0 (never mentioned) or fall
in (1, N); counts come from training reviews only, and a feature mentioned
twice in one review counts twice.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DatasetSplit, Interaction

_MAGIC = b"RRAM"
_VERSION = 1


@dataclass
class MentionStats:
    user_counts: np.ndarray     # |U| x |F|, float64 counts
    item_counts: np.ndarray     # |V| x |F|
    item_sentiment: np.ndarray  # |V| x |F|, mean sentiment where counted, else 0


def count_mentions(train: list[Interaction], n_users: int, n_items: int,
                   n_features: int) -> MentionStats:
    """Tally feature mentions and mean item sentiment over train interactions."""
    user_counts = np.zeros((n_users, n_features))
    item_counts = np.zeros((n_items, n_features))
    sent_sum = np.zeros((n_items, n_features))
    for it in train:
        for f, s in it.mentions:
            user_counts[it.user, f] += 1.0
            item_counts[it.item, f] += 1.0
            sent_sum[it.item, f] += float(s)
    with np.errstate(invalid="ignore"):
        item_sentiment = np.where(item_counts > 0, sent_sum / np.maximum(item_counts, 1.0), 0.0)
    return MentionStats(user_counts, item_counts, item_sentiment)


def build_x(user_counts: np.ndarray, n_rating: int) -> np.ndarray:
    """User attention matrix; increasing in the mention count."""
    t = np.asarray(user_counts, dtype=np.float64)
    val = 1.0 + (n_rating - 1.0) * (2.0 / (1.0 + np.exp(-t)) - 1.0)
    return np.where(t > 0, val, 0.0)


def build_y(item_counts: np.ndarray, item_sentiment: np.ndarray, n_rating: int) -> np.ndarray:
    """Item quality matrix; increasing in count*mean_sentiment."""
    t = np.asarray(item_counts, dtype=np.float64)
    w = np.asarray(item_sentiment, dtype=np.float64)
    val = 1.0 + (n_rating - 1.0) / (1.0 + np.exp(-t * w))
    return np.where(t > 0, val, 0.0)


def build_matrices(train: list[Interaction], n_users: int, n_items: int,
                   n_features: int, n_rating: int) -> tuple[np.ndarray, np.ndarray]:
    stats = count_mentions(train, n_users, n_items, n_features)
    return (build_x(stats.user_counts, n_rating),
            build_y(stats.item_counts, stats.item_sentiment, n_rating))


def split_matrices(split: "DatasetSplit") -> tuple[np.ndarray, np.ndarray]:
    """Aspect matrices for a finished split (train interactions only)."""
    return build_matrices(split.train, split.n_users, split.n_items,
                          split.n_features, split.n_rating)


def save_matrix(path: str | Path, matrix: np.ndarray, n_rating: int) -> None:
    """Binary cache: header (magic, version, rows, cols, N) + row-major <f8."""
    m = np.ascontiguousarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"matrix cache requires a 2-d array, got shape {m.shape}")
    header = struct.pack("<4sIQQI", _MAGIC, _VERSION, m.shape[0], m.shape[1], n_rating)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(m.astype("<f8").tobytes())


def load_matrix(path: str | Path) -> tuple[np.ndarray, int]:
    raw = Path(path).read_bytes()
    head_size = struct.calcsize("<4sIQQI")
    magic, version, rows, cols, n_rating = struct.unpack("<4sIQQI", raw[:head_size])
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an aspect-matrix cache (magic {magic!r})")
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported cache version {version}")
    body = np.frombuffer(raw[head_size:], dtype="<f8")
    if body.size != rows * cols:
        raise ValueError(f"{path}: truncated cache ({body.size} values, expected {rows * cols})")
    return body.reshape(rows, cols).astype(np.float64), int(n_rating)

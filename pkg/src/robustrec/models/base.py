"""Shared recommender contract: batching, ranking, parameter plumbing.

Both recommenders expose the same surface: a differentiable `loss` whose Y
argument may be a gradient-tracked Tensor (the defense perturbs item aspect
values), fast numpy `scores` for ranking, and per-pair `explain`.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..dataset import DatasetSplit, Interaction, user_positive_items
from ..diffcore import Tensor
from ..rng import SplitMix64


@dataclass(frozen=True)
class Explanation:
    """Ranked feature ids, best first; length <= the requested top_n.

    `non_counterfactual` marks counterfactual explanations whose inner
    optimization did not push the item below the recommendation threshold.
    """
    features: tuple[int, ...]
    non_counterfactual: bool = False


@dataclass(frozen=True)
class PairBatch:
    users: np.ndarray    # int64 [B]
    items: np.ndarray    # int64 [B]
    targets: np.ndarray  # float64 [B, 1]; ratings or 0/1 labels

    def __len__(self) -> int:
        return len(self.users)


def rank_items(scores: np.ndarray, item_ids: np.ndarray) -> list[int]:
    """Item ids by descending score; exact ties go to the lower item index."""
    scores = np.asarray(scores, dtype=np.float64)
    item_ids = np.asarray(item_ids, dtype=np.int64)
    order = np.lexsort((item_ids, -scores))
    return [int(item_ids[i]) for i in order]


class Recommender(ABC):
    """Base class; construct, `attach` a split and its aspect matrices, `reinit`."""

    kind: str = ""
    binary_targets: bool = False

    def __init__(self) -> None:
        self.params: dict[str, Tensor] = {}
        self._X: np.ndarray | None = None
        self._Y: np.ndarray | None = None
        self._train: list[Interaction] = []
        self._user_pos: dict[int, set[int]] = {}
        self._candidates: dict[int, np.ndarray] = {}
        self.n_rating: int = 5

    def attach(self, split: DatasetSplit, X: np.ndarray, Y: np.ndarray) -> None:
        """Bind the training data this model learns from and is scored on."""
        self._X = np.asarray(X, dtype=np.float64)
        self._Y = np.asarray(Y, dtype=np.float64)
        self._train = list(split.train)
        self._user_pos = user_positive_items(split)
        self.n_rating = split.n_rating
        self._candidates = {}
        for u, entry in split.test.items():
            cand = [it.item for it in entry.positives] + list(entry.negatives)
            self._candidates[u] = np.asarray(cand, dtype=np.int64)
        self._on_attach(split)

    def _on_attach(self, split: DatasetSplit) -> None:
        pass

    @property
    def X(self) -> np.ndarray:
        return self._X

    @property
    def Y(self) -> np.ndarray:
        return self._Y

    def candidate_items(self, u: int) -> np.ndarray:
        try:
            return self._candidates[u]
        except KeyError:
            raise KeyError(f"user {u} has no held-out candidate list") from None

    def epoch_batches(self, rng: SplitMix64, batch_size: int) -> Iterator[PairBatch]:
        """Shuffled minibatches of train interactions plus 1:1 sampled negatives.

        `batch_size` counts positives; each batch carries as many zero-target
        negatives drawn from items the user never interacted with.
        """
        if not self._train:
            raise RuntimeError("epoch_batches() before attach()")
        n_items = self._Y.shape[0]
        order = list(range(len(self._train)))
        rng.shuffle(order)
        target_of = (lambda it: 1.0) if self.binary_targets else (lambda it: it.rating)
        for lo in range(0, len(order), batch_size):
            chunk = [self._train[i] for i in order[lo:lo + batch_size]]
            users = [it.user for it in chunk]
            items = [it.item for it in chunk]
            targets = [target_of(it) for it in chunk]
            for it in chunk:
                pos = self._user_pos[it.user]
                if len(pos) >= n_items:
                    raise RuntimeError(f"user {it.user} interacted with every item; "
                                       "cannot sample a negative")
                while True:
                    j = rng.randrange(n_items)
                    if j not in pos:
                        break
                users.append(it.user)
                items.append(j)
                targets.append(0.0)
            yield PairBatch(np.asarray(users, dtype=np.int64),
                            np.asarray(items, dtype=np.int64),
                            np.asarray(targets, dtype=np.float64).reshape(-1, 1))

    @abstractmethod
    def reinit(self, seed: int) -> None:
        """(Re)draw initial parameters; requires attach() first."""

    @abstractmethod
    def loss(self, batch: PairBatch, X=None, Y=None) -> Tensor:
        """Training loss on one batch. X/Y default to the attached matrices;
        Y may be a Tensor to obtain gradients w.r.t. item aspect values."""

    @abstractmethod
    def scores(self, u: int, items: np.ndarray) -> np.ndarray:
        """Recommendation scores for one user over the given item ids."""

    @abstractmethod
    def explain(self, u: int, v: int, top_n: int = 1,
                require_recommended: bool = True) -> Explanation:
        """Ranked feature ids explaining why v is recommended to u."""

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def with_params(self, arrays: dict[str, np.ndarray]) -> "Recommender":
        """A shallow copy carrying the given parameters; attachment is shared
        (all of it is read-only during scoring and explanation)."""
        import copy
        if self.params and set(arrays) != set(self.params):
            raise ValueError(f"parameter names {sorted(arrays)} != expected {sorted(self.params)}")
        clone = copy.copy(self)
        clone.params = {name: Tensor(np.array(arr, dtype=np.float64), requires_grad=True)
                        for name, arr in arrays.items()}
        return clone

    def set_param_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            raise ValueError(f"parameter names {sorted(arrays)} != expected {sorted(self.params)}")
        for name, arr in arrays.items():
            current = self.params[name]
            if current.data.shape != arr.shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} != expected {current.data.shape}")
            current.data = np.array(arr, dtype=np.float64)

"""Neural recommender with counterfactual aspect explanations.

A feed-forward net scores (user, item) pairs from the concatenated aspect
rows [X_u | Y_v]. Explanations answer "which aspects of v, weakened as
little as possible, would push v out of u's top K": a per-pair delta over
Y_v is optimized to drop the score below the (K+1)-th candidate's, and the
most negatively perturbed features form the explanation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..diffcore import Adam, Tensor, add, concat_cols, gather_rows, matmul, mul, relu, sigmoid, softplus, square, sub, tmean, tsum
from ..rng import derive_seed
from .base import Explanation, PairBatch, Recommender, rank_items


class NotRecommendedError(ValueError):
    """explain() was asked about an item outside the user's current top K."""


@dataclass(frozen=True)
class CERConfig:
    hidden: tuple[int, int] = (256, 64)
    lam_reg: float = 1e-4
    top_k: int = 5             # the "recommended" cutoff the counterfactual targets
    cf_gamma: float = 100.0
    cf_steps: int = 200
    cf_lr: float = 0.01
    cf_margin_frac: float = 0.01  # margin = frac * spread of candidate scores


def counterfactual_delta(score_fn: Callable[[Tensor], Tensor], n_features: int,
                         threshold: float, margin: float, gamma: float = 100.0,
                         steps: int = 200, lr: float = 0.01) -> tuple[np.ndarray, bool, float]:
    """Minimize ||delta||^2 + gamma * max(0, margin + score(delta) - threshold).

    `score_fn` maps a [1, n_features] delta Tensor to a scalar score Tensor.
    Returns (delta, converged, final_score); converged means the final score
    sits at or below threshold - margin.
    """
    delta = Tensor(np.zeros((1, n_features)), requires_grad=True)
    opt = Adam([delta], lr=lr)
    target = threshold - margin
    for _ in range(steps):
        s = score_fn(delta)
        hinge = relu(s - target)
        obj = tsum(square(delta)) + gamma * hinge
        opt.zero_grad()
        obj.backward()
        opt.step()
    final = float(score_fn(delta).item())
    return delta.data[0].copy(), final <= target, final


class CER(Recommender):
    kind = "cer"
    binary_targets = True

    def __init__(self, n_users: int, n_items: int, n_features: int,
                 config: CERConfig = CERConfig()):
        super().__init__()
        self.config = config
        self.n_users = n_users
        self.n_items = n_items
        self.n_features = n_features

    def reinit(self, seed: int) -> None:
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "cer-init")))
        h1, h2 = self.config.hidden
        d_in = 2 * self.n_features
        self.params = {
            "W1": Tensor(rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, h1)), requires_grad=True),
            "b1": Tensor(np.zeros(h1), requires_grad=True),
            "W2": Tensor(rng.normal(0.0, 1.0 / np.sqrt(h1), (h1, h2)), requires_grad=True),
            "b2": Tensor(np.zeros(h2), requires_grad=True),
            "W3": Tensor(rng.normal(0.0, 1.0 / np.sqrt(h2), (h2, 1)), requires_grad=True),
            "b3": Tensor(np.zeros(1), requires_grad=True),
        }

    def _forward(self, x_rows, y_rows, params: dict) -> Tensor:
        z = concat_cols(x_rows, y_rows)
        h = sigmoid(add(matmul(z, params["W1"]), params["b1"]))
        h = sigmoid(add(matmul(h, params["W2"]), params["b2"]))
        return add(matmul(h, params["W3"]), params["b3"])

    def loss(self, batch: PairBatch, X=None, Y=None) -> Tensor:
        """Mean binary cross-entropy on pair logits plus L2 on the weights."""
        X = self._X if X is None else X
        Y = self._Y if Y is None else Y
        x_rows = Tensor(X[batch.users]) if not isinstance(X, Tensor) else gather_rows(X, batch.users)
        y_rows = gather_rows(Y, batch.items) if isinstance(Y, Tensor) else Tensor(Y[batch.items])
        logits = self._forward(x_rows, y_rows, self.params)
        # softplus(s) - s*y == -log sigmoid(s) for y=1, -log(1-sigmoid(s)) for y=0
        bce = tmean(sub(softplus(logits), mul(logits, batch.targets)))
        reg = None
        for p in self.params.values():
            term = tsum(square(p))
            reg = term if reg is None else reg + term
        return bce + self.config.lam_reg * reg

    def _forward_np(self, x_rows: np.ndarray, y_rows: np.ndarray) -> np.ndarray:
        p = self.params
        z = np.hstack([x_rows, y_rows])
        with np.errstate(over="ignore"):
            h = 1.0 / (1.0 + np.exp(-(z @ p["W1"].data + p["b1"].data)))
            h = 1.0 / (1.0 + np.exp(-(h @ p["W2"].data + p["b2"].data)))
        return (h @ p["W3"].data + p["b3"].data)[:, 0]

    def scores(self, u: int, items: np.ndarray) -> np.ndarray:
        items = np.asarray(items, dtype=np.int64)
        x_rows = np.repeat(self._X[u:u + 1], len(items), axis=0)
        return self._forward_np(x_rows, self._Y[items])

    def _pair_score_fn(self, u: int, v: int) -> Callable[[Tensor], Tensor]:
        """Taped single-pair score as a function of a delta on Y_v; the
        network weights enter as constants so no gradient reaches them."""
        x_row = self._X[u:u + 1]
        y_row = self._Y[v:v + 1]
        const = {name: Tensor(p.data) for name, p in self.params.items()}

        def score_fn(delta: Tensor) -> Tensor:
            return self._forward(Tensor(x_row), add(Tensor(y_row), delta), const)

        return score_fn

    def explain(self, u: int, v: int, top_n: int = 1,
                require_recommended: bool = True) -> Explanation:
        """Features whose minimal weakening un-recommends v for u.

        Raises NotRecommendedError when v is outside u's current top K and
        `require_recommended` is set; evaluation over a fixed bed relaxes
        this, keeping the same (K+1)-th-score threshold.
        """
        cfg = self.config
        cands = self.candidate_items(u)
        if v not in set(int(c) for c in cands):
            raise NotRecommendedError(f"item {v} is not among user {u}'s candidates")
        if len(cands) <= cfg.top_k:
            raise NotRecommendedError(f"user {u} has only {len(cands)} candidates; "
                                      f"no top-{cfg.top_k} threshold exists")
        scores = self.scores(u, cands)
        ranked = rank_items(scores, cands)
        if require_recommended and v not in ranked[:cfg.top_k]:
            raise NotRecommendedError(f"item {v} is not in user {u}'s top {cfg.top_k}")
        by_item = {item: float(s) for item, s in zip(cands.tolist(), scores)}
        threshold = by_item[ranked[cfg.top_k]]
        spread = float(scores.max() - scores.min())
        margin = cfg.cf_margin_frac * (spread if spread > 0.0 else 1.0)
        delta, converged, _ = counterfactual_delta(
            self._pair_score_fn(u, v), self.n_features, threshold, margin,
            gamma=cfg.cf_gamma, steps=cfg.cf_steps, lr=cfg.cf_lr)
        order = sorted(range(self.n_features), key=lambda f: (-abs(delta[f]), f))
        negative = [f for f in order if delta[f] < 0.0]
        chosen = negative[:top_n] if negative else order[:top_n]
        return Explanation(tuple(chosen), non_counterfactual=not converged)

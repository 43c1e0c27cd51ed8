"""Explicit factor model: joint factorization of X, Y and the rating matrix.

Users and items share a feature latent space (X ~ U1 V^T, Y ~ U2 V^T); the
rating matrix is fit by U1 U2^T plus a free low-rank part H1 H2^T. Scoring
blends the match on the user's k favourite features with the predicted
rating; explanations are the item's strongest features among that pool.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import Tensor, gather_rows, matmul, mul, relu, square, sub, transpose, tsum
from ..rng import derive_seed
from .base import Explanation, PairBatch, Recommender


@dataclass(frozen=True)
class EFMConfig:
    n_factors: int = 64        # r: shared feature-latent rank
    n_hidden: int = 32         # r': free rating-residual rank
    alpha: float = 0.85        # weight on the feature-match score component
    top_k_features: int = 10   # k: user features entering the score
    explain_pool: int = 0      # m: candidate pool for explanations; 0 means k
    lam_x: float = 1.0
    lam_y: float = 1.0
    lam_a: float = 1.0
    lam_reg: float = 1e-3
    lam_nn: float = 1.0

    @property
    def pool_size(self) -> int:
        return self.explain_pool if self.explain_pool > 0 else self.top_k_features


class EFM(Recommender):
    kind = "efm"
    binary_targets = False

    def __init__(self, n_users: int, n_items: int, n_features: int,
                 config: EFMConfig = EFMConfig()):
        super().__init__()
        self.config = config
        self.n_users = n_users
        self.n_items = n_items
        self.n_features = n_features
        self._Xmask: np.ndarray | None = None
        self._Ymask: np.ndarray | None = None
        self._ones_r = np.ones((config.n_factors, 1))
        self._ones_h = np.ones((config.n_hidden, 1))

    def _on_attach(self, split) -> None:
        # observation masks are dataset structure; the adversarial branch
        # keeps the clean pattern even though it shifts the values
        self._Xmask = (self._X != 0.0).astype(np.float64)
        self._Ymask = (self._Y != 0.0).astype(np.float64)

    def reinit(self, seed: int) -> None:
        if self._X is None:
            raise RuntimeError("reinit() before attach()")
        cfg = self.config
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "efm-init")))
        nz = np.concatenate([self._X[self._X > 0], self._Y[self._Y > 0]])
        mean_nz = float(nz.mean()) if nz.size else 1.0
        s = np.sqrt(mean_nz / cfg.n_factors)
        sh = 0.1 / np.sqrt(cfg.n_hidden)
        self.params = {
            "U1": Tensor(rng.uniform(0.0, 2.0 * s, (self.n_users, cfg.n_factors)), requires_grad=True),
            "U2": Tensor(rng.uniform(0.0, 2.0 * s, (self.n_items, cfg.n_factors)), requires_grad=True),
            "V": Tensor(rng.uniform(0.0, 2.0 * s, (self.n_features, cfg.n_factors)), requires_grad=True),
            "H1": Tensor(rng.uniform(0.0, 2.0 * sh, (self.n_users, cfg.n_hidden)), requires_grad=True),
            "H2": Tensor(rng.uniform(0.0, 2.0 * sh, (self.n_items, cfg.n_hidden)), requires_grad=True),
        }

    def loss(self, batch: PairBatch, X=None, Y=None) -> Tensor:
        """Masked reconstruction of the batch rows of X and Y, squared error
        on the batch's rating/negative targets, L2 and negativity penalties."""
        cfg = self.config
        X = self._X if X is None else X
        Y = self._Y if Y is None else Y
        p = self.params
        users = np.unique(batch.users)
        items = np.unique(batch.items)
        vt = transpose(p["V"])

        x_rows = X[users] if not isinstance(X, Tensor) else gather_rows(X, users)
        x_hat = matmul(gather_rows(p["U1"], users), vt)
        x_res = mul(sub(x_rows, x_hat), self._Xmask[users])
        term_x = tsum(square(x_res))

        y_rows = gather_rows(Y, items) if isinstance(Y, Tensor) else Y[items]
        y_hat = matmul(gather_rows(p["U2"], items), vt)
        y_res = mul(sub(y_rows, y_hat), self._Ymask[items])
        term_y = tsum(square(y_res))

        u1b = gather_rows(p["U1"], batch.users)
        u2b = gather_rows(p["U2"], batch.items)
        h1b = gather_rows(p["H1"], batch.users)
        h2b = gather_rows(p["H2"], batch.items)
        a_hat = matmul(mul(u1b, u2b), self._ones_r) + matmul(mul(h1b, h2b), self._ones_h)
        term_a = tsum(square(sub(a_hat, batch.targets)))

        reg = tsum(square(p["U1"])) + tsum(square(p["U2"])) + tsum(square(p["V"])) \
            + tsum(square(p["H1"])) + tsum(square(p["H2"]))
        neg = tsum(square(relu(-p["U1"]))) + tsum(square(relu(-p["U2"]))) \
            + tsum(square(relu(-p["V"]))) + tsum(square(relu(-p["H1"]))) \
            + tsum(square(relu(-p["H2"])))

        return cfg.lam_x * term_x + cfg.lam_y * term_y + cfg.lam_a * term_a \
            + cfg.lam_reg * reg + cfg.lam_nn * neg

    def _user_feature_scores(self, u: int) -> np.ndarray:
        return self.params["U1"].data[u] @ self.params["V"].data.T

    def _item_feature_scores(self, v: int) -> np.ndarray:
        return self.params["U2"].data[v] @ self.params["V"].data.T

    def _top_features(self, feature_scores: np.ndarray, k: int) -> np.ndarray:
        # stable argsort on the negated scores: ties go to the lower index
        return np.argsort(-feature_scores, kind="stable")[:k]

    def scores(self, u: int, items: np.ndarray) -> np.ndarray:
        cfg = self.config
        items = np.asarray(items, dtype=np.int64)
        x_u = self._user_feature_scores(u)
        top = self._top_features(x_u, cfg.top_k_features)
        y_items = self.params["U2"].data[items] @ self.params["V"].data.T
        match = y_items[:, top] @ x_u[top] / (cfg.top_k_features * self.n_rating)
        a_hat = self.params["U1"].data[u] @ self.params["U2"].data[items].T \
            + self.params["H1"].data[u] @ self.params["H2"].data[items].T
        return cfg.alpha * match + (1.0 - cfg.alpha) * a_hat

    def explain(self, u: int, v: int, top_n: int = 1,
                require_recommended: bool = True) -> Explanation:
        """The item's strongest features among the user's favourite pool."""
        cfg = self.config
        pool = self._top_features(self._user_feature_scores(u), cfg.pool_size)
        y_v = self._item_feature_scores(v)
        ranked = sorted((int(f) for f in pool), key=lambda f: (-y_v[f], f))
        return Explanation(tuple(ranked[:top_n]))

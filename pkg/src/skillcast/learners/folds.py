"""Worker-level fold assignment shared by every learner family."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import ConfigError


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    worker_ids: np.ndarray
    fold: np.ndarray
    k: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "_pos", {w: i for i, w in enumerate(self.worker_ids)})

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold, minlength=self.k)

    def fold_of(self, worker_ids) -> np.ndarray:
        return self.fold[[self._pos[w] for w in worker_ids]]

    def restrict(self, worker_ids):
        """Folds for a subset of workers (keeps the original labels)."""
        idx = np.array([self._pos[w] for w in worker_ids], dtype=np.int64)
        return FoldAssignment(self.worker_ids[idx], self.fold[idx], self.k, self.seed)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"worker_id": self.worker_ids, "fold": self.fold})


def make_folds(worker_ids, k=10, seed=0) -> FoldAssignment:
    """Seeded shuffle of workers dealt round-robin into ``k`` folds."""
    ids = np.asarray(worker_ids)
    n = len(ids)
    if len(np.unique(ids)) != n:
        raise ConfigError("fold assignment needs distinct worker ids")
    if k < 2 or k > n:
        raise ConfigError(f"need 2 <= k <= n_workers, got k={k}, n={n}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    perm = rng.permutation(n)
    fold = np.empty(n, dtype=np.int64)
    fold[perm] = np.arange(n) % k
    return FoldAssignment(ids, fold, int(k), int(seed))

"""Input checks shared by the estimator wrapper."""

from __future__ import annotations

import numpy as np

from .game import EFFICIENCY_TOL, Game, GameError


def check_game(game) -> Game:
    if not isinstance(game, Game):
        raise TypeError(f"expected a Game, got {type(game).__name__}")
    if not game.normalized:
        raise GameError("game must be normalized (v(N) = 0)")
    return game


def check_preimputations(X, n: int, tol: float = EFFICIENCY_TOL) -> np.ndarray:
    """2-d array of finite rows of length n, each summing to 0 within tol."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n:
        raise GameError(f"expected an array of shape (k, {n}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise GameError("payoff array has non-finite entries")
    bad = np.flatnonzero(np.abs(X.sum(axis=1)) > tol)
    if bad.size:
        raise GameError(f"{bad.size} rows do not sum to 0 (first: row {bad[0]})")
    return X

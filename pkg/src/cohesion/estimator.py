"""scikit-learn style wrapper: maps starting preimputations to flow endpoints."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_game, check_preimputations
from .corelp import least_core
from .flow import FlowConfig, integrate


class CohesionFlow(TransformerMixin, BaseEstimator):
    """Run the cohesion flow of ``game`` from each row of X.

    ``fit`` only validates the game and records its least-core value; the flow
    has nothing to learn from data. ``transform`` returns the endpoints and
    ``predict`` the termination statuses.
    """

    def __init__(self, game=None, integrator="exact", t_max=1e4, stop_phi_norm=1e-10,
                 dt=1e-3, adaptive_tol=1e-9):
        self.game = game
        self.integrator = integrator
        self.t_max = t_max
        self.stop_phi_norm = stop_phi_norm
        self.dt = dt
        self.adaptive_tol = adaptive_tol

    def _config(self):
        return FlowConfig(stop_phi_norm=self.stop_phi_norm, t_max=self.t_max, dt=self.dt,
                          adaptive_tol=self.adaptive_tol)

    def fit(self, X=None, y=None):
        g = check_game(self.game)
        if X is not None:
            check_preimputations(X, g.n)
        self._config()  # reject bad thresholds early
        self.n_features_in_ = g.n
        self.epsilon_star_, _ = least_core(g)
        self.core_nonempty_ = bool(self.epsilon_star_ <= 1e-9)
        return self

    def _run(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_preimputations(X, self.n_features_in_)
        cfg = self._config()
        return [integrate(self.game, x, cfg, self.integrator) for x in X]

    def transform(self, X):
        return np.array([tr.final for tr in self._run(X)]).reshape(-1, self.n_features_in_)

    def predict(self, X):
        return np.array([str(tr.status) for tr in self._run(X)], dtype=object)

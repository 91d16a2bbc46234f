import numpy as np
import pytest
from sklearn.base import clone

from cohesion.estimator import CohesionFlow
from cohesion.game import Game, GameError
from corpus import EXAMPLE_X, majority_game, example_game


def test_params_and_clone():
    est = CohesionFlow(game=example_game(), integrator="adaptive", t_max=50.0)
    p = est.get_params()
    assert p["integrator"] == "adaptive" and p["t_max"] == 50.0
    c = clone(est)
    assert c.get_params()["integrator"] == "adaptive"
    c.set_params(integrator="exact")
    assert c.integrator == "exact"


def test_fit_transform_predict():
    X = np.array([EXAMPLE_X, [0.0, 0.0, 0.0]])
    est = CohesionFlow(game=example_game())
    out = est.fit_transform(X)
    assert out.shape == (2, 3)
    np.testing.assert_array_equal(out[1], 0.0)
    assert est.core_nonempty_ and est.epsilon_star_ == pytest.approx(-3.0)
    assert est.predict(X).tolist() == ["ReachedCore", "ReachedCore"]
    m = CohesionFlow(game=majority_game()).fit()
    assert not m.core_nonempty_
    assert m.predict([[1.0, 0.0, -1.0]]).tolist() == ["StationaryPoint"]


def test_validation():
    with pytest.raises(TypeError):
        CohesionFlow(game=None).fit()
    with pytest.raises(GameError):
        CohesionFlow(game=Game(2, [1.0, 1.0, 4.0])).fit()
    est = CohesionFlow(game=example_game()).fit()
    with pytest.raises(GameError):
        est.transform([[1.0, 0.0, 0.0]])
    with pytest.raises(GameError):
        est.transform([[1.0, -1.0]])
    with pytest.raises(Exception):
        CohesionFlow(game=example_game()).transform([EXAMPLE_X])
    with pytest.raises(ValueError):
        CohesionFlow(game=example_game(), t_max=-1.0).fit()

import numpy as np
import pytest

from bayesknn.engine import ConstantHazard
from bayesknn.estimator import BayesianKNN, class_prior, loo_log_loss, scaled_noise, tune
from bayesknn.model import normal_known_variance
from bayesknn.model import Family


def test_class_prior_shapes():
    assert class_prior(2, 0.5).family is Family.BETA_BERNOULLI
    assert class_prior(2, 1.0, 3.0).values == (1.0, 3.0)
    assert class_prior(4, 2.0).values == (2.0,) * 4
    with pytest.raises(ValueError):
        class_prior(3, alphas=[1, 2])


def test_exclude_reports_original_rows(ripley):
    train, _ = ripley
    m = BayesianKNN.from_dataset(train, class_prior(2), ConstantHazard(0.05))
    nb = m.order(train.X[7], exclude=7)
    assert nb.n == 249 and 7 not in nb.index
    np.testing.assert_array_equal(train.y[nb.index], nb.responses)


def test_epsilon_truncates(ripley):
    train, test = ripley
    m = BayesianKNN.from_dataset(train, class_prior(2), ConstantHazard(0.05), epsilon=1e-4)
    assert m.m == 180
    res = m.query(test.X[0])
    assert res.k_posterior.n == 180


def test_query_reports_both_predictions(ripley):
    train, test = ripley
    res = BayesianKNN.from_dataset(train, class_prior(2), ConstantHazard(0.05)).query(test.X[3], test.y[3])
    assert res.map_prediction.k_posterior.probs[res.k_posterior.map_k] == 1.0
    assert res.prediction.outlier_score is not None and res.seconds > 0


def test_tune_picks_minimum(ripley):
    train, _ = ripley
    rows = range(0, 250, 25)
    res = tune(train, lambda a: class_prior(2, a), (0.5, 5.0), (0.02, 0.2), rows)
    assert len(res.table) == 4
    assert res.score == min(s for *_, s in res.table)
    assert res.score == pytest.approx(
        loo_log_loss(train, class_prior(2, res.prior_value), ConstantHazard(res.p_gamma), rows)
    )


def test_scaled_noise():
    p = normal_known_variance(1.0, 2.0, 4.0)
    assert scaled_noise(p, 0.25).values == (1.0, 2.0, 1.0)
    assert scaled_noise(p, None) is p

"""Elastic-net logistic regression against a brute-force optimizer oracle."""
import numpy as np
import pytest
from scipy.optimize import minimize

from earlywarn.errors import ParameterError
from earlywarn.learners.elastic_net import (
    ElasticNetModel,
    decision_function,
    fit_elastic_net,
    fit_elastic_net_path,
    importance,
    predict_proba,
)


def penalized_objective(w, Z, y, alpha, lam) -> float:
    """Average logistic loss plus the mixed penalty; the oracle target."""
    f = w[0] + Z @ w[1:]
    sign = 1.0 - 2.0 * y
    loss = float(np.mean(np.logaddexp(0.0, sign * f)))
    pen = lam * (alpha * np.abs(w[1:]).sum() + 0.5 * (1 - alpha) * (w[1:] ** 2).sum())
    return loss + pen


def oracle_minimum(Z, y, alpha, lam, starts) -> np.ndarray:
    best = None
    for x0 in starts:
        res = minimize(
            penalized_objective,
            np.asarray(x0, dtype=float),
            args=(Z, y, alpha, lam),
            method="Powell",
            options={"xtol": 1e-10, "ftol": 1e-13, "maxiter": 20000},
        )
        if best is None or res.fun < best.fun:
            best = res
    return best


def zscore(X):
    mu, sd = X.mean(axis=0), X.std(axis=0)
    return (X - mu) / np.where(sd > 0, sd, 1.0)


def random_dataset(rng, n=30, p=2):
    X = rng.normal(size=(n, p))
    w = rng.normal(size=p)
    probs = 1 / (1 + np.exp(-(X @ w)))
    y = (rng.random(n) < probs).astype(float)
    if y.min() == y.max():
        y[0] = 1.0 - y[0]
    return X, y


def test_matches_brute_force_oracle_two_features():
    rng = np.random.default_rng(42)
    for trial in range(25):
        X, y = random_dataset(rng)
        alpha = float(rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]))
        lam = float(10.0 ** rng.uniform(-3, 1))
        model = fit_elastic_net(X, y, alpha, lam)
        Z = zscore(X)
        ours = np.array([model.intercept, *model.coef])
        best = oracle_minimum(
            Z, y, alpha, lam,
            starts=[np.zeros(3), ours, [1.0, 1.0, -1.0], [-1.0, 0.5, 2.0]],
        )
        # we never lose to the oracle on the objective ...
        assert penalized_objective(ours, Z, y, alpha, lam) <= best.fun + 1e-9
        # ... and predictions agree well inside the 5e-3 budget
        oracle_probs = 1 / (1 + np.exp(-(best.x[0] + Z @ best.x[1:])))
        np.testing.assert_allclose(
            predict_proba(model, X), oracle_probs, atol=5e-3, rtol=0
        )


def test_full_shrinkage_limit_exact():
    rng = np.random.default_rng(7)
    X, y = random_dataset(rng, n=40, p=5)
    for alpha in (0.1, 0.5, 1.0):
        model = fit_elastic_net(X, y, alpha, 1000.0)
        assert np.all(model.coef == 0.0)
        ybar = y.mean()
        assert model.intercept == pytest.approx(np.log(ybar / (1 - ybar)), abs=1e-6)
        assert importance(model) == []


def test_unpenalized_separable_matches_oracle_loosely():
    # 4 points, perfectly separable, alpha=0 with tiny ridge
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    model = fit_elastic_net(X, y, 0.0, 1e-4)
    Z = zscore(X)
    best = oracle_minimum(Z, y, 0.0, 1e-4,
                          starts=[np.zeros(2), [model.intercept, *model.coef]])
    probs = predict_proba(model, X)
    oracle_probs = 1 / (1 + np.exp(-(best.x[0] + Z @ best.x[1:])))
    np.testing.assert_allclose(probs, oracle_probs, atol=0.05, rtol=0)


def test_objective_monotone_over_recorded_sweeps():
    """Refitting with a sweep budget of 1, 2, 3, ... never raises the
    objective: each committed sweep is a descent step."""
    rng = np.random.default_rng(3)
    X, y = random_dataset(rng, n=40, p=6)
    Z = zscore(X)
    alpha, lam = 0.5, 0.01
    full = fit_elastic_net(X, y, alpha, lam)
    prev = np.inf
    for budget in range(1, min(full.n_sweeps, 40) + 1):
        m = fit_elastic_net(X, y, alpha, lam, max_sweeps=budget)
        obj = penalized_objective(np.array([m.intercept, *m.coef]), Z, y, alpha, lam)
        assert obj <= prev + 1e-10
        prev = obj


def test_path_matches_single_fits():
    rng = np.random.default_rng(11)
    X, y = random_dataset(rng, n=50, p=4)
    lams = [10.0, 1.0, 0.1, 0.01]
    path = fit_elastic_net_path(X, y, 0.5, lams)
    assert set(path) == set(lams)
    for lam, warm in path.items():
        cold = fit_elastic_net(X, y, 0.5, lam)
        np.testing.assert_allclose(
            predict_proba(warm, X), predict_proba(cold, X), atol=1e-5, rtol=0
        )


def test_lambda_path_support_shrinks_with_penalty():
    rng = np.random.default_rng(13)
    X, y = random_dataset(rng, n=60, p=8)
    lams = np.logspace(-3, 3, 13)
    path = fit_elastic_net_path(X, y, 1.0, lams)
    # compare only decade-apart lambdas (hard guarantee there)
    sizes = {lam: int(np.count_nonzero(path[lam].coef)) for lam in lams}
    ordered = sorted(sizes)
    for small, big in zip(ordered, ordered[2:]):
        assert sizes[big] <= sizes[small]


def test_constant_column_gets_zero_coefficient():
    rng = np.random.default_rng(5)
    X, y = random_dataset(rng, n=30, p=3)
    X[:, 1] = 7.0
    model = fit_elastic_net(X, y, 0.5, 0.01)
    assert model.coef[1] == 0.0
    # and prediction ignores the column entirely
    X2 = X.copy()
    X2[:, 1] = -100.0
    np.testing.assert_array_equal(predict_proba(model, X), predict_proba(model, X2))


def test_standardization_invariance():
    rng = np.random.default_rng(9)
    X, y = random_dataset(rng, n=40, p=3)
    scaled = X * np.array([100.0, 0.01, 3.0]) + np.array([5.0, -2.0, 0.0])
    a = fit_elastic_net(X, y, 0.5, 0.1)
    b = fit_elastic_net(scaled, y, 0.5, 0.1)
    np.testing.assert_allclose(
        predict_proba(a, X), predict_proba(b, scaled), atol=1e-9, rtol=0
    )


def test_predictions_clipped_into_open_interval():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    model = fit_elastic_net(X, y, 0.0, 1e-6)  # near-separation, huge scores
    probs = predict_proba(model, X * 1e6)
    assert np.all(probs > 0.0) and np.all(probs < 1.0)


def test_importance_sorted_by_magnitude():
    rng = np.random.default_rng(17)
    X = rng.normal(size=(200, 3))
    score = 3.0 * X[:, 0] + 0.5 * X[:, 2]
    y = (rng.random(200) < 1 / (1 + np.exp(-score))).astype(float)
    model = fit_elastic_net(X, y, 0.5, 0.01, feature_names=["big", "none", "small"])
    ranked = importance(model)
    assert ranked[0][0] == "big"
    names = [n for n, _ in ranked]
    assert "none" not in names or abs(dict(ranked)["none"]) < abs(ranked[0][1])


def test_parameter_validation():
    X = np.zeros((4, 2))
    y = np.array([0.0, 1.0, 0.0, 1.0])
    with pytest.raises(ParameterError):
        fit_elastic_net(X, y, -0.1, 1.0)
    with pytest.raises(ParameterError):
        fit_elastic_net(X, y, 0.5, -1.0)
    with pytest.raises(ParameterError):
        fit_elastic_net(X, np.ones(4), 0.5, 1.0)  # single class
    with pytest.raises(ParameterError):
        fit_elastic_net(X, np.array([0.0, 2.0, 0.0, 1.0]), 0.5, 1.0)


def test_model_round_trip_through_serializer():
    from earlywarn.learners.serialize import model_from_dict, model_to_dict

    rng = np.random.default_rng(19)
    X, y = random_dataset(rng, n=30, p=3)
    model = fit_elastic_net(X, y, 0.5, 0.1)
    back = model_from_dict(model_to_dict(model))
    assert isinstance(back, ElasticNetModel)
    np.testing.assert_array_equal(predict_proba(back, X), predict_proba(model, X))
    np.testing.assert_array_equal(
        decision_function(back, X), decision_function(model, X)
    )

import numpy as np
import pytest
from sklearn.base import clone

from frekoo import BaselineClassifier, BaselineRegressor, FreKooClassifier, FreKooRegressor
from frekoo.datasets import gen_rotated_moons
from frekoo.estimators import split_by_domain
from frekoo.exceptions import InvalidConfigError, InvalidInputError

FAST = dict(coder_widths=(16,), m=4, warm_start_steps=40, finetune_steps=10, epochs=3)


@pytest.fixture(scope="module")
def stream():
    ds = gen_rotated_moons(0, n_domains=5, n_per_domain=40)
    X, y, d = ds.stacked(range(4))
    return X, y, d, ds.target


def test_split_by_domain_orders_by_index(rng):
    X = rng.standard_normal((6, 2))
    y = np.arange(6)
    parts, order = split_by_domain(X, y, np.array([3, 1, 3, 2, 1, 2]))
    assert list(order) == [1, 2, 3]
    assert [list(p[1]) for p in parts] == [[1, 4], [3, 5], [0, 2]]
    with pytest.raises(InvalidInputError):
        split_by_domain(X, y, np.zeros(6))
    with pytest.raises(InvalidInputError):
        split_by_domain(X, y, np.zeros(5))


def test_classifier_fit_predict(stream):
    X, y, d, (Xt, yt) = stream
    clf = FreKooClassifier(**FAST).fit(X, y, d)
    proba = clf.predict_proba(Xt)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert set(clf.predict(Xt)) <= {0, 1}
    assert 0 <= clf.score(Xt, yt) <= 1
    assert clf.bank_.shape == (4, clf.head_.n_params)
    assert list(clf.domains_) == [0, 1, 2, 3]


def test_string_labels_roundtrip(stream):
    X, y, d, (Xt, _) = stream
    labels = np.array(["down", "up"])[y]
    clf = BaselineClassifier("last_domain", baseline_steps=30).fit(X, labels, d)
    assert set(clf.predict(Xt)) <= {"down", "up"}


def test_params_and_clone():
    clf = FreKooClassifier(tau=0.5, epochs=7)
    params = clf.get_params()
    assert params["tau"] == 0.5 and params["epochs"] == 7
    assert clone(clf).get_params() == params
    clf.set_params(alpha=3.0)
    assert clf.alpha == 3.0


def test_invalid_config_surfaces_on_fit(stream):
    X, y, d, _ = stream
    with pytest.raises(InvalidConfigError):
        FreKooClassifier(tau=2.0, **FAST).fit(X, y, d)
    with pytest.raises(InvalidConfigError):
        BaselineClassifier("oracle").fit(X, y, d)


def test_predict_before_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        FreKooClassifier().predict(np.zeros((2, 2)))


def test_feature_count_checked(stream):
    X, y, d, _ = stream
    clf = BaselineClassifier(baseline_steps=5).fit(X, y, d)
    with pytest.raises(InvalidInputError):
        clf.predict(np.zeros((3, 5)))


def test_regressors_destandardize(rng):
    X = rng.standard_normal((90, 3))
    d = np.repeat([0, 1, 2], 30)
    y = 100.0 + 5 * X[:, 0] + d
    reg = FreKooRegressor(**FAST).fit(X, y, d)
    pred = reg.predict(X)
    assert pred.shape == (90,)
    assert abs(pred.mean() - y.mean()) < 10
    base = BaselineRegressor("offline", baseline_steps=300).fit(X, y, d)
    assert np.mean(np.abs(base.predict(X) - y)) < np.mean(np.abs(y - y.mean()))


def test_fit_is_deterministic(stream):
    X, y, d, (Xt, _) = stream
    a = FreKooClassifier(**FAST).fit(X, y, d).predict_proba(Xt)
    b = FreKooClassifier(**FAST).fit(X, y, d).predict_proba(Xt)
    assert a.tobytes() == b.tobytes()

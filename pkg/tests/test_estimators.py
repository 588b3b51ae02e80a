import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import Ridge
from sklearn.pipeline import make_pipeline

from sparsecomm.estimators import DistributedSGDRegressor, TopKSparsifier


def test_sparsifier_keeps_k_per_row(rng):
    X = rng.standard_normal((5, 200))
    for method in ("mstopk", "exact"):
        Xt = TopKSparsifier(density=0.05, method=method).fit_transform(X)
        assert (np.count_nonzero(Xt, axis=1) == 10).all()
        kept = Xt != 0
        np.testing.assert_array_equal(Xt[kept], X[kept])


def test_sparsifier_validation(rng):
    with pytest.raises(NotFittedError):
        TopKSparsifier().transform(np.ones((1, 3)))
    with pytest.raises(ValueError):
        TopKSparsifier(method="bogus").fit(np.ones((1, 3)))
    with pytest.raises(ValueError):
        TopKSparsifier(density=0).fit(np.ones((1, 3)))
    sp = TopKSparsifier().fit(np.ones((2, 3)))
    with pytest.raises(ValueError):
        sp.transform(np.ones((2, 4)))


def test_params_and_clone():
    est = DistributedSGDRegressor(m=2, n=1, density=0.1)
    assert est.get_params()["density"] == 0.1
    twin = clone(est).set_params(steps=5)
    assert twin.steps == 5 and est.steps == 2000


def test_regressor_fit_predict():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((512, 16)) / 4
    coef = rng.standard_normal(16)
    y = X @ coef
    est = DistributedSGDRegressor(m=2, n=2, density=0.25, steps=400, learning_rate=0.3, batch_size=32)
    est.fit(X, y)
    assert est.coef_.shape == (16,) and len(est.loss_curve_) == 400
    assert est.score(X, y) > 0.95
    np.testing.assert_array_equal(est.predict(X), X @ est.coef_)


def test_pipeline_composition(rng):
    X = rng.standard_normal((40, 30))
    y = X[:, 0]
    pipe = make_pipeline(TopKSparsifier(density=0.5, method="exact"), Ridge(alpha=1e-3)).fit(X, y)
    assert pipe.predict(X).shape == (40,)


def test_regressor_rejects_unknown_aggregator():
    with pytest.raises(ValueError):
        DistributedSGDRegressor(aggregator="gossip", steps=1).fit(np.ones((64, 2)), np.ones(64))

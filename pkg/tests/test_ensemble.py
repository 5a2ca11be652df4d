import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import fast_spec
from fakeads import ensemble as E
from fakeads import learners as L
from fakeads.featurize import from_dense


@given(st.integers(2, 60), st.integers(2, 60), st.floats(0.05, 0.45), st.integers(0, 1000))
def test_stratified_split_properties(n0, n1, frac, seed):
    y = np.array([0] * n0 + [1] * n1)
    keep, held = E.stratified_split(y, frac, seed)
    assert len(np.intersect1d(keep, held)) == 0 and len(keep) + len(held) == len(y)
    for c, n in ((0, n0), (1, n1)):
        k = int(np.sum(y[held] == c))
        assert 1 <= n - k  # the kept side keeps every class
        assert abs(k - frac * n) <= 1 + 1e-9 or k == n - 1
    assert abs(len(held) - round(frac * len(y))) <= 2
    again = E.stratified_split(y, frac, seed)
    assert np.array_equal(again[1], held)


def test_stratify_needs_two_per_class():
    with pytest.raises(E.StratifyError):
        E.stratified_split([0, 0, 0, 1], 0.25)


@given(st.integers(1, 40), st.integers(1, 40), st.integers(2, 6), st.integers(0, 99))
def test_stratified_folds_are_balanced(n0, n1, k, seed):
    y = np.array([0] * n0 + [1] * n1)
    folds = E.stratified_folds(y, k, seed)
    for c in (0, 1):
        counts = np.bincount(folds[y == c], minlength=k)
        assert counts.max() - counts.min() <= 1


def test_quotas_largest_remainder():
    assert E._quotas([5, 5], 0.3).tolist() == [2, 1]
    assert E._quotas([10, 3], 0.5).tolist() == [5, 1]  # round(6.5) == 6


@given(st.integers(1, 6), st.integers(4, 40), st.integers(0, 10_000), st.sampled_from(["accuracy", "log_loss"]),
       st.integers(1, 30))
def test_selection_never_worse_than_best_single(m, n, seed, metric, iters):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    P = np.clip(y + rng.normal(scale=rng.uniform(0.2, 1.2, size=(m, 1)), size=(m, n)), 0, 1)
    w = E.select_ensemble(P, y, iters, metric)
    assert w.shape == (m,) and np.isclose(w.sum(), 1) and np.all(w >= 0)
    score = E._accuracy if metric == "accuracy" else E._neg_log_loss
    assert score(w @ P, y) >= max(score(p, y) for p in P) - 1e-12
    # weights are integer counts over at most `iters` picks
    assert any(np.allclose(w * t, np.round(w * t)) for t in range(1, iters + 1))


def test_selection_starts_from_first_best_and_ties_to_lowest():
    y = np.array([1, 0, 1, 0])
    P = np.array([[0.9, 0.1, 0.9, 0.1], [0.9, 0.1, 0.9, 0.1], [0.2, 0.8, 0.2, 0.8]])
    assert E.select_ensemble(P, y, 10).tolist() == [1.0, 0.0, 0.0]


def test_stack_config_validation():
    with pytest.raises(ValueError):
        E.StackConfig(roster=[])
    with pytest.raises(ValueError):
        E.StackConfig(roster=[fast_spec("gbdt"), fast_spec("gbdt")])
    with pytest.raises(ValueError):
        E.StackConfig(validation_fraction=0.6)
    with pytest.raises(L.SpecError):
        E.StackConfig(roster=[L.LearnerSpec("gbdt", {"learning_rate": -1})])


@pytest.fixture(scope="module")
def stack(tabular_data):
    X, y = tabular_data
    cfg = E.StackConfig(roster=[fast_spec("gbdt_xgb"), fast_spec("knn_distance"), fast_spec("extra_trees_gini")],
                        seed=1)
    return E.train_stack(from_dense(X), y, cfg), X, y


def test_stack_structure(stack):
    ens, X, y = stack
    assert [m.name for m in ens.layer1] == ["gbdt_xgb", "knn_distance", "extra_trees_gini"]
    assert ens.candidate_names[3:] == ["gbdt_xgb_L2", "knn_distance_L2", "extra_trees_gini_L2"]
    assert all(m.columns[-3:] == ("stack:gbdt_xgb", "stack:knn_distance", "stack:extra_trees_gini")
               for m in ens.layer2)
    singles = [ens.val_scores[n] for n in ens.candidate_names]
    assert ens.val_scores[E.ENSEMBLE] >= max(singles)
    assert ens.chosen_final == E.ENSEMBLE
    board = ens.leaderboard()
    assert [r["rank"] for r in board] == list(range(1, len(board) + 1))
    assert board[0]["model"] == E.ENSEMBLE


def test_stack_predictions(stack):
    ens, X, y = stack
    labels, p = E.predict(ens, from_dense(X))
    assert np.array_equal(labels, (p >= 0.5).astype(int))
    P = E.candidate_probs(ens, from_dense(X))
    assert np.allclose(ens.weights @ P, p)
    assert np.mean(labels == y) > 0.85
    with pytest.raises(L.SchemaError):
        E.predict(ens, from_dense(X[:, :4]))


def test_roster_of_one_skips_layer_two(tabular_data):
    X, y = tabular_data
    ens = E.train_stack(from_dense(X), y, E.StackConfig(roster=[fast_spec("knn_uniform")]))
    assert ens.layer2 == [] and ens.weights.tolist() == [1.0]
    assert ens.val_scores[E.ENSEMBLE] == ens.val_scores["knn_uniform"]


class Boom(Exception):
    pass


def test_failing_learner_is_excluded(tabular_data, monkeypatch):
    X, y = tabular_data
    real_fit = L.fit

    def flaky(spec, X, y):
        if spec.kind == "knn_uniform":
            raise Boom("no")
        return real_fit(spec, X, y)

    monkeypatch.setattr(L, "fit", flaky)
    cfg = E.StackConfig(roster=[fast_spec("gbdt_xgb"), fast_spec("knn_uniform")])
    ens = E.train_stack(from_dense(X), y, cfg)
    assert [m.name for m in ens.layer1] == ["gbdt_xgb"]
    assert set(ens.excluded) == {"knn_uniform", "knn_uniform_L2"}
    monkeypatch.setattr(L, "fit", lambda *a: (_ for _ in ()).throw(Boom("all")))
    with pytest.raises(E.StackError):
        E.train_stack(from_dense(X), y, cfg)


def test_tiny_training_set():
    X = np.arange(12, dtype=float)[:, None]
    y = np.array([0, 1] * 6)
    ens = E.train_stack(from_dense(X), y, E.StackConfig(roster=[fast_spec("knn_uniform"), fast_spec("gbdt_xgb")]))
    assert len(ens.layer1) == 2

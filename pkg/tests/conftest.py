import os
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fakeads import learners as L
from fakeads import pipeline, synth
from fakeads.config import PipelineConfig
from fakeads.featurize import Featurizer

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# roster that trains in seconds; used wherever the full roster is not the point
FAST_ROSTER = ("gbdt_xgb", "knn_distance", "extra_trees_gini")
FAST_OVERRIDES = {"extra_trees_gini": {"n_trees": 30}}


def fast_config(seed=0, n_ads=400, **synth_kw) -> PipelineConfig:
    cfg = PipelineConfig().with_seed(seed)
    cfg.synth = replace(cfg.synth, n_ads=n_ads, **synth_kw)
    cfg.roster = FAST_ROSTER
    cfg.hyperparameters = dict(FAST_OVERRIDES)
    return cfg


@pytest.fixture(scope="session")
def small_corpus():
    return synth.generate_corpus(synth.SynthConfig(n_ads=400, seed=3))


@pytest.fixture(scope="session")
def small_records(small_corpus):
    c = small_corpus
    records, *_ = pipeline.records_from_raw(c.ads, c.gazetteer, c.labels)
    return records


@pytest.fixture(scope="session")
def small_split(small_records):
    """(featurizer, X_train, y_train, X_test, y_test, train, test) on the small corpus."""
    train, test = pipeline.split_records(small_records, 0.2, 0)
    fz = Featurizer()
    Xtr = fz.fit_transform(train)
    return fz, Xtr, pipeline.label_vector(train), fz.transform(test), pipeline.label_vector(test), train, test


@pytest.fixture(scope="session")
def tabular_data():
    """Small dense problem: fake iff a noisy linear score is positive."""
    rng = np.random.default_rng(11)
    X = rng.normal(size=(240, 5))
    y = (X[:, 0] + 0.5 * X[:, 1] - 0.25 * X[:, 2] + 0.3 * rng.normal(size=240) > 0).astype(np.int64)
    return X, y


def fast_spec(name, seed=0):
    spec = L.preset(name, seed)
    extra = FAST_OVERRIDES.get(name)
    if extra:
        spec = replace(spec, hyperparameters={**spec.hyperparameters, **extra})
    return spec


# -- acceptance summary -----------------------------------------------------------

ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])

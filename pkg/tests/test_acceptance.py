"""Acceptance checks, one test per criterion; each records a PASS/FAIL line.

The heavy synthetic runs (criteria 8 to 11) are marked slow and share one
session cache of five seeded full-roster runs.
"""
import difflib
import os
import re
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from fakeads import clean, corpus, geo, pipeline, synth
from fakeads import bundle as B
from fakeads import ensemble as E
from fakeads import eval as ev
from fakeads import extract as X
from fakeads.config import PipelineConfig
from fakeads.featurize import BASIC, REFINED, SPATIAL, Featurizer
from fakeads.learners import knn as K
from fakeads.learners import mlp as M
from fakeads.learners import trees as T

from conftest import fast_config, record_acceptance

SEEDS = (0, 1, 2, 3, 4)


# -- 1: metrics oracle -------------------------------------------------------------

def _oracle(tp, tn, fp, fn):
    F = Fraction
    p = F(tp, tp + fp) if tp + fp else F(0)
    r = F(tp, tp + fn) if tp + fn else F(0)
    f1 = 2 * p * r / (p + r) if p + r else F(0)
    return {"precision": p, "recall": r, "f1": f1, "accuracy": F(tp + tn, tp + tn + fp + fn),
            "fpr": F(fp, fp + tn) if fp + tn else F(0), "fnr": F(fn, fn + tp) if fn + tp else F(0)}


def test_criterion_01_metrics_oracle():
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for tp, tn, fp, fn in np.ndindex(13, 13, 13, 13):
        if tp + tn + fp + fn == 0:
            continue
        rep = ev.metrics(ev.ConfusionCounts(tp, tn, fp, fn))
        for name, want in _oracle(tp, tn, fp, fn).items():
            worst = max(worst, abs(getattr(rep, name) - float(want)))
        n += 1
    secs = time.perf_counter() - t0
    ok = worst <= 1e-12 and secs < 5
    record_acceptance(1, ok, f"{n} tuples, max |err| {worst:.2e}, {secs:.2f}s")
    assert ok


# -- 2: extraction of the printed fake sample ---------------------------------------

PRINTED_FAKE = (
    "nhà mt an bình, phường 6, quận 5: dtkv: 10x40m, công nhận 400m2, nhà cấp iv, đang để trống, "
    "cần bán giá 55.5 tỷ. đơn giá chỉ 137 triệu/m2, đảm bảo không còn sản phẩm so sánh. vị trí mặt "
    "tiền thuận tiện kinh doanh, khuôn viên lớn phù hợp với nhiều ngành nghề hoặc xây cao cấp, building. "
    "liên hệ 0906681528 quang dương để xem bđs trên. trân trọng cảm ơn quý khách."
)


def test_criterion_02_printed_fake_sample():
    ad = corpus.preprocess(corpus.RawAd("sample", "example.vn", PRINTED_FAKE))
    ex, decision = X.extract_ad(ad, X.default_rules())
    got = {"price": ex.draft.price, "area": ex.draft.area, "house_type": ex.enriched.house_type,
           "road": ex.draft.road, "district": ex.draft.district, "road_width": ex.enriched.road_width}
    want = {"price": 55_500.0, "area": 400.0, "house_type": X.FRONTAGE, "road": "an bình",
            "district": "5", "road_width": 20.0}
    ok = decision.keep and got == want
    record_acceptance(2, ok, f"extracted {got}")
    assert ok


# -- 3: preprocessing of the crawled listing -----------------------------------------

CRAWLED = (
    "Bán nhà mặt tiền đường Nguyễn Chí Thanh, phường 12, quận 5. Đoạn ngay ngô quyền và nguyễn chí thanh. "
    "Gần bệnh viện chợ rẫy, <br/> (10x28m) nhà nở hậu 11m. Diện tích công nhận: 290m2. Nhà 2 lầu. <br/>DT: "
    "10x30m, nở hậu nhẹ, CN 290m2.<br/>Tiện xây mới tòa nhà vp, ngân hàng, khách sạn,... Khu nhiều bệnh viện, "
    "trường học, đầy đủ tiện ích xung quanh. <br/>Giá bán: 60.5 tỷ thương lượng lấy lộc với khách thiện chí."
    "<br/>Quý khách mua và xem nhà liên hệ Trần Toàn: 0918 462 562. <br/>- Thông tin chính xác 100%. "
    "Người thật, việc thật."
)
PRINTED_CLEAN = (
    "bán nhà mặt tiền đường nguyễn chí thanh, phường 12, quận 5, đoạn ngay ngô quyền và nguyễn chí thanh, "
    "gần bệnh viện chợ rẫy. (10x28m) nhà nở hậu 11m. diện tích công nhận: 290m2, nhà 2 lầu, dt: 10x30m, "
    "nở hậu nhẹ, cn 290m2. tiện xây mới tòa nhà vp, ngân hàng, khách sạn,... khu nhiều bệnh viện, trường "
    "học đầy đủ tiện tích xung quanh. Giá bán: 60.5 tỷ thương lượng lấy lộc với khách thiện chí. quý khách "
    "mua và xem nhà liên hệ trần toàn: 0918 462 562.- thông tin chính xác 100% người thật, việc thật."
)
_TAG_WINDOW = 3  # chars around a former tag where punctuation and spacing may differ


def tag_boundaries(raw, cleaned):
    """Offsets in ``cleaned`` where a tag used to sit.

    Each tag-free piece is cleaned on its own and located in order; the gap
    between consecutive pieces is where the tag was rendered.
    """
    pieces = [corpus.clean_text(p) for p in re.split(r"<[^<>]*>", raw) if p.strip()]
    bounds, pos = [], 0
    for i, piece in enumerate(pieces):
        core = piece.strip(" .,;:!?")
        at = cleaned.find(core, pos)
        assert at >= 0, piece
        if i:
            bounds.append(at)
        pos = at + len(core)
    return bounds


def classify_hunks(ours, printed, bounds):
    allowed, offending = [], []
    sm = difflib.SequenceMatcher(None, ours, printed, autojunk=False)
    for op, a0, a1, b0, b1 in sm.get_opcodes():
        if op == "equal":
            continue
        hunk = (ours[max(a0 - 6, 0):a1 + 6], printed[max(b0 - 6, 0):b1 + 6])
        changed = ours[a0:a1] + printed[b0:b1]
        near_tag = any(b - _TAG_WINDOW - 2 <= a0 and a1 <= b + _TAG_WINDOW for b in bounds)
        if near_tag and not any(ch.isalnum() for ch in changed):
            allowed.append(hunk)
        else:
            offending.append(hunk)
    return allowed, offending


def test_criterion_03_preprocessing_table():
    ours = corpus.clean_text(CRAWLED)
    allowed, offending = classify_hunks(ours, PRINTED_CLEAN, tag_boundaries(CRAWLED, ours))
    ok = not offending
    detail = f"{len(allowed)} hunks at former tags, {len(offending)} elsewhere"
    if offending:
        detail += ": " + "; ".join(f"{a!r} vs {b!r}" for a, b in offending)
    record_acceptance(3, ok, detail)
    assert ok, detail


def test_tag_hunk_classifier_on_a_clean_case():
    raw = "Bán nhà quận 5<br/>Giá 3 tỷ"
    ours = corpus.clean_text(raw)
    assert classify_hunks(ours, ours.replace(". giá", ", giá"), tag_boundaries(raw, ours))[1] == []
    assert classify_hunks(ours, ours.replace("nhà", "nhá"), tag_boundaries(raw, ours))[1] != []


# -- 4: confusion reconstruction -------------------------------------------------------

def test_criterion_04_confusion_reconstruction():
    fake, real = 3370, 2447
    fp, fn = round(0.098 * real), round(0.074 * fake)
    rep = ev.metrics(ev.ConfusionCounts(tp=fake - fn, tn=real - fp, fp=fp, fn=fn))
    ok = abs(rep.accuracy - 0.915) <= 0.002 and round(rep.fpr, 3) == 0.098 and round(rep.fnr, 3) == 0.074
    record_acceptance(4, ok, f"FP {fp}, FN {fn}, accuracy {rep.accuracy:.4f}")
    assert ok


# -- 5: nearest roads against brute force ----------------------------------------------

def _brute_nearest(road, district, g, k=3):
    ox, oy = g.entries[(district, road)]
    cands = sorted((abs(x - ox) + abs(y - oy), r) for (d, r), (x, y) in g.entries.items()
                   if d == district and r != road)
    out = [r for _, r in cands[:k]] or [road]
    return out + [out[-1]] * (k - len(out))


def test_criterion_05_nearest_roads_oracle():
    t0 = time.perf_counter()
    queries = mismatches = 0
    for s in range(100):
        rng = np.random.default_rng([5, s])
        entries = {}
        for i in range(int(rng.integers(1, 201))):
            # coarse integer grid so distance ties are common
            entries[(str(rng.integers(1, 6)), f"road {i}")] = tuple(float(v) for v in rng.integers(0, 12, 2))
        g = geo.Gazetteer(entries)
        for d, r in entries:
            queries += 1
            mismatches += geo.nearest_roads(r, d, g) != _brute_nearest(r, d, g)
    secs = time.perf_counter() - t0
    ok = mismatches == 0 and secs < 10
    record_acceptance(5, ok, f"{queries} queries, {mismatches} mismatches, {secs:.2f}s")
    assert ok


# -- 6: dedup on planted duplicates ----------------------------------------------------

def test_criterion_06_dedup_planted_groups():
    false_merges = planted = removed = 0
    for seed in SEEDS:
        c = synth.generate_corpus(synth.SynthConfig(n_ads=1000, duplicate_rate=0.1, seed=seed))
        group = {t.id: t.group for t in c.truth}
        planted += sum(t.kind == "duplicate" for t in c.truth)
        ext = pipeline.extract_stage(c.ads, gazetteer=c.gazetteer)
        _, report = clean.clean_records(ext.kept)
        removed += len(report.duplicate_of)
        false_merges += sum(group[a] != group[b] for a, b in report.duplicate_of.items())
    ok = false_merges == 0 and removed >= 0.95 * planted
    record_acceptance(6, ok, f"{removed}/{planted} planted duplicates removed, {false_merges} false merges")
    assert ok


# -- 7: learner checks -------------------------------------------------------------------

def _knn_oracle(P, y, Q, k, weighted):
    out = []
    for q in Q:
        d = np.sqrt(((P - q) ** 2).sum(axis=1))
        idx = sorted(range(len(P)), key=lambda j: (d[j], j))[:k]
        if weighted and any(d[j] == 0 for j in idx):
            idx = [j for j in idx if d[j] == 0]
            w = np.ones(len(idx))
        else:
            w = np.array([1 / d[j] if weighted else 1.0 for j in idx])
        out.append(float(np.dot(w, y[idx]) / w.sum()))
    return np.array(out)


def test_criterion_07_learner_checks():
    t0 = time.perf_counter()
    knn_bad = 0
    for s in range(40):
        rng = np.random.default_rng([7, s])
        n, d = int(rng.integers(1, 201)), int(rng.integers(1, 6))
        P = rng.integers(-3, 4, size=(n, d)).astype(float)
        y = rng.integers(0, 2, n)
        Q = rng.integers(-3, 4, size=(10, d)).astype(float)
        for k in (1, 5, 7):
            for weighted in (False, True):
                got = K.knn_proba(K.fit_knn(P, y, k, weighted), Q)
                knn_bad += not np.allclose(got, _knn_oracle(P, y, Q, min(k, n), weighted), rtol=0, atol=1e-12)
    gbdt_bad = 0
    for s in range(10):
        rng = np.random.default_rng([70, s])
        Xg = rng.normal(size=(200, 5))
        yg = (Xg[:, 0] * Xg[:, 1] + 0.5 * rng.normal(size=200) > 0).astype(np.int64)
        m = T.fit_gbdt(Xg, yg, learning_rate=0.3, n_trees=60, early_stopping=False, seed=s)
        gbdt_bad += bool(np.any(np.diff(m.train_loss) > 1e-12))
    grad_err = 0.0
    for s in range(5):
        rng = np.random.default_rng([700, s])
        net = M.MLPNet.init(6, hidden=(8, 8, 8, 8), weight_decay=1e-4, rng=rng)
        net.biases = [rng.normal(scale=0.1, size=b.shape) for b in net.biases]
        grad_err = max(grad_err, M.gradient_check(net, rng.normal(size=(12, 6)), rng.integers(0, 2, 12)))
    secs = time.perf_counter() - t0
    ok = knn_bad == 0 and gbdt_bad == 0 and grad_err < 1e-4 and secs < 60
    record_acceptance(7, ok, f"knn mismatches {knn_bad}/240, gbdt loss increases {gbdt_bad}/10, "
                             f"mlp grad err {grad_err:.1e}, {secs:.1f}s")
    assert ok


# -- 8 to 11: seeded synthetic runs -----------------------------------------------------

def _synthetic_run(seed):
    """One end-to-end run on the default corpus: generation through test metrics."""
    t0 = time.perf_counter()
    cfg = PipelineConfig().with_seed(seed)
    c = synth.generate_corpus(replace(synth.SynthConfig(), seed=seed))
    records, *_ = pipeline.records_from_raw(c.ads, c.gazetteer, c.labels, None, cfg.ranges, cfg.dedup)
    train, test = pipeline.split_records(records, 0.2, seed)
    fz = Featurizer(cfg.featurizer)
    Xtr, Xte = fz.fit_transform(train), fz.transform(test)
    ytr, yte = pipeline.label_vector(train), pipeline.label_vector(test)
    ens = E.train_stack(Xtr, ytr, cfg.stack_config())
    report = ev.evaluate(E.predict(ens, Xte)[0], yte)
    secs = time.perf_counter() - t0
    return {"seed": seed, "ens": ens, "report": report, "seconds": secs,
            "Xtr": Xtr, "Xte": Xte, "ytr": ytr, "yte": yte, "cfg": cfg}


@pytest.fixture(scope="session")
def synthetic_runs():
    return [_synthetic_run(s) for s in SEEDS]


def _cores():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()


@pytest.mark.slow
def test_criterion_08_ensemble_selection(synthetic_runs):
    rows = []
    for run in synthetic_runs:
        ens = run["ens"]
        best_single = max(v for k, v in ens.val_scores.items() if k != E.ENSEMBLE)
        rows.append((run["seed"], ens.val_scores[E.ENSEMBLE], best_single))
    ok = all(w >= b for _, w, b in rows)
    record_acceptance(8, ok, ", ".join(f"seed {s}: {w:.4f} >= {b:.4f}" for s, w, b in rows))
    assert ok


@pytest.mark.slow
def test_criterion_09_end_to_end(synthetic_runs):
    rows = [(r["seed"], r["report"].accuracy, r["report"].f1, r["seconds"]) for r in synthetic_runs]
    # each run is timed on this machine; with fewer than 8 cores that bounds the 8-core time
    ok = all(a >= 0.85 and f >= 0.85 and s < 600 for _, a, f, s in rows)
    record_acceptance(9, ok, f"{_cores()} core(s); " + ", ".join(
        f"seed {s}: acc {a:.4f} f1 {f:.4f} {t:.0f}s" for s, a, f, t in rows))
    assert ok


@pytest.mark.slow
def test_criterion_10_text_only_gap(synthetic_runs):
    rows = []
    for run in synthetic_runs:
        drop = [SPATIAL, REFINED, BASIC]
        ens = E.train_stack(run["Xtr"].drop_tags(drop), run["ytr"], run["cfg"].stack_config())
        text = ev.evaluate(E.predict(ens, run["Xte"].drop_tags(drop))[0], run["yte"]).accuracy
        rows.append((run["seed"], run["report"].accuracy, text))
    wins = sum(full - text >= 0.05 for _, full, text in rows)
    ok = wins >= 4
    record_acceptance(10, ok, f"gap >= 0.05 on {wins}/5 seeds; " + ", ".join(
        f"seed {s}: {f:.4f} vs text {t:.4f}" for s, f, t in rows))
    assert ok


@pytest.mark.slow
def test_criterion_11_importance_sanity():
    seed = 0
    cfg = PipelineConfig().with_seed(seed)
    c = synth.generate_corpus(replace(synth.SynthConfig(), seed=seed))
    records, *_ = pipeline.records_from_raw(c.ads, c.gazetteer, c.labels, None, cfg.ranges, cfg.dedup)
    train, test = pipeline.split_records(records, 0.2, seed)
    fz = Featurizer(cfg.featurizer)
    Xtr = ev.with_noise_column(fz.fit_transform(train), seed=seed)
    Xte = ev.with_noise_column(fz.transform(test), seed=seed + 10_000)
    ens = E.train_stack(Xtr, pipeline.label_vector(train), cfg.stack_config())
    rep = ev.permutation_importance(ens, Xte, pipeline.label_vector(test), n_shuffles=5, seed=seed)
    rank = rep.ranking()
    ok = abs(rep.importance["noise"]) <= 0.01 and rank[0] == "price"
    record_acceptance(11, ok, f"noise {rep.importance['noise']:+.4f}, top "
                      + ", ".join(f"{g} {rep.importance[g]:.4f}" for g in rank[:3]))
    assert ok


# -- 12: determinism and persistence ----------------------------------------------------

def test_criterion_12_determinism_and_persistence(tmp_path):
    cfg = fast_config(seed=12, n_ads=600)

    def once():
        c = synth.generate_corpus(cfg.synth)
        return pipeline.run_pipeline(cfg, c.ads, c.gazetteer, c.labels)
    a, b = once(), once()
    same_report = a.metrics.to_json().encode() == b.metrics.to_json().encode()

    records = (a.test + a.train)[:100]
    loaded = B.load_bundle(B.save_bundle(a.bundle, tmp_path / "bundle.zip"))
    l0, p0 = B.predict_records(a.bundle, records)
    l1, p1 = B.predict_records(loaded, records)
    same_pred = len(records) == 100 and np.array_equal(l0, l1) and p0.tobytes() == p1.tobytes()
    ok = same_report and same_pred
    record_acceptance(12, ok, f"metrics byte-identical {same_report}, "
                              f"{len(records)} reloaded predictions bit-identical {same_pred}")
    assert ok

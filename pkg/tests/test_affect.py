import numpy as np
import pytest

from melodica.affect import (
    ClassifierSpec,
    DegenerateData,
    EdaClassParams,
    EdaRecording,
    InsufficientClassMembers,
    Kernel,
    MissingAnnotations,
    SignalTooShort,
    TrainedModel,
    band_limits_hz,
    cwt,
    default_scales,
    evaluate,
    extract_features,
    kkt_violation,
    knn_classify,
    knn_train,
    read_eda_csv,
    roc_auc,
    segment_conversations,
    stratified_folds,
    svm_train,
    synth_eda,
    write_eda_csv,
)
from melodica.affect.classify import KKT_TOL, Normalizer, _smo
from melodica.affect.data import (
    ConversationAnnotation,
    SubAnnotation,
    synth_eda_dataset,
)
from melodica.affect.wavelet import FEATURE_LEN

FS = 32


# ---------------------------------------------------------------------------
# wavelet


def test_band_capped_at_nyquist():
    lo, hi = band_limits_hz(FS)
    assert lo == 0.5
    assert hi == pytest.approx(15.9)


def test_scales_give_decreasing_pseudofreqs():
    scales = default_scales()
    sc = cwt(np.random.default_rng(0).normal(size=256), scales=scales)
    assert np.all(np.diff(sc.scales) > 0)
    assert np.all(np.diff(sc.pseudo_freqs_hz) < 0)
    assert sc.pseudo_freqs_hz[0] == pytest.approx(15.9)
    assert sc.pseudo_freqs_hz[-1] == pytest.approx(0.5)


def test_cwt_zero_signal():
    sc = cwt(np.zeros(128))
    assert np.all(sc.coefficients == 0)


def test_cwt_too_short():
    with pytest.raises(SignalTooShort):
        cwt(np.zeros(32))


def test_cwt_impulse_traces_envelope():
    n0 = 300
    x = np.zeros(600)
    x[n0] = 1.0
    sc = cwt(x)
    mag = sc.magnitude()
    for row in (0, 10, 23):
        peak = int(np.argmax(mag[row]))
        assert abs(peak - n0) <= 1
        # symmetric decay around the center
        assert mag[row, n0 + 10] == pytest.approx(mag[row, n0 - 10], rel=1e-6)


@pytest.mark.parametrize("freq", [1.0, 2.0, 4.0, 8.0])
def test_cwt_sine_ridge(freq):
    t = np.arange(FS * 30) / FS
    sc = cwt(np.sin(2 * np.pi * freq * t))
    ridge = int(np.argmax(sc.magnitude().mean(axis=1)))
    ratio = sc.pseudo_freqs_hz[ridge] / freq
    bin_ratio = sc.pseudo_freqs_hz[0] / sc.pseudo_freqs_hz[1]
    assert 1.0 / bin_ratio <= ratio <= bin_ratio


def test_cwt_linearity():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=200), rng.normal(size=200)
    a, b = 1.7, -0.4
    combined = cwt(a * x + b * y).coefficients
    separate = a * cwt(x).coefficients + b * cwt(y).coefficients
    assert np.max(np.abs(combined - separate)) < 1e-9


def test_features_zero_segment():
    fv = extract_features(np.zeros(1440))
    assert len(fv.values) == FEATURE_LEN
    assert np.all(fv.values == 0.0)


def test_features_scale_covariant():
    rng = np.random.default_rng(4)
    x = rng.normal(size=1440)
    f1 = extract_features(x).values
    f2 = extract_features(2 * x).values
    magnitude_part = slice(0, FEATURE_LEN - 3)
    assert np.allclose(f2[magnitude_part], 2 * f1[magnitude_part], rtol=1e-9)
    assert f2[-3] == pytest.approx(4 * f1[-3])  # energy is quadratic
    assert f2[-2] == pytest.approx(2 * f1[-2])
    assert f2[-1] == pytest.approx(2 * f1[-1])


def test_features_reproducible():
    x = synth_eda(EdaClassParams(seed=5), duration_s=45.0).samples_us
    assert np.array_equal(extract_features(x).values, extract_features(x).values)


def test_feature_means_separate_synthetic_classes():
    fa, fb = [], []
    for seed in range(12):
        a = synth_eda(EdaClassParams(scr_rate_per_min=2.0, seed=seed), 45.0)
        b = synth_eda(EdaClassParams(scr_rate_per_min=8.0, seed=1000 + seed), 45.0)
        fa.append(extract_features(a.samples_us).values)
        fb.append(extract_features(b.samples_us).values)
    fa, fb = np.array(fa), np.array(fb)
    pooled = np.sqrt((fa.var(axis=0) + fb.var(axis=0)) / 2) + 1e-12
    gap = np.abs(fa.mean(axis=0) - fb.mean(axis=0)) / pooled
    assert gap.max() > 2.0


# ---------------------------------------------------------------------------
# segmentation and synthesis


def test_segment_counts():
    rec = synth_eda(EdaClassParams(seed=1), duration_s=45.0 * 3)
    segments = segment_conversations(rec)
    assert len(segments) == 3
    assert sum(len(s.subsegments) for s in segments) == 9
    assert all(len(s.samples_us) == 45 * FS for s in segments)


def test_segment_missing_annotations():
    rec = EdaRecording(samples_us=np.zeros(FS * 60))
    with pytest.raises(MissingAnnotations):
        segment_conversations(rec)


def test_segment_subsegment_outside_parent():
    bad = ConversationAnnotation(
        start_s=0.0,
        end_s=45.0,
        section="S1",
        label="S1",
        subsegments=(SubAnnotation(30.0, 50.0, "learn"),),
    )
    rec = EdaRecording(samples_us=np.zeros(FS * 60), annotations=(bad,))
    with pytest.raises(MissingAnnotations):
        segment_conversations(rec)


def test_synth_eda_tonic_only():
    rec = synth_eda(EdaClassParams(scr_rate_per_min=0.0, drift_us_per_s=0.0, seed=2), 45.0)
    assert np.allclose(rec.samples_us, rec.samples_us[0])


def test_synth_eda_deterministic():
    p = EdaClassParams(scr_rate_per_min=6.0, seed=7)
    a = synth_eda(p, 300.0)
    b = synth_eda(p, 300.0)
    assert np.array_equal(a.samples_us, b.samples_us)


def test_synth_eda_rate_scales_activity():
    lo = synth_eda(EdaClassParams(scr_rate_per_min=1.0, seed=3), 600.0)
    hi = synth_eda(EdaClassParams(scr_rate_per_min=10.0, seed=3), 600.0)
    assert hi.samples_us.std() > lo.samples_us.std()


def test_eda_csv_roundtrip(tmp_path):
    rec = synth_eda(EdaClassParams(seed=11, scr_rate_per_min=5.0), 90.0, section="S2")
    data, ann = tmp_path / "eda.csv", tmp_path / "ann.csv"
    write_eda_csv(data, rec, ann)
    back = read_eda_csv(data, ann)
    assert np.allclose(back.samples_us, rec.samples_us, atol=1e-7)
    assert len(back.annotations) == len(rec.annotations)
    got = back.annotations[0]
    assert got.section == "S2"
    assert [s.kind for s in got.subsegments] == ["learn", "play", "feedback"]


# ---------------------------------------------------------------------------
# SVM / SMO


def blobs(n=20, gap=3.0, seed=0):
    rng = np.random.default_rng(seed)
    xa = rng.normal(0, 1, (n, 2)) + [gap, 0.0]
    xb = rng.normal(0, 1, (n, 2)) - [gap, 0.0]
    return np.vstack([xa, xb]), ["pos"] * n + ["neg"] * n


def test_svm_linear_separable():
    x, y = blobs()
    model = svm_train(x, y, Kernel("linear"), c=1.0)
    assert model.predict(x) == y
    d = model.decision(x)
    assert np.all(d[:20] > 0) and np.all(d[20:] < 0)


def test_svm_xor_rbf():
    base = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    x = np.tile(base, (4, 1))
    y = ["a", "b", "b", "a"] * 4
    model = svm_train(x, y, Kernel("rbf", gamma=1.0), c=10.0)
    assert model.predict(x) == y


def test_svm_label_flip_negates_decision():
    x, y = blobs(seed=5)
    flipped = ["neg" if v == "pos" else "pos" for v in y]
    m1 = svm_train(x, y, Kernel("linear"), c=1.0)
    m2 = svm_train(x, flipped, Kernel("linear"), c=1.0)
    d1 = m1.decision(x, positive="pos")
    d2 = m2.decision(x, positive="pos")
    assert np.max(np.abs(d1 + d2)) < 1e-6


def test_svm_degenerate_single_class():
    with pytest.raises(DegenerateData):
        svm_train(np.zeros((5, 2)), ["same"] * 5)


def test_smo_kkt_and_alpha_invariants():
    rng = np.random.default_rng(8)
    for c in (0.5, 1.0, 10.0):
        x = rng.normal(size=(30, 3))
        y = np.where(x[:, 0] + 0.5 * x[:, 1] > 0, 1.0, -1.0)
        norm = Normalizer.fit(x)
        xs = norm.apply(x)
        kmat = Kernel("rbf", gamma=1 / 3).matrix(xs, xs)
        alphas, bias = _smo(kmat, y, c)
        assert np.all(alphas >= -1e-12) and np.all(alphas <= c + 1e-12)
        assert abs(np.sum(alphas * y)) < 1e-6
        assert kkt_violation(kmat, y, alphas, bias, c) <= KKT_TOL * 1.01


def test_smo_objective_nondecreasing():
    x, y = blobs(seed=6)
    history = []
    svm_train(x, y, Kernel("rbf"), c=1.0, objective_history=history)
    assert len(history) > 0
    assert all(b >= a - 1e-9 for a, b in zip(history, history[1:]))


def test_svm_three_class_one_vs_one():
    rng = np.random.default_rng(10)
    centers = {"a": (0, 0), "b": (6, 0), "c": (0, 6)}
    x, y = [], []
    for name, c in centers.items():
        x.append(rng.normal(0, 0.8, (15, 2)) + c)
        y += [name] * 15
    x = np.vstack(x)
    model = svm_train(x, y, Kernel("linear"), c=1.0)
    assert len(model.machines) == 3
    assert np.mean(np.array(model.predict(x)) == np.array(y)) == 1.0


# ---------------------------------------------------------------------------
# KNN


def test_knn_memorizes_training_point():
    x = np.array([[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]])
    y = ["a", "b", "c"]
    assert knn_classify(x, y, [5.0, 5.0], k=1) == "b"


def test_knn_tie_breaks_by_nearest():
    # query equidistant from one 'a' and one 'b'; stable order keeps 'a' first
    x = np.array([[-1.0, 0.0], [1.0, 0.0]])
    y = ["a", "b"]
    assert knn_classify(x, y, [0.0, 0.0], k=2) == "a"


def test_knn_two_blobs_holdout():
    rng = np.random.default_rng(12)
    x, y = blobs(n=40, gap=3.0, seed=12)
    model = knn_train(x, y, k=5)
    qx = np.vstack([rng.normal(0, 1, (50, 2)) + [3, 0], rng.normal(0, 1, (50, 2)) - [3, 0]])
    qy = ["pos"] * 50 + ["neg"] * 50
    acc = np.mean(np.array(model.predict(qx)) == np.array(qy))
    assert acc >= 0.95


def test_knn_k_larger_than_train():
    with pytest.raises(ValueError):
        knn_train(np.zeros((3, 2)), ["a", "b", "a"], k=5)


# ---------------------------------------------------------------------------
# evaluation


def test_evaluate_perfectly_separable():
    x, y = blobs(n=25, gap=5.0, seed=13)
    res = evaluate(ClassifierSpec(kind="svm", kernel="linear"), x, y, folds=5, seed=1)
    assert res.accuracy == 1.0
    assert res.auc == 1.0
    assert res.precision == 1.0 and res.recall == 1.0
    assert np.trace(res.confusion) == 50


def test_evaluate_coinflip_labels_near_chance():
    rng = np.random.default_rng(14)
    x = rng.normal(size=(100, 5))
    y = list(rng.choice(["h", "t"], size=100))
    res = evaluate(ClassifierSpec(kind="svm", kernel="rbf"), x, y, folds=5, seed=2)
    assert 0.3 <= res.accuracy <= 0.7


def test_evaluate_deterministic_and_order_invariant():
    x, y = blobs(n=15, gap=1.5, seed=15)
    spec = ClassifierSpec(kind="svm", kernel="rbf")
    r1 = evaluate(spec, x, y, folds=5, seed=3)
    r2 = evaluate(spec, x, y, folds=5, seed=3)
    assert r1.accuracy == r2.accuracy and r1.auc == r2.auc
    # permute dataset rows; same seed must give the same metrics
    rng = np.random.default_rng(16)
    perm = rng.permutation(len(y))
    r3 = evaluate(spec, x[perm], [y[i] for i in perm], folds=5, seed=3)
    assert r3.accuracy == r1.accuracy
    assert r3.auc == pytest.approx(r1.auc, abs=1e-12)


def test_evaluate_insufficient_members():
    x = np.zeros((6, 2))
    y = ["a", "a", "a", "a", "a", "b"]
    with pytest.raises(InsufficientClassMembers):
        evaluate(ClassifierSpec(kind="svm", kernel="linear"), x, y, folds=5, seed=0)


def test_stratified_folds_cover_everything():
    x, y = blobs(n=13, gap=2.0, seed=17)
    folds = stratified_folds(x, y, 5, seed=4)
    all_idx = np.sort(np.concatenate(folds))
    assert np.array_equal(all_idx, np.arange(len(y)))


def test_roc_auc_known_values():
    scores = np.array([0.9, 0.8, 0.7, 0.6])
    assert roc_auc(scores, np.array([True, True, False, False])) == 1.0
    assert roc_auc(scores, np.array([False, False, True, True])) == 0.0
    assert roc_auc(scores, np.array([True, False, True, False])) == pytest.approx(0.75)


def test_eda_pipeline_two_rates_classifiable():
    feats, labels = [], []
    for section, rate, seed in [("S1", 2.0, 21), ("S3", 8.0, 22)]:
        rec = synth_eda(EdaClassParams(scr_rate_per_min=rate, seed=seed), 45.0 * 40, section=section)
        for seg in segment_conversations(rec):
            feats.append(extract_features(seg.samples_us).values)
            labels.append(seg.label)
    res = evaluate(ClassifierSpec(kind="svm", kernel="rbf"), np.array(feats), labels, folds=5, seed=5)
    assert res.accuracy >= 0.70


# ---------------------------------------------------------------------------
# model serialization


def test_model_roundtrip_identical_predictions(tmp_path):
    x, labels = synth_eda_dataset(segments_per_class=8)
    model = svm_train(x, labels, Kernel("rbf"), c=1.0)
    path = tmp_path / "model.json"
    model.save(path)
    back = TrainedModel.load(path)
    rng = np.random.default_rng(18)
    queries = rng.normal(x.mean(axis=0), x.std(axis=0) + 1e-9, size=(1000, x.shape[1]))
    assert model.predict(queries) == back.predict(queries)


def test_knn_model_roundtrip(tmp_path):
    x, y = blobs(n=10, gap=2.0, seed=19)
    model = knn_train(x, y, k=3)
    path = tmp_path / "knn.json"
    model.save(path)
    back = TrainedModel.load(path)
    rng = np.random.default_rng(20)
    queries = rng.normal(0, 3, (200, 2))
    assert model.predict(queries) == back.predict(queries)
    assert np.array_equal(model.decision(queries), back.decision(queries))

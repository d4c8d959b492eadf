import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dskit.docmodel import BBox, ClassLabel, Document, Token
from dskit.labelmodel import (FEATURE_DIM, DimensionMismatch, EmptyMatrix,
                              FeatureParams, GraphicalParams, TrainingConfig,
                              feature_posterior, featurize,
                              graphical_posterior, load_checkpoint,
                              loss_and_gradients, predict, predict_rows,
                              save_checkpoint, train)
from dskit.lfkit import ABSTAIN, LabelingFunction, LFSet, LabelMatrix

from conftest import doc_from_words, line_words


def tok(text, cx=0.5, cy=0.5, w=0.1, h=0.05, page=0, tid=0):
    return Token(text, BBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2),
                 page, tid)


def one_token_doc(text, cx=0.5, cy=0.5):
    t = tok(text, cx, cy)
    return Document("d", 1, (t,)), t


# --- featurize -------------------------------------------------------------

def test_featurize_digit_string():
    doc, t = one_token_doc("12345", cx=0.8, cy=0.1)
    x = featurize(t, doc)
    assert x.shape == (FEATURE_DIM,)
    assert x[0] == pytest.approx(0.8) and x[1] == pytest.approx(0.1)
    assert x[3] == 1.0 and x[4] == 1.0  # digit string, contains digit
    assert x[5] == pytest.approx(5 / 20)


def test_featurize_caps_flags():
    doc, t = one_token_doc("MUMBAI")
    x = featurize(t, doc)
    assert x[2] == 1.0 and x[3] == 0.0 and x[6] == 1.0
    doc2, t2 = one_token_doc("over20characterslongtoken")
    assert featurize(t2, doc2)[5] == 1.0  # length capped


def test_featurize_hash_block_depends_only_on_lowercase_text():
    doc = doc_from_words("d", [line_words(["Fever", "FEVER"])])
    x1 = featurize(doc.tokens[0], doc)
    x2 = featurize(doc.tokens[1], doc)
    assert np.array_equal(x1[7:], x2[7:])
    assert x1[7:].sum() == 1.0


def test_featurize_rejects_foreign_token():
    doc, _ = one_token_doc("a")
    stranger = tok("b", tid=0)
    with pytest.raises(ValueError):
        featurize(stranger, doc)


# --- posteriors -------------------------------------------------------------

def test_graphical_posterior_all_abstain_uniform():
    g = GraphicalParams(np.zeros((3, 4)), np.zeros(4))
    post = graphical_posterior(g, np.array([ABSTAIN] * 3))
    assert np.allclose(post, 0.25)
    assert abs(post.sum() - 1.0) < 1e-9


def test_graphical_posterior_saturates_with_large_theta():
    theta = np.zeros((1, 4))
    theta[0, int(ClassLabel.NAME)] = 50.0
    g = GraphicalParams(theta, np.zeros(4))
    post = graphical_posterior(g, np.array([int(ClassLabel.NAME)]))
    assert post[int(ClassLabel.NAME)] > 1 - 1e-9


def test_graphical_posterior_two_class_vs_enumeration():
    # reduced 2-class instance checked against brute-force enumeration over y
    theta = np.array([[1.0, 0.0], [1.0, 0.0]])
    g = GraphicalParams(theta, np.zeros(2))
    votes = np.array([0, 0])
    post = graphical_posterior(g, votes)

    def potential(y):
        p = 1.0
        for j in range(2):
            if votes[j] == y:
                p *= math.exp(theta[j, y])
            else:
                p *= math.exp(-theta[j, y] / (2 - 1))
        return p

    pots = np.array([potential(0), potential(1)])
    oracle = pots / pots.sum()
    assert np.allclose(post, oracle, atol=1e-12)
    assert post[0] == pytest.approx(math.exp(2) / (math.exp(2) + 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_posteriors_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 6))
    g = GraphicalParams(rng.normal(scale=3, size=(m, 4)), rng.normal(size=4))
    votes = rng.integers(-1, 4, size=m)
    post = graphical_posterior(g, votes)
    assert abs(post.sum() - 1.0) < 1e-9 and (post >= 0).all()
    f = FeatureParams(rng.normal(size=(4, 7)), rng.normal(size=4))
    q = feature_posterior(f, rng.normal(size=7))
    assert abs(q.sum() - 1.0) < 1e-9 and (q >= 0).all()


def test_feature_posterior_zero_params_uniform():
    f = FeatureParams(np.zeros((4, FEATURE_DIM)), np.zeros(4))
    assert np.allclose(feature_posterior(f, np.zeros(FEATURE_DIM)), 0.25)


def test_feature_posterior_bias_dominates():
    f = FeatureParams(np.zeros((4, 3)), np.array([10.0, 0.0, 0.0, 0.0]))
    post = feature_posterior(f, np.zeros(3))
    # independent evaluation of the softmax
    expected = np.exp([10.0, 0, 0, 0]) / np.exp([10.0, 0, 0, 0]).sum()
    assert np.allclose(post, expected, atol=1e-12)
    assert post[0] == pytest.approx(0.99986, abs=5e-5)


def test_feature_posterior_shift_invariance():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(4, 5))
    x = rng.normal(size=5)
    base = feature_posterior(FeatureParams(W, np.zeros(4)), x)
    shifted = feature_posterior(FeatureParams(W, np.full(4, 3.7)), x)
    assert np.allclose(base, shifted, atol=1e-12)


def test_dimension_mismatches():
    g = GraphicalParams(np.zeros((2, 4)), np.zeros(4))
    with pytest.raises(DimensionMismatch):
        graphical_posterior(g, np.array([0, 0, 0]))
    f = FeatureParams(np.zeros((4, 5)), np.zeros(4))
    with pytest.raises(DimensionMismatch):
        feature_posterior(f, np.zeros(6))


def test_params_must_be_finite():
    with pytest.raises(ValueError):
        GraphicalParams(np.array([[np.inf, 0, 0, 0]]), np.zeros(4))
    with pytest.raises(ValueError):
        FeatureParams(np.zeros((4, 2)), np.array([np.nan, 0, 0, 0.0]))


# --- joint loss -------------------------------------------------------------

def _fd_instance(seed=42):
    rng = np.random.default_rng(seed)
    n, m, d = 10, 3, 6
    votes = rng.integers(-1, 4, size=(n, m))
    X = rng.normal(size=(n, d))
    gold = np.full(n, -1)
    gold[:4] = rng.integers(0, 4, size=4)
    g = GraphicalParams(rng.normal(scale=0.5, size=(m, 4)),
                        rng.normal(scale=0.3, size=4))
    f = FeatureParams(rng.normal(scale=0.4, size=(4, d)),
                      rng.normal(scale=0.2, size=4))
    return g, f, votes, X, gold


def central_difference(loss_fn, arr, eps=1e-6):
    """Independent finite-difference oracle over one parameter array."""
    out = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + eps
        up = loss_fn()
        arr[idx] = orig - eps
        down = loss_fn()
        arr[idx] = orig
        out[idx] = (up - down) / (2 * eps)
    return out


def test_gradients_match_finite_differences():
    g, f, votes, X, gold = _fd_instance()
    kl_w = 0.7
    loss, grads = loss_and_gradients(g, f, votes, X, gold, kl_w)
    loss_fn = lambda: loss_and_gradients(g, f, votes, X, gold, kl_w)[0]
    for name, arr in (("theta", g.theta), ("class_prior", g.class_prior),
                      ("weights", f.weights), ("bias", f.bias)):
        fd = central_difference(loss_fn, arr)
        rel = np.linalg.norm(grads[name] - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel <= 1e-4, f"{name}: rel err {rel}"


def test_kl_term_nonnegative_and_zero_on_agreement():
    g, f, votes, X, gold = _fd_instance(seed=3)
    unl = np.full_like(gold, -1)  # make every row unlabeled
    base, _ = loss_and_gradients(g, f, votes, X, unl, 0.0)
    with_kl, _ = loss_and_gradients(g, f, votes, X, unl, 1.0)
    assert with_kl >= base - 1e-12  # mean KL >= 0

    # identical posteriors: all-abstain votes with prior == bias, zero weights
    votes0 = np.full_like(votes, ABSTAIN)
    prior = np.array([0.3, -0.2, 0.1, 0.0])
    g0 = GraphicalParams(np.zeros_like(g.theta), prior)
    f0 = FeatureParams(np.zeros_like(f.weights), prior.copy())
    l0, _ = loss_and_gradients(g0, f0, votes0, X, unl, 0.0)
    l1, _ = loss_and_gradients(g0, f0, votes0, X, unl, 1.0)
    assert l1 == pytest.approx(l0, abs=1e-12)


def _matrix_from_votes(votes, gold=None):
    n, m = votes.shape
    return LabelMatrix(
        lf_ids=tuple(f"lf{j}" for j in range(m)),
        doc_ids=("d",),
        row_index=tuple(("d", i) for i in range(n)),
        votes=votes,
        gold=gold if gold is not None else np.full(n, -1),
    )


# --- training ----------------------------------------------------------------

def test_train_perfect_lf_with_gold():
    rng = np.random.default_rng(1)
    n = 50
    truth = rng.integers(0, 4, size=n)
    votes = truth.reshape(-1, 1).copy()  # one LF, always right
    m = _matrix_from_votes(votes, gold=truth.copy())
    X = rng.normal(size=(n, 5))
    cfg = TrainingConfig(epochs=30, lr_graphical=0.05, lr_feature=1e-4,
                         kl_weight=0.0, seed=0)
    params = train(m, X, cfg)
    post = graphical_posterior(params.graphical, votes)
    assert (post.argmax(axis=1) == truth).all()
    assert len(params.loss_trace) == cfg.epochs
    assert params.loss_trace[-1] <= params.loss_trace[0]


def test_train_all_abstain_is_inert():
    n, m_lfs, d = 12, 3, 5
    votes = np.full((n, m_lfs), ABSTAIN)
    m = _matrix_from_votes(votes)
    rng = np.random.default_rng(9)
    X = rng.normal(size=(n, d))
    cfg = TrainingConfig(epochs=4, kl_weight=0.0, seed=123)
    params = train(m, X, cfg)
    assert len(set(params.loss_trace)) == 1  # loss constant
    assert np.array_equal(params.graphical.theta, np.zeros((m_lfs, 4)))
    assert np.array_equal(params.graphical.class_prior, np.zeros(4))
    init_w = np.random.default_rng(123).uniform(-0.01, 0.01, size=(4, d))
    assert np.array_equal(params.feature.weights, init_w)


def test_train_orders_planted_reliabilities():
    # two always-voting LFs with planted accuracies 0.9 and 0.6 on a
    # 2-class slice; gold on every row makes the ordering identifiable
    rng = np.random.default_rng(7)
    n = 20
    truth = np.array([0, 1] * (n // 2))
    flip = lambda y: 1 - y

    def noisy(acc):
        return np.array([y if rng.random() < acc else flip(y) for y in truth])

    votes = np.stack([noisy(0.9), noisy(0.6)], axis=1)
    m = _matrix_from_votes(votes, gold=truth.copy())
    X = rng.normal(size=(n, 4))
    cfg = TrainingConfig(epochs=150, lr_graphical=0.05, lr_feature=1e-5,
                         kl_weight=0.0, seed=0)
    params = train(m, X, cfg)
    theta = params.graphical.theta

    def reliability(j):
        return theta[j, 0] + theta[j, 1]

    # independent oracle: coarse grid search over symmetric per-LF
    # reliabilities evaluated on the same objective
    grid = np.linspace(-1.0, 4.0, 21)
    best, best_pair = np.inf, None
    f0 = FeatureParams(np.zeros((4, 4)), np.zeros(4))
    for t1 in grid:
        for t2 in grid:
            th = np.zeros((2, 4))
            th[0, :2] = t1
            th[1, :2] = t2
            g0 = GraphicalParams(th, np.zeros(4))
            loss, _ = loss_and_gradients(g0, f0, votes, X, m.gold, 0.0)
            if loss < best:
                best, best_pair = loss, (t1, t2)
    assert best_pair[0] > best_pair[1], "grid oracle should rank LF1 above LF2"
    assert reliability(0) > reliability(1), "trained theta should rank LF1 above LF2"


def test_train_rejects_empty_and_misaligned():
    m = _matrix_from_votes(np.empty((0, 2), dtype=np.int8))
    with pytest.raises(EmptyMatrix):
        train(m, np.empty((0, 5)), TrainingConfig())
    m2 = _matrix_from_votes(np.zeros((3, 2), dtype=np.int8))
    with pytest.raises(DimensionMismatch):
        train(m2, np.zeros((4, 5)), TrainingConfig())


def test_training_config_validation():
    with pytest.raises(ValueError):
        TrainingConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainingConfig(lr_feature=0.0)
    with pytest.raises(ValueError):
        TrainingConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainingConfig(kl_weight=-0.1)


# --- prediction ----------------------------------------------------------------

def test_predict_unanimous_and_fallback_routing():
    rng = np.random.default_rng(2)
    theta = np.zeros((2, 4))
    theta[:, int(ClassLabel.NAME)] = 3.0
    g = GraphicalParams(theta, np.zeros(4))
    W = np.zeros((4, 3))
    W[int(ClassLabel.LOCATION), 0] = 5.0
    f = FeatureParams(W, np.zeros(4))
    params_votes = np.array([[int(ClassLabel.NAME), int(ClassLabel.NAME)],
                             [ABSTAIN, ABSTAIN]])
    feats = np.array([[1.0, 0, 0], [1.0, 0, 0]])
    from dskit.labelmodel import LabelModelParams
    params = LabelModelParams(g, f, TrainingConfig())
    labels = predict_rows(params, params_votes, feats)
    assert labels[0] == int(ClassLabel.NAME)     # unanimity wins
    assert labels[1] == int(ClassLabel.LOCATION)  # abstain row routed to features


def test_predict_tie_breaks_toward_other():
    from dskit.labelmodel import LabelModelParams
    g = GraphicalParams(np.zeros((1, 4)), np.zeros(4))
    f = FeatureParams(np.zeros((4, 2)), np.zeros(4))
    params = LabelModelParams(g, f, TrainingConfig())
    labels = predict_rows(params, np.array([[ABSTAIN]]), np.zeros((1, 2)))
    assert labels[0] == int(ClassLabel.OTHER)


def test_predict_checks_lf_count():
    from dskit.labelmodel import LabelModelParams
    params = LabelModelParams(GraphicalParams(np.zeros((2, 4)), np.zeros(4)),
                              FeatureParams(np.zeros((4, FEATURE_DIM)), np.zeros(4)),
                              TrainingConfig())
    doc = doc_from_words("d", [line_words(["x"])])
    lfs = LFSet((LabelingFunction("only", ClassLabel.NAME, triggers=("x",)),))
    with pytest.raises(DimensionMismatch):
        predict(params, doc, lfs)


def test_predict_feature_logit_shift_invariance():
    from dskit.labelmodel import LabelModelParams
    rng = np.random.default_rng(5)
    g = GraphicalParams(rng.normal(size=(1, 4)), rng.normal(size=4))
    W = rng.normal(size=(4, 3))
    votes = np.array([[ABSTAIN], [0]])
    feats = rng.normal(size=(2, 3))
    base = predict_rows(LabelModelParams(g, FeatureParams(W, np.zeros(4)),
                                         TrainingConfig()), votes, feats)
    shifted = predict_rows(LabelModelParams(g, FeatureParams(W, np.full(4, 2.5)),
                                            TrainingConfig()), votes, feats)
    assert np.array_equal(base, shifted)


# --- checkpoints -----------------------------------------------------------------

def test_checkpoint_round_trip_and_bit_identity(tmp_path):
    rng = np.random.default_rng(0)
    votes = rng.integers(-1, 4, size=(30, 2))
    gold = np.full(30, -1)
    gold[:10] = rng.integers(0, 4, size=10)
    m = _matrix_from_votes(votes, gold=gold)
    X = rng.normal(size=(30, 6))
    cfg = TrainingConfig(epochs=3, seed=0, kl_weight=0.5, lr_feature=0.01)

    p1 = train(m, X, cfg)
    p2 = train(m, X, cfg)
    save_checkpoint(p1, tmp_path / "a.json")
    save_checkpoint(p2, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    loaded = load_checkpoint(tmp_path / "a.json")
    assert np.array_equal(loaded.graphical.theta, p1.graphical.theta)
    assert np.array_equal(loaded.feature.weights, p1.feature.weights)
    assert loaded.config == p1.config
    assert loaded.loss_trace == p1.loss_trace


def test_checkpoint_version_guard(tmp_path):
    path = tmp_path / "ck.json"
    path.write_text(json.dumps({"format_version": 99}))
    with pytest.raises(ValueError):
        load_checkpoint(path)

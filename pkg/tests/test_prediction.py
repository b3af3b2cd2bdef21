import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgnn.autograd import Tensor
from kgnn.gradcheck import TOY_CONFIG, toy_batch
from kgnn.model import KGNN
from kgnn.prediction import (
    SharedLayout,
    decode_best_span,
    shared_log_probs,
    shared_norm_distribution,
    span_logits,
    supporting_fact_scores,
)

from conftest import check_golden


def softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def test_one_paragraph_is_ordinary_softmax():
    x = np.array([0.1, 2.0, -1.0])
    s, e = shared_norm_distribution([x], [x])
    np.testing.assert_allclose(s, softmax(x), rtol=0, atol=1e-15)


def test_two_single_token_paragraphs():
    s, _ = shared_norm_distribution([[0.0], [0.0]], [[0.0], [0.0]])
    assert s.tolist() == [0.5, 0.5]


def test_shift_invariance():
    rng = np.random.default_rng(0)
    parts = [rng.normal(size=3), rng.normal(size=5)]
    a, _ = shared_norm_distribution(parts, parts)
    b, _ = shared_norm_distribution([p + 17.0 for p in parts], parts)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


def test_zero_tokens_rejected():
    with pytest.raises(ValueError):
        shared_norm_distribution([[], []], [[], []])
    with pytest.raises(ValueError):
        SharedLayout.build([[0, 0]], 1)


@given(st.lists(st.integers(1, 20), min_size=1, max_size=30), st.integers(0, 2**31 - 1))
def test_global_distributions_sum_to_one(lengths, seed):
    rng = np.random.default_rng(seed)
    parts = [rng.normal(0, 5, n) for n in lengths]
    s, e = shared_norm_distribution(parts, parts[::-1])
    assert abs(s.sum() - 1.0) <= 1e-6 and abs(e.sum() - 1.0) <= 1e-6


@given(st.lists(st.integers(1, 8), min_size=1, max_size=4), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_distractor_keeps_relative_order(lengths, extra, seed):
    rng = np.random.default_rng(seed)
    parts = [rng.normal(0, 3, n) for n in lengths]
    before, _ = shared_norm_distribution(parts, parts)
    after, _ = shared_norm_distribution(parts + [rng.normal(0, 3, extra)], parts + [np.zeros(extra)])
    kept = after[: len(before)]
    assert np.array_equal(np.argsort(before, kind="stable"), np.argsort(kept, kind="stable"))
    assert (kept <= before + 1e-15).all()


def test_batched_shared_log_probs_match_per_question_softmax():
    rng = np.random.default_rng(1)
    lengths = [[3, 2], [4], [1, 1, 2]]
    max_len = 4
    logits = rng.normal(size=(6, max_len))
    layout = SharedLayout.build(lengths, max_len)
    got = np.exp(shared_log_probs(Tensor(logits), layout).data)
    row = 0
    for b, ls in enumerate(lengths):
        flat = np.concatenate([logits[row + i, :n] for i, n in enumerate(ls)])
        row += len(ls)
        np.testing.assert_allclose(got[b, : len(flat)], softmax(flat), rtol=0, atol=1e-14)
        assert not got[b, len(flat):].any()


def test_peaked_decode():
    p_s, p_e = np.full(10, 0.01), np.full(10, 0.01)
    p_s[3], p_e[5] = 0.9, 0.9
    assert decode_best_span(p_s, p_e, [10], 8)[:3] == (0, 3, 5)


def test_decode_limit_one_picks_best_product():
    rng = np.random.default_rng(2)
    p_s, p_e = softmax(rng.normal(size=9)), softmax(rng.normal(size=9))
    par, s, e, _ = decode_best_span(p_s, p_e, [9], 1)
    assert s == e == int(np.argmax(p_s * p_e))


def test_decode_reports_local_offsets():
    p_s, p_e = np.zeros(7), np.zeros(7)
    p_s[5], p_e[6] = 1.0, 1.0
    assert decode_best_span(p_s, p_e, [4, 3], 8)[:3] == (1, 1, 2)


def exhaustive(p_s, p_e, lengths, limit):
    best, best_key = -1.0, None
    offset = 0
    for par, n in enumerate(lengths):
        for s in range(n):
            for e in range(s, min(n, s + limit)):
                v = p_s[offset + s] * p_e[offset + e]
                if v > best:  # strict: earlier (s, e) keeps ties
                    best, best_key = v, (par, s, e)
        offset += n
    return best_key, best


@given(
    st.lists(st.integers(0, 40), min_size=1, max_size=5).filter(lambda ls: 0 < sum(ls) <= 200),
    st.integers(1, 10),
    st.integers(0, 2**31 - 1),
    st.booleans(),
)
def test_decode_equals_exhaustive_oracle(lengths, limit, seed, coarse):
    rng = np.random.default_rng(seed)
    n = sum(lengths)
    if coarse:  # many exact ties
        p_s, p_e = rng.integers(0, 3, n) / 3.0, rng.integers(0, 3, n) / 3.0
    else:
        p_s, p_e = softmax(rng.normal(size=n)), softmax(rng.normal(size=n))
    key, value = exhaustive(p_s, p_e, lengths, limit)
    got = decode_best_span(p_s, p_e, lengths, limit)
    assert got[:3] == key and got[3] == value


def _model(seed=0):
    batch, vocab = toy_batch()
    return KGNN(TOY_CONFIG, vocab, seed=seed), batch


def test_span_logit_counts_and_determinism():
    model, batch = _model()
    out = model.forward(batch)
    start, end = span_logits(out.final, batch.paragraph_mask, model.predictor)
    assert start.shape == end.shape == batch.paragraph_mask.shape
    again = span_logits(model.forward(batch).final, batch.paragraph_mask, model.predictor)
    assert np.array_equal(start.data, again[0].data)
    for b, ex in enumerate(batch.examples):
        width = batch.layout.mask[b].sum()
        assert width == sum(ex.lengths)


def test_span_logits_golden():
    model, batch = _model()
    start, end = span_logits(model.forward(batch).final, batch.paragraph_mask, model.predictor)
    mask = batch.paragraph_mask
    check_golden("span_logits_toy", np.concatenate([start.data[mask], end.data[mask]]), atol=1e-10)


def test_supporting_scores_zero_params_half():
    model, batch = _model()
    model.predictor.supporting.weight.data[:] = 0.0
    model.predictor.supporting.bias.data[:] = 0.0
    probs = supporting_fact_scores(model.forward(batch).sp_logits.data)
    assert probs.tolist() == [0.5] * len(batch.sentence_keys)
    preds = model.predict(batch)
    for p, ex in zip(preds, batch.examples):
        total = sum(par.num_sentences for par in ex.paragraphs)
        assert len(p.sp) == total  # threshold is inclusive


@given(st.integers(0, 2**31 - 1))
def test_supporting_scores_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    probs = supporting_fact_scores(rng.normal(0, 50, 20))
    assert ((probs >= 0) & (probs <= 1)).all()


def test_supporting_scores_golden():
    model, batch = _model()
    check_golden("supporting_scores_toy", supporting_fact_scores(model.forward(batch).sp_logits.data), atol=1e-10)


def test_predict_spans_within_limit():
    model, batch = _model(seed=3)
    for p, ex in zip(model.predict(batch), batch.examples):
        par, s, e = p.span
        assert 0 <= s <= e <= s + model.config.max_span_len - 1
        assert e < ex.lengths[par]
        assert p.answer == ex.span_text(par, s, e)


def test_empty_sentence_skipped_with_warning(caplog):
    from kgnn.prediction import sentence_layout

    tokens, mask, keys = sentence_layout([[(0, 1), (-1, -1), (2, 2)]], [0], 4)
    assert keys == [(0, 0), (0, 2)]
    assert "empty sentence" in caplog.text

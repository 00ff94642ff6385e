from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmcorpus.langid import (LangIdError, NodePrediction, aggregate,
                             classify_document)
from mmcorpus.model import Document, TextNode
from mmcorpus.scorer import Scorer, ScorerError, StubScorer


def pred(char_count, *pairs):
    return NodePrediction(top3=tuple(pairs), char_count=char_count)


def test_weighted_sum_example():
    v = aggregate([pred(100, ("eng_Latn", 0.9)), pred(10, ("fra_Latn", 1.0))])
    assert v.winner == "eng_Latn"
    assert v.table == {"eng_Latn": 90.0, "fra_Latn": 10.0}


def test_single_node():
    v = aggregate([pred(5, ("deu_Latn", 1.0))])
    assert v.winner == "deu_Latn" and v.table == {"deu_Latn": 5.0}


def test_tie_breaks_lexicographically():
    v = aggregate([
        pred(10, ("eng_Latn", 0.5), ("fra_Latn", 0.5)),
        pred(10, ("eng_Latn", 0.5), ("fra_Latn", 0.5)),
    ])
    assert v.table["eng_Latn"] == v.table["fra_Latn"] == 10.0
    assert v.winner == "eng_Latn"


def brute_force_winner(predictions):
    table = {}
    for p in predictions:
        for code, prob in p.top3:
            table[code] = table.get(code, 0.0) + prob * p.char_count
    best = max(table.values())
    return min(code for code, s in table.items() if s == best)


def test_tie_break_vs_exhaustive_small_oracle():
    codes = ["aaa_Latn", "bbb_Latn", "ccc_Latn"]
    probs = [0.0, 0.5, 1.0]
    counts = [1, 2]
    cases = 0
    for c1, c2 in itertools.product(codes, repeat=2):
        for p1, p2 in itertools.product(probs, repeat=2):
            for n1, n2 in itertools.product(counts, repeat=2):
                preds = [pred(n1, (c1, p1)), pred(n2, (c2, p2))]
                assert aggregate(preds).winner == brute_force_winner(preds)
                cases += 1
    assert cases == 324  # 3*3 codes x 3*3 probs x 2*2 counts


def test_empty_list_errors():
    with pytest.raises(LangIdError, match="no_text"):
        aggregate([])


@st.composite
def prediction_lists(draw):
    codes = st.sampled_from(["aaa", "bbb", "ccc", "ddd"])
    def one(_):
        k = draw(st.integers(1, 3))
        pairs = sorted(
            [(draw(codes), draw(st.floats(0, 1))) for _ in range(k)],
            key=lambda kv: -kv[1],
        )
        return NodePrediction(top3=tuple(pairs), char_count=draw(st.integers(0, 500)))
    n = draw(st.integers(1, 6))
    return [one(i) for i in range(n)]


@given(prediction_lists(), st.integers(2, 10))
@settings(max_examples=80, deadline=None)
def test_scale_invariance(preds, k):
    scaled = [NodePrediction(p.top3, p.char_count * k) for p in preds]
    assert aggregate(preds).winner == aggregate(scaled).winner


@given(prediction_lists(), st.randoms())
@settings(max_examples=80, deadline=None)
def test_permutation_invariance(preds, rnd):
    shuffled = list(preds)
    rnd.shuffle(shuffled)
    assert aggregate(preds).winner == aggregate(shuffled).winner


@given(prediction_lists())
@settings(max_examples=80, deadline=None)
def test_monotonicity_in_winner_probability(preds):
    verdict = aggregate(preds)
    boosted = []
    bumped = False
    for p in preds:
        pairs = []
        for code, prob in p.top3:
            if code == verdict.winner and not bumped:
                prob = min(1.0, prob + 0.3)
                bumped = True
            pairs.append((code, prob))
        boosted.append(NodePrediction(tuple(pairs), p.char_count))
    assert aggregate(boosted).winner == verdict.winner


def make_doc(texts):
    return Document(id="11" * 16, url="https://x.test/",
                    nodes=[TextNode(t, "p") for t in texts])


def test_classify_document_deterministic():
    scorer = StubScorer()
    d1 = classify_document(make_doc(["hello world", "bonjour le monde"]), scorer)
    d2 = classify_document(make_doc(["hello world", "bonjour le monde"]), scorer)
    assert d1.lang == d2.lang and d1.lang_scores == d2.lang_scores
    assert d1.lang != ""


def test_classify_marker_forces_language():
    doc = classify_document(make_doc(["wort lang:deu_Latn", "mehr worte lang:deu_Latn"]),
                            StubScorer())
    assert doc.lang == "deu_Latn"


def test_tiny_probabilities_still_produce_winner():
    class TinyScorer:
        def lid(self, text):
            return [("aaa_Latn", 0.01), ("bbb_Latn", 0.005), ("ccc_Latn", 0.001)]
    doc = classify_document(make_doc(["x", "y"]), TinyScorer())
    assert doc.lang == "aaa_Latn"


class FlakyScorer:
    def __init__(self, fail_times: int):
        self.fail_times = fail_times
        self.calls = 0

    def lid(self, text):
        self.calls += 1
        if self.calls <= self.fail_times:
            raise ScorerError("down")
        return [("deu_Latn", 1.0)]


def test_scorer_down_raises_after_retries():
    with pytest.raises(ScorerError):
        classify_document(make_doc(["a b c"]), FlakyScorer(fail_times=99), retries=2)


def test_scorer_retry_recovers():
    doc = classify_document(make_doc(["a b c"]), FlakyScorer(fail_times=2), retries=2)
    assert doc.lang == "deu_Latn"


def test_no_text_errors():
    with pytest.raises(LangIdError):
        classify_document(make_doc([]), StubScorer())

import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from crashbench.manifest import ManifestError
from crashbench.vlmprob import (
    AnswerLogits,
    TemperatureTriple,
    answer_token_probability,
    compression_diagnostic,
    probability_from_record,
    temperature_ensemble,
    traces_from_logits_file,
)
from oracles import exact_softmax2, logistic

logprob = st.floats(-60, 60, allow_nan=False)


def test_answer_token_examples():
    assert answer_token_probability(AnswerLogits(-0.7, -0.7)) == 0.5
    assert answer_token_probability((1.0, 0.0)) == pytest.approx(0.73106, abs=1e-5)
    assert answer_token_probability((1.0, 0.0)) == logistic(1.0)
    tiny = answer_token_probability((-1000.0, 0.0))
    assert 0.0 <= tiny < 1e-300
    assert answer_token_probability((1000.0, -1000.0)) == 1.0
    assert answer_token_probability((-1e308, 1e308)) == 0.0
    with pytest.raises(ValueError):
        answer_token_probability((math.nan, 0.0))
    with pytest.raises(ValueError):
        answer_token_probability((math.inf, 0.0))


@settings(max_examples=300, deadline=None)
@given(a=logprob, b=logprob)
def test_within_one_ulp_of_exact_softmax(a, b):
    exact = exact_softmax2(a, b)
    assert abs(answer_token_probability((a, b)) - exact) <= math.ulp(exact)


@settings(max_examples=300, deadline=None)
@given(a=st.floats(-30, 0), b=st.floats(-30, 0))
def test_matches_naive_softmax_where_it_is_safe(a, b):
    # The naive quotient is itself a few ulp from the exact value; allow its error.
    naive = math.exp(a) / (math.exp(a) + math.exp(b))
    assert abs(answer_token_probability((a, b)) - naive) <= 4 * math.ulp(naive)


@settings(max_examples=300, deadline=None)
@given(a=logprob, b=logprob)
def test_complement_identity(a, b):
    assert abs(answer_token_probability((a, b)) + answer_token_probability((b, a)) - 1.0) <= math.ulp(1.0)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-20, 0), b=st.floats(-20, 0), c=st.sampled_from([-5.0, -0.25, 0.5, 3.0, 7.75]))
def test_shift_invariance(a, b, c):
    # shifts by dyadic constants keep a + c and b + c exact in this range
    assert abs(answer_token_probability((a + c, b + c)) - answer_token_probability((a, b))) <= 1e-15


def test_temperature_ensemble():
    assert temperature_ensemble(TemperatureTriple(0.2, 0.3, 0.4)) == 0.3
    assert temperature_ensemble((1, 1, 1)) == 1.0
    assert temperature_ensemble((0.1, 0.7, 0.4)) == temperature_ensemble((0.4, 0.1, 0.7))
    with pytest.raises(ValueError):
        temperature_ensemble((0.1, 1.2, 0.3))
    with pytest.raises(ValueError):
        temperature_ensemble((0.1, 0.2))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_ensemble_exact_and_bounded(p):
    got = temperature_ensemble(p)
    assert got == float(sum(map(Fraction, p)) / 3)
    assert min(p) <= got <= max(p)


def test_compression_diagnostic():
    d = compression_diagnostic([0.53] * 4, [0.002] * 10)
    assert d.positive_peak_mean == pytest.approx(0.53) and d.frac_negatives_below == 1.0
    assert compression_diagnostic([1.0], [0.0]).dynamic_range == 1.0
    d = compression_diagnostic([0.4, 0.6], [0.1])
    assert d.positive_peak_mean == 0.5 and d.frac_positive_peaks_below == 0.5
    assert "frac_negatives_below_0.003" in d.to_json()
    with pytest.raises(ValueError):
        compression_diagnostic([], [0.1])


def test_logits_file_to_traces(tmp_path):
    rows = [
        {"clip_id": "a", "ell_a": 1.0, "ell_b": 0.0, "t": 2.0},
        {"clip_id": "a", "ell_a": 0.0, "ell_b": 0.0, "t": 1.0},
        {"clip_id": "b", "p": [0.2, 0.3, 0.4]},
    ]
    (tmp_path / "logits.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
    traces = traces_from_logits_file(tmp_path / "logits.jsonl")
    assert traces["a"].entries == [(1.0, 0.5), (2.0, logistic(1.0))]
    assert traces["b"].entries == [(0.0, 0.3)]
    with pytest.raises(ValueError):
        probability_from_record({"clip_id": "x"})
    (tmp_path / "bad.jsonl").write_text(json.dumps({"clip_id": "x", "p": [2, 0, 0]}) + "\n")
    with pytest.raises(ManifestError, match=":1:"):
        traces_from_logits_file(tmp_path / "bad.jsonl")

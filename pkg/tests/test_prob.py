import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trkd.exceptions import InvalidParameterError, ShapeError
from trkd.prob import ProbVector, kl_divergence, log_softmax, logsumexp, softmax, temperature_scale

logit_vectors = arrays(np.float64, st.integers(2, 30), elements=st.floats(-50, 50))


def _softmax_oracle(z):
    # plain evaluation in Python floats, fine for small logits
    e = [math.exp(v) for v in z]
    s = sum(e)
    return [v / s for v in e]


@pytest.mark.parametrize("z, T, want", [
    ([2, 4], 1.0, [2, 4]),
    ([2, 4], 4.0, [0.5, 1.0]),
    ([1, 2, 3], 2.0, [0.5, 1.0, 1.5]),
])
def test_temperature_scale(z, T, want):
    np.testing.assert_array_equal(temperature_scale(z, T), want)


@pytest.mark.parametrize("T", [0.0, -1.0, np.inf, np.nan])
def test_temperature_rejects_bad_values(T):
    with pytest.raises(InvalidParameterError):
        temperature_scale([1.0, 2.0], T)


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0, 0, 0, 0]).probs, [0.25] * 4, atol=1e-15)
    np.testing.assert_allclose(softmax([1, 2, 3]).probs, [0.09003, 0.24473, 0.66524], atol=1e-5)
    np.testing.assert_allclose(softmax([1, 2, 3]).probs, _softmax_oracle([1, 2, 3]), rtol=1e-14)


def test_softmax_does_not_overflow():
    p = softmax([1000.0, 0.0])
    assert p.probs[0] == 1.0 and p.probs[1] == 0.0
    np.testing.assert_array_equal(p.log_probs, [0.0, -1000.0])


@pytest.mark.parametrize("bad", [[1.0], [[1.0]], [np.nan, 1.0], [np.inf, 0.0], np.zeros((2, 2, 2))])
def test_softmax_rejects_invalid_logits(bad):
    with pytest.raises((InvalidParameterError, ShapeError)):
        softmax(bad)


def test_logsumexp_masked_and_empty():
    x = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    mask = np.array([[True, False, True], [False, False, False]])
    out = logsumexp(x, mask)
    assert out[0] == pytest.approx(math.log(math.e + math.e ** 3), rel=1e-15)
    assert out[1] == -np.inf


def test_kl_examples():
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.14384, abs=1e-5)
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(
        0.5 * math.log(2) + 0.5 * math.log(0.5 / 0.75), rel=1e-14)
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), rel=1e-15)


def test_kl_divergent_is_inf_not_nan():
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == np.inf
    out = kl_divergence(np.array([[0.5, 0.5], [0.5, 0.5]]), np.array([[1.0, 0.0], [0.5, 0.5]]))
    assert out[0] == np.inf and out[1] == 0.0


def test_kl_shape_mismatch():
    with pytest.raises(ShapeError):
        kl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])


def test_prob_vector_validation():
    with pytest.raises(InvalidParameterError):
        ProbVector.from_probs([0.5, 0.6])
    with pytest.raises(InvalidParameterError):
        ProbVector.from_probs([1.5, -0.5])
    p = ProbVector.from_probs([1.0, 0.0])
    assert p.log_probs[1] == -np.inf and len(p) == 2


@given(logit_vectors, st.floats(-1e3, 1e3))
def test_softmax_shift_invariant(z, c):
    np.testing.assert_allclose(softmax(z).probs, softmax(z + c).probs, rtol=0, atol=1e-12)


@given(logit_vectors)
def test_log_probs_consistent(z):
    p = softmax(z)
    assert abs(p.probs.sum() - 1.0) <= 1e-12
    big = p.probs > 1e-300
    np.testing.assert_allclose(np.exp(p.log_probs[big]), p.probs[big], rtol=0, atol=1e-12)
    np.testing.assert_allclose(log_softmax(z), p.log_probs)


@given(logit_vectors, logit_vectors)
def test_gibbs_inequality(a, b):
    n = min(a.size, b.size)
    p, q = softmax(a[:n]), softmax(b[:n])
    assert kl_divergence(p, q) >= -1e-12
    assert abs(kl_divergence(p, p)) <= 1e-12


@given(logit_vectors, st.floats(0.1, 10), st.floats(0.1, 10))
def test_higher_temperature_flattens(z, t1, t2):
    lo, hi = sorted((t1, t2))
    assert softmax(temperature_scale(z, hi)).probs.max() <= softmax(temperature_scale(z, lo)).probs.max() + 1e-15

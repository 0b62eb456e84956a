import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.ndimage import distance_transform_edt

from directedit.core import NULL_CONDITION, Condition, InvalidArgument
from directedit.fields import AnalyticField, Delta
from directedit.safc import (
    MaskConfig,
    ScriptedAttention,
    apply_mask,
    attention_saliency,
    binarize_global_mean,
    build_mask,
    distance_transform,
    soften_edges,
    spatial_smooth,
    squared_distance_transform,
    union_masks,
)

import oracles

masks = arrays(np.bool_, st.tuples(st.integers(1, 2), st.integers(1, 20), st.integers(1, 20)))
dyadic = arrays(np.int64, st.tuples(st.integers(1, 2), st.integers(1, 16), st.integers(1, 16)),
                elements=st.integers(0, 16)).map(lambda a: a / 16.0)


@settings(max_examples=60, deadline=None)
@given(masks)
def test_edt_matches_scipy_and_oracle(m):
    sq = squared_distance_transform(m)
    assert np.array_equal(sq, oracles.squared_edt(m))
    for t in range(m.shape[0]):
        if m[t].any():
            assert np.array_equal(np.sqrt(sq[t]), distance_transform_edt(~m[t]))
        else:
            assert np.all(np.isinf(sq[t]))


@settings(max_examples=40, deadline=None)
@given(dyadic, st.sampled_from([1, 3, 5, 9, 11]))
def test_smoothing_matches_oracle(a, k):
    assert np.array_equal(spatial_smooth(a, k), oracles.box_mean(a, k))


def test_smoothing_general_values_close():
    a = np.random.default_rng(0).random((2, 13, 17))
    np.testing.assert_allclose(spatial_smooth(a, 5), oracles.box_mean(a, 5), rtol=0, atol=1e-13)


def test_smoothing_preserves_constants():
    a = np.full((1, 9, 6), 0.37)
    np.testing.assert_allclose(spatial_smooth(a, 11), a, atol=1e-15)
    with pytest.raises(InvalidArgument):
        spatial_smooth(a, 4)


@given(dyadic)
def test_threshold_oracle(a):
    m = binarize_global_mean(a)
    assert np.array_equal(m, oracles.threshold_mean(a))
    assert m.max() == 1.0  # the maximum always reaches the mean


def test_union_rejects_non_binary():
    with pytest.raises(InvalidArgument):
        union_masks(np.full((1, 2, 2), 0.5), np.zeros((1, 2, 2)))
    with pytest.raises(InvalidArgument):
        union_masks(np.zeros((1, 2, 2)), np.zeros((1, 2, 3)))


@settings(max_examples=40, deadline=None)
@given(masks, st.sampled_from([0.1, 0.25, 1.0]))
def test_softening_monotone_in_distance(m, delta):
    if not m.any():
        assert np.array_equal(soften_edges(m, delta), np.zeros(m.shape))
        return
    d = distance_transform(m).ravel()
    v = soften_edges(m, delta).ravel()
    order = np.argsort(d, kind="stable")
    assert np.all(np.diff(v[order]) <= 0)
    assert np.all(v[m.ravel()] == 1.0)
    assert np.all(v[np.isfinite(d)] > 0) and np.all(v <= 1)
    assert np.all(v[np.isinf(d)] == 0)


def test_softening_rejects_bad_delta():
    with pytest.raises(InvalidArgument):
        soften_edges(np.ones((1, 2, 2)), 0.0)


def test_all_ones_stays_all_ones():
    ones = np.ones((2, 6, 5))
    cfg = MaskConfig(kernel=3, delta=0.25)
    m = build_mask(ones, ones, cfg)
    assert np.array_equal(m, ones)
    assert np.array_equal(soften_edges(soften_edges(m, 0.25), 0.25), ones)


def test_build_mask_pipeline():
    a = np.zeros((1, 16, 16))
    a[0, 2:5, 2:5] = 1
    b = np.zeros((1, 16, 16))
    b[0, 10:13, 10:13] = 1
    hard = build_mask(a, b, MaskConfig(kernel=1, apply_softening=False))
    assert np.array_equal(hard, union_masks(a, b))
    soft = build_mask(a, b, MaskConfig(kernel=1, delta=0.1))
    assert soft[0, 0, 0] == pytest.approx(np.exp(-0.1 * np.sqrt(8)))
    with pytest.raises(InvalidArgument):
        build_mask(a, b[:, :8], MaskConfig())


@pytest.mark.parametrize("kw", [dict(kernel=4), dict(kernel=0), dict(delta=0.0), dict(provider="clip"),
                                dict(mask_scope="frame")])
def test_mask_config_validation(kw):
    with pytest.raises(InvalidArgument):
        MaskConfig(**kw)


def test_apply_mask():
    v = np.ones((2, 3, 3, 2))
    m = np.zeros((2, 3, 3))
    m[0, 1, 1] = 0.5
    out = apply_mask(v, m)
    assert out[0, 1, 1].tolist() == [0.5, 0.5] and out.sum() == 1.0
    assert np.array_equal(apply_mask(v, m[..., None]), out)
    with pytest.raises(InvalidArgument):
        apply_mask(v, m[:, :2])


def test_saliency_marks_changed_region():
    mu = np.zeros((1, 4, 4, 1))
    mu[0, 1, 2] = 1.0
    field = AnalyticField({"a": Delta(mu), "∅": Delta(np.zeros_like(mu))})
    s = attention_saliency(field, np.zeros_like(mu), 0.5, Condition("a"))
    assert s[0, 1, 2] == 1.0 and s.sum() == 1.0
    assert np.array_equal(attention_saliency(field, mu, 0.5, NULL_CONDITION), np.zeros((1, 4, 4)))


def test_scripted_attention_noise_is_keyed():
    base = {"a": np.zeros((1, 3, 3)), "b": np.ones((1, 3, 3))}
    att = ScriptedAttention(base, noise_std=0.2, seed=5)
    c = Condition("a")
    x = np.zeros((1, 3, 3, 1))
    first = att(None, x, 0.5, c, step=2, sample=1)
    assert np.array_equal(first, att(None, x, 0.5, c, step=2, sample=1))
    assert not np.array_equal(first, att(None, x, 0.5, c, step=2, sample=0))
    assert not np.array_equal(first, att(None, x, 0.5, Condition("b"), step=2, sample=1) - 1)
    assert np.all(first >= 0)
    assert np.array_equal(ScriptedAttention(base)(None, x, 0.5, c), base["a"])
    with pytest.raises(InvalidArgument):
        att(None, x, 0.5, Condition("z"))

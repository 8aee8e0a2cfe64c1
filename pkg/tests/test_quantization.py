import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heterosag.errors import ConfigError, DecodeError
from heterosag.quantization import QuantizerSpec, dequantize_aggregate, dequantize_level, quantize


def test_spec_grid_endpoints():
    for K in (2, 3, 6, 12, 2**16):
        spec = QuantizerSpec(K)
        assert spec.level_value(0) == -1.0
        assert abs(spec.level_value(K - 1) - 1.0) <= 1e-12
    with pytest.raises(ConfigError):
        QuantizerSpec(1)
    with pytest.raises(ConfigError):
        QuantizerSpec(4, 1.0, 1.0)


def test_endpoints_are_deterministic():
    rng = np.random.default_rng(0)
    spec = QuantizerSpec(2)
    assert np.all(quantize(np.full(1000, -1.0), spec, rng) == 0)
    assert np.all(quantize(np.full(1000, 1.0), spec, rng) == 1)


def test_rounding_probability_at_half():
    rng = np.random.default_rng(1)
    q = quantize(np.full(100_000, 0.5), QuantizerSpec(2), rng)
    # P(level 1) = (0.5 - (-1)) / 2
    assert abs(q.mean() - 0.75) <= 0.01


def test_dequantize_level_values():
    assert dequantize_level(0, QuantizerSpec(2)) == -1.0
    assert dequantize_level(1, QuantizerSpec(2)) == 1.0
    assert dequantize_level(2, QuantizerSpec(6)) == pytest.approx(-0.2, abs=1e-15)
    with pytest.raises(ValueError):
        dequantize_level(2, QuantizerSpec(2))


def test_dequantize_aggregate_values():
    spec = QuantizerSpec(2)
    assert dequantize_aggregate(0, 3, spec) == -3.0
    assert dequantize_aggregate(3, 3, spec) == 3.0
    assert dequantize_aggregate(2, 3, spec) == 1.0
    with pytest.raises(DecodeError):
        dequantize_aggregate(4, 3, spec)
    with pytest.raises(DecodeError):
        dequantize_aggregate(-1, 3, spec)


def test_non_finite_and_strict_mode():
    rng = np.random.default_rng(2)
    spec = QuantizerSpec(4)
    with pytest.raises(ValueError):
        quantize([0.0, np.nan], spec, rng)
    with pytest.raises(ValueError):
        quantize([np.inf], spec, rng)
    with pytest.raises(ValueError):
        quantize([1.5], spec, rng, strict=True)
    assert quantize([5.0, -5.0], spec, rng).tolist() == [3, 0]


@pytest.mark.parametrize("K", [2, 3, 6, 12, 1000])
def test_grid_points_round_trip_exactly(K):
    spec = QuantizerSpec(K, -2.0, 3.0)
    rng = np.random.default_rng(K)
    levels = np.arange(K)
    grid = spec.level_value(levels)
    assert np.array_equal(quantize(grid, spec, rng), levels)
    assert np.array_equal(dequantize_level(quantize(grid, spec, rng), spec), grid)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 11), min_size=1, max_size=40), st.integers(2, 12))
def test_aggregate_consistency(levels, K):
    spec = QuantizerSpec(K)
    levels = [min(l, K - 1) for l in levels]
    total = dequantize_aggregate(sum(levels), len(levels), spec)
    assert abs(total - float(np.sum(dequantize_level(np.array(levels), spec)))) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3, allow_nan=False), st.integers(2, 50), st.integers(0, 2**31))
def test_output_brackets_input(x, K, seed):
    spec = QuantizerSpec(K)
    q = int(quantize(x, spec, np.random.default_rng(seed)))
    xc = min(max(x, -1.0), 1.0)
    v = spec.level_value(q)
    assert 0 <= q <= K - 1
    assert abs(v - xc) <= spec.delta + 1e-12


def test_unbiased_and_variance_bound():
    rng = np.random.default_rng(3)
    xs = rng.uniform(-1, 1, size=50)
    trials = 100_000
    for K in (2, 4, 8):
        spec = QuantizerSpec(K)
        for x in xs:
            vals = spec.r1 + quantize(np.full(trials, x), spec, rng) * spec.delta
            err = vals.mean() - x
            se = vals.std(ddof=1) / np.sqrt(trials)
            assert abs(err) <= 4 * se + 1e-15
            assert np.mean((vals - x) ** 2) <= spec.delta ** 2 / 4 * (1 + 1e-3)

import math

import numpy as np
import pytest

from heterosag.analysis import (ErrorBoundInput, bandwidth_expansion, communication_report,
                                count_mask_operations, count_secag_operations, empirical_leakage_frequency,
                                expected_quantization_error, monte_carlo_quantization_error, plan_bandwidth,
                                privacy_leakage_prob, sigma_from_plan, sigma_heterosag,
                                sigma_heterosag_plus, sigma_secag, scheme_comparison)
from heterosag.errors import ConfigError
from heterosag.protocol import RoundPlan, Topology
from heterosag.quantization import QuantizerSpec

K5 = (2, 6, 8, 10, 12)


def _plan(topo, K, m):
    return RoundPlan.build(topo, [QuantizerSpec(k) for k in K], m)


def test_sigma_closed_form_value():
    # [DERIVED] (2/(2*25))^2 * 100/5 * 5 * (9/1 + 7/25 + 5/49 + 3/81 + 1/121)
    expected = 4 / (4 * 625) * 20 * 5 * (9 + 7 / 25 + 5 / 49 + 3 / 81 + 1 / 121)
    got = sigma_heterosag(ErrorBoundInput(25, 5, 100, K5, n=5))
    assert got.value == pytest.approx(expected, rel=1e-12)
    assert got.value == pytest.approx(1.50837, abs=1e-5)
    assert got.segments_per_quantizer == (45, 35, 25, 15, 5)


def test_sigma_plus_matches_plan_walk():
    inp = ErrorBoundInput(10, 3, 100, (2, 6, 8), L=(1, 2, 2), nbar=2)
    plan = _plan(Topology.from_subgroups((1, 2, 2), 2), (2, 6, 8), 100)
    assert sigma_heterosag_plus(inp).value == pytest.approx(sigma_from_plan(plan), rel=1e-12)
    assert sigma_heterosag_plus(inp).value == pytest.approx(3.8247, abs=1e-4)


def test_sigma_secag_and_homogeneous_plan():
    plan = _plan(Topology.from_uniform(4, 3), (5,) * 4, 40)
    assert sigma_from_plan(plan) == pytest.approx(sigma_secag(12, 40, 5), rel=1e-12)


def test_sigma_input_validation():
    with pytest.raises(ConfigError):
        ErrorBoundInput(10, 5, 20, K5, n=3)
    with pytest.raises(ConfigError):
        ErrorBoundInput(10, 5, 20, (2, 6, 4, 10, 12), n=2)
    with pytest.raises(ConfigError):
        sigma_heterosag(ErrorBoundInput(10, 3, 20, (2, 4, 8), L=(1, 2, 2), nbar=2))
    with pytest.raises(ConfigError):
        sigma_heterosag_plus(ErrorBoundInput(10, 5, 20, K5, n=2))


@pytest.mark.parametrize("G", range(2, 7))
@pytest.mark.parametrize("l", range(1, 5))
def test_subgroup_split_leaves_bound_unchanged(G, l):
    K = tuple(range(2, 2 + 3 * G, 3))
    nbar = 2
    n = l * nbar
    a = sigma_heterosag(ErrorBoundInput(n * G, G, 60, K, n=n)).value
    b = sigma_heterosag_plus(ErrorBoundInput(n * G, G, 60, K, L=(l,) * G, nbar=nbar)).value
    assert abs(a - b) <= 1e-12 * a


def test_monte_carlo_below_bound_random_configs():
    rng = np.random.default_rng(0)
    for _ in range(20):
        G = int(rng.integers(2, 6))
        n = int(rng.integers(1, 4))
        Z = G
        m = Z * int(rng.integers(1, 6))
        K = tuple(sorted(int(k) for k in rng.integers(2, 16, size=G)))
        plan = _plan(Topology.from_uniform(G, n), K, m)
        xs = rng.uniform(-1, 1, size=(G * n, m))
        sigma = sigma_heterosag(ErrorBoundInput(G * n, G, m, K, n=n)).value
        mean, se = monte_carlo_quantization_error(plan, xs, 4000, rng)
        exact = expected_quantization_error(plan, xs)
        assert abs(mean - exact) <= 5 * se + 1e-15
        assert exact <= sigma * (1 + 1e-12)
        assert mean <= sigma + 4 * se


def test_monte_carlo_matches_exact_on_reference_config():
    rng = np.random.default_rng(1)
    plan = _plan(Topology.from_uniform(5, 5), K5, 100)
    xs = rng.uniform(-1, 1, size=(25, 100))
    mean, se = monte_carlo_quantization_error(plan, xs, 10_000, rng)
    assert abs(mean - expected_quantization_error(plan, xs)) <= 4 * se


def test_leakage_probability_closed_form():
    assert privacy_leakage_prob(8, 0.1) == pytest.approx(7.2e-7, rel=1e-12)
    assert privacy_leakage_prob(1, 0.3) == pytest.approx(0.7)
    with pytest.raises(ConfigError):
        privacy_leakage_prob(0, 0.1)
    with pytest.raises(ConfigError):
        privacy_leakage_prob(2, 1.5)


@pytest.mark.parametrize("nbar,p", [(4, 0.1), (8, 0.1), (4, 0.3)])
def test_leakage_frequency_matches_formula(nbar, p):
    draws = 1_000_000
    freq = empirical_leakage_frequency(nbar, p, draws, np.random.default_rng(nbar))
    q = privacy_leakage_prob(nbar, p)
    se = math.sqrt(q * (1 - q) / draws)
    assert abs(freq - q) <= 4 * se + 1e-6


def test_bandwidth_expansion_values():
    assert bandwidth_expansion(1024, 2).ratio == 11
    assert bandwidth_expansion(8, 2).ratio == 4
    assert bandwidth_expansion(1024, 2**16).ratio == 1.625
    # [DERIVED] ceil(log2(8 * 65535 + 1)) = 19, so the ratio is 19/16
    assert bandwidth_expansion(8, 2**16).encoded_bits == 19
    assert bandwidth_expansion(8, 2**16).ratio == 19 / 16
    assert bandwidth_expansion(16, 2**16).ratio == 1.25


def test_plan_bandwidth_weighted():
    plan = _plan(Topology.from_uniform(5, 2), K5, 10)
    pb = plan_bandwidth(plan, 0)
    assert pb.star_level == bandwidth_expansion(2, 2).ratio
    enc = sum(b.encoded_bits for b in pb.per_level)
    assert pb.weighted == enc / 5


def test_mask_operation_counts():
    n, G, m = 3, 5, 20
    plan = _plan(Topology.from_uniform(G, n), K5, m)
    N = n * G
    for u in range(N):
        counts = count_mask_operations(plan, u)
        assert sorted(set(counts.pairwise_per_element)) == [n - 1, 2 * n - 1]
        assert counts.pairwise_per_element.count(n - 1) == 1
    assert count_secag_operations(N, m).pairwise_per_element == [N - 1]
    rows = scheme_comparison(plan)
    assert rows[0]["pairwise_masks_per_element"] == N - 1
    assert rows[1]["pairwise_masks_per_element"] == 2 * n - 1
    assert rows[1]["inference_robustness"] == pytest.approx(0.8)


def test_communication_report_bits():
    plan = _plan(Topology.from_uniform(5, 5), K5, 79510)
    rep = communication_report(plan, [1e6] + [2e6] * 4, rounds=200)
    for g in range(5):
        u = 5 * g
        assert rep.bits_per_group[g] == 200 * plan.bits_per_user(u)
    assert rep.total_time == max(rep.time_per_group)
    with pytest.raises(ConfigError):
        communication_report(plan, [1e6], rounds=1)

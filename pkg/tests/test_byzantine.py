import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heterosag.byzantine import (AttackSpec, contaminated_segments, coordinate_median, inject_attack,
                                 max_byzantine, robust_aggregate)
from heterosag.errors import ConfigError
from heterosag.protocol import RoundPlan, Topology, reassemble, run_round, setup_round
from heterosag.quantization import QuantizerSpec


def test_max_byzantine_values():
    assert max_byzantine(5) == 1
    assert max_byzantine(75) == 18
    assert max_byzantine(4) == 0
    assert max_byzantine(1) == 0
    assert max_byzantine(9) == 2
    with pytest.raises(ConfigError):
        max_byzantine(0)


def test_median_examples():
    assert coordinate_median([[1.0, 5.0], [2.0, 4.0], [9.0, -1.0]]).tolist() == [2.0, 4.0]
    # an even count averages the middle pair
    assert coordinate_median([[2.0], [5.0]]).tolist() == [3.5]
    assert coordinate_median([[1.0], [2.0], [3.0], [100.0]]).tolist() == [2.5]
    with pytest.raises(ValueError):
        coordinate_median([])


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 15).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, (n - 1) // 2))),
    st.integers(0, 2**32))
def test_median_stays_in_benign_hull(nb, seed):
    n, bad = nb
    rng = np.random.default_rng(seed)
    benign = rng.normal(size=(n - bad, 6))
    outliers = rng.normal(scale=1e6, size=(bad, 6))
    med = coordinate_median(np.vstack([benign, outliers]))
    assert np.all(med >= benign.min(axis=0) - 1e-12)
    assert np.all(med <= benign.max(axis=0) + 1e-12)


def test_attack_kinds():
    rng = np.random.default_rng(0)
    x = np.ones(200_000)
    g = inject_attack(x, AttackSpec("gaussian", (0,), sigma=5.0), rng)
    assert abs(g.std() - 5.0) < 0.05 and abs(g.mean()) < 0.05
    assert np.all(inject_attack(x, AttackSpec("sign_flip", (0,)), rng) == -5.0)
    assert np.all(inject_attack(x, AttackSpec("label_flip", (0,)), rng) == 30.0)
    assert np.array_equal(inject_attack(x, AttackSpec(), rng), x)
    with pytest.raises(ConfigError):
        AttackSpec("bogus")
    with pytest.raises(ConfigError):
        AttackSpec("gaussian", (7,)).validate(5)
    assert not AttackSpec("gaussian").active


def test_single_byzantine_footprint_g5():
    # [PAPER] one bad user in group 0 taints the level-0..3 pairs with groups 1..4 and its own star level
    topo = Topology.from_uniform(5, 2)
    plan = RoundPlan.build(topo, [QuantizerSpec(k) for k in (2, 6, 8, 10, 12)], 10)
    bad = contaminated_segments(plan, [0])
    assert len(bad) == 5
    cols = {plan.slots[l][k].columns for l, k in bad}
    assert cols == {(0, 1), (0, 2), (0, 3), (0, 4), (0,)}
    levels = {plan.slots[l][k].columns: l for l, k in bad}
    assert levels[(0, 1)] == 0 and levels[(0,)] == 4


def test_median_without_attack_matches_mean_on_identical_updates():
    topo = Topology.from_uniform(3, 2)
    plan = RoundPlan.build(topo, [QuantizerSpec(2**20, -2, 2)] * 3, 9)
    users = setup_round(topo, np.random.default_rng(1))
    x = np.linspace(-0.9, 0.9, 9)
    out = run_round(users, np.tile(x, (6, 1)), plan, [np.random.default_rng(i) for i in range(6)])
    assert np.allclose(robust_aggregate(out), x, atol=1e-5)
    assert np.allclose(reassemble(out) / 6, x, atol=1e-5)


def test_median_rejects_one_bad_group_of_five():
    topo = Topology.from_uniform(5, 2)
    plan = RoundPlan.build(topo, [QuantizerSpec(2**16, -100, 100)] * 5, 10)
    users = setup_round(topo, np.random.default_rng(2))
    rng = np.random.default_rng(3)
    xs = 0.1 * rng.normal(size=(10, 10))
    xs[0] = inject_attack(xs[0], AttackSpec("sign_flip", (0,), multiplier=-500), rng)
    out = run_round(users, xs, plan, [np.random.default_rng(i) for i in range(10)])
    med = robust_aggregate(out)
    mean = reassemble(out) / 10
    assert np.max(np.abs(med)) < 1.0
    assert np.max(np.abs(mean)) > np.max(np.abs(med))

import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from btfuzz import log2bt, synthetic
from btfuzz.behavior import EndsByBehaviorCondition, TimeCondition
from btfuzz.errors import EmptyDistribution, EmptyOverlap, TooFewStates, UnknownProperty
from btfuzz.frenet import FrenetState, TrajectoryPoint, partition_cost, plan_segment
from btfuzz.log2bt import (CHANGE_LANE, CRUISE, FOLLOW_LOG, CharacteristicState, PartitionConfig,
                           build_bt, classify_segment, partition, partition_states)
from btfuzz.scenario import bind_document, concrete, effective_dimension, sample


def exact_states(plans, dt=0.1):
    """States sampled straight from chained plans (no estimation)."""
    t_end = plans[-1].t0 + plans[-1].duration
    out = []
    for k in range(int(round(t_end / dt)) + 1):
        t = k * dt
        plan = next(p for p in reversed(plans) if t >= p.t0 - 1e-9)
        out.append(plan.state_at(min(t - plan.t0, plan.duration)))
    return out


def brute_force_split(states):
    arr = log2bt._states_array(states)
    n = len(states)

    def total(k):
        return (partition_cost(arr[: k + 1], plan_segment(states[0], states[k]))
                + partition_cost(arr[k:], plan_segment(states[k], states[-1])))
    return min(range(1, n - 1), key=total)


def cs(d=0.0, s_dot=20.0, t=0.0, index=0):
    return CharacteristicState(FrenetState(0.0, s_dot, 0.0, d, 0.0, 0.0, t), index)


# --------------------------------------------------------------------------
# partition

def test_single_piece_gives_endpoints_only():
    traj, path, _ = synthetic.polynomial_log(1, seed=4)
    css = partition(traj, path)
    assert [c.index for c in css] == [0, len(traj) - 1]


def test_infinite_threshold_gives_endpoints_only():
    traj, path, _ = synthetic.polynomial_log(4, seed=2, noise=0.2)
    css = partition(traj, path, PartitionConfig(eps_part=math.inf))
    assert [c.index for c in css] == [0, len(traj) - 1]


@pytest.mark.parametrize("seed", range(8))
def test_sharp_lateral_break_is_found(seed):
    rng = np.random.default_rng(seed)
    t1 = round(rng.uniform(2.0, 5.0), 1)
    t2 = round(rng.uniform(2.0, 3.0), 1)
    lat = rng.choice([-1.0, 1.0]) * rng.uniform(3.0, 4.0)
    v = rng.uniform(10.0, 25.0)
    plans = synthetic.chain_segments(FrenetState(10.0, v, 0, 0, 0, 0, 0),
                                     [(t1, v, 0, 0, 0, 0), (t2, v, 0, lat, 0, 0)])
    states = exact_states(plans)
    m = int(round(t1 / 0.1))
    css = partition_states(states)
    assert len(css) == 3
    assert abs(css[1].index - m) <= 1
    assert abs(brute_force_split(states) - css[1].index) <= 1


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), pieces=st.integers(1, 4), noise=st.sampled_from([0.0, 0.05, 0.3]))
def test_partition_invariants(seed, pieces, noise):
    traj, path, _ = synthetic.polynomial_log(pieces, seed, noise=noise)
    cfg = PartitionConfig()
    states = log2bt.estimate_states(traj, path, cfg)
    trace = []
    css = partition_states(states, cfg, trace)
    idx = [c.index for c in css]
    assert idx[0] == 0 and idx[-1] == len(traj) - 1
    assert all(b > a for a, b in zip(idx, idx[1:]))
    # replay of the greedy loop: every accepted window stayed under the threshold
    costs = {(a, b): c for a, b, c in trace}
    for a, b in zip(css[:-1], css[1:]):
        if b.forced_follow:
            continue
        assert costs[(a.index, b.index)] <= cfg.eps_part


# --------------------------------------------------------------------------
# classification

def test_lateral_offset_means_lane_change():
    assert classify_segment(cs(0.0), cs(3.0)).kind == CHANGE_LANE


def test_small_changes_mean_cruise():
    assert classify_segment(cs(0.0, 20.0), cs(0.1, 20.2)).kind == CRUISE


def test_speed_change_means_follow_log():
    assert classify_segment(cs(0.0, 20.0), cs(0.1, 24.0)).kind == FOLLOW_LOG


def test_lane_change_checked_before_cruise():
    assert classify_segment(cs(0.0, 20.0), cs(2.5, 20.0)).kind == CHANGE_LANE
    assert classify_segment(cs(0.0, 20.0), cs(2.5, 30.0)).kind == CHANGE_LANE


def test_thresholds_are_strict():
    assert classify_segment(cs(0.0), cs(2.0)).kind == CRUISE
    assert classify_segment(cs(0.0, 20.0), cs(0.0, 21.0)).kind == FOLLOW_LOG


@settings(max_examples=300, deadline=None)
@given(dd=st.floats(-10, 10), dv=st.floats(-10, 10))
def test_classification_is_total_and_follows_priority(dd, dv):
    kind = classify_segment(cs(0.0, 20.0), cs(dd, 20.0 + dv)).kind
    if abs(dd) > 2.0:
        assert kind == CHANGE_LANE
    elif abs(dv) < 1.0:
        assert kind == CRUISE
    else:
        assert kind == FOLLOW_LOG


# --------------------------------------------------------------------------
# tree emission

def test_cut_in_log_becomes_cruise_then_lane_change():
    traj, path = synthetic.cut_in_log(v1=20.0, v2=23.0, lat=3.5, t_cruise=3.4, t_change=5.0, t_after=0.0)
    res = log2bt.log2bt(traj, path)
    cruise, change = res.tree.leaves()
    assert (cruise.type, change.type) == ("cruise", "changelane")
    assert cruise.params["speed"] == pytest.approx(20.0, abs=1e-6)
    assert cruise.params["duration"] == pytest.approx(3.4, abs=1e-6)
    assert change.params["direction"] == "right"
    assert change.params["offset"] == pytest.approx(3.5, abs=1e-6)
    assert change.params["end_speed"] == pytest.approx(23.0, abs=1e-6)
    assert change.params["duration"] == pytest.approx(5.0, abs=1e-6)
    assert cruise.condition == TimeCondition(0.0)
    assert change.condition == EndsByBehaviorCondition(cruise.id)
    assert res.tree.root.type == "sequence"


def test_two_follow_log_states_give_one_leaf():
    a = CharacteristicState(FrenetState(0.0, 10.0, 0.0, 0.0, 0.0, 0.0, 1.0), 0)
    b = CharacteristicState(FrenetState(50.0, 15.0, 0.0, 0.5, 0.0, 0.0, 5.0), 40)
    tree = build_bt([a, b])
    (only,) = tree.leaves()
    assert only.type == "follow_log"
    assert only.params["duration"] == pytest.approx(4.0)
    assert only.params["end"][1] == 15.0


def test_build_needs_two_states():
    with pytest.raises(TooFewStates):
        build_bt([cs()])


def test_log_mode_emits_only_follow_log():
    traj, path = synthetic.cut_in_log()
    res = log2bt.log2bt(traj, path, semantic=False)
    assert set(log2bt.labels(res.tree)) == {"follow_log"}


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 10_000), pieces=st.integers(1, 4))
def test_open_loop_replay_reconstructs_polynomial_logs(seed, pieces):
    traj, path, _ = synthetic.polynomial_log(pieces, seed)
    res = log2bt.log2bt(traj, path, semantic=False)
    ade_s, ade_l = log2bt.reconstruction_error(traj, log2bt.reconstruct(res), path)
    assert ade_s < 1e-3 and ade_l < 1e-3


# --------------------------------------------------------------------------
# reconstruction error

def _line(offset=0.0, t0=0.0, n=50):
    return [TrajectoryPoint(2.0 * k, offset, 0.0, t0 + 0.1 * k) for k in range(n)]


def test_identical_trajectories_have_zero_error():
    path = synthetic.straight_path()
    assert log2bt.reconstruction_error(_line(), _line(), path) == (0.0, 0.0)


def test_constant_lateral_offset():
    path = synthetic.straight_path()
    ade_s, ade_l = log2bt.reconstruction_error(_line(), _line(0.2), path)
    assert ade_s == pytest.approx(0.0, abs=1e-12)
    assert ade_l == pytest.approx(0.2, abs=1e-12)


def test_interpolates_onto_original_timestamps():
    path = synthetic.straight_path()
    shifted = [TrajectoryPoint(p.x + 1.0, p.y, 0.0, p.t + 0.05) for p in _line()]
    # the shifted log passes x(t) = 20 t + 1 - 1 = 20 t exactly at the original times
    ade_s, _ = log2bt.reconstruction_error(_line(n=40), shifted, path)
    assert ade_s == pytest.approx(0.0, abs=1e-9)


def test_disjoint_time_ranges():
    with pytest.raises(EmptyOverlap):
        log2bt.reconstruction_error(_line(), _line(t0=100.0), synthetic.straight_path())


# --------------------------------------------------------------------------
# generalisation

def _interval_samples(lo, hi, n=2001):
    """Evenly spaced samples whose 5% / 95% quantiles are exactly lo / hi."""
    w = (hi - lo) / 0.9
    return np.linspace(lo - 0.05 * w, hi + 0.05 * w, n).tolist()


def _cut_in_result():
    traj, path = synthetic.cut_in_log(v1=20.0, v2=23.0, t_after=0.0)
    return log2bt.log2bt(traj, path)


def test_cut_in_generalizes_to_published_ranges():
    doc = log2bt.scenario_document(_cut_in_result())
    dists = {
        "v1": {"target": "agent.cruise_0.speed", "samples": _interval_samples(16, 28)},
        "lat": {"target": "agent.changelane_1.offset", "samples": _interval_samples(1, 6)},
        "v2": {"target": "agent.changelane_1.end_speed", "samples": _interval_samples(20, 30)},
        "t": {"target": "agent.changelane_1.duration", "samples": _interval_samples(4, 10)},
    }
    ls = log2bt.generalize(doc, dists)
    got = {v.name: (v.domain.lo, v.domain.hi) for v in ls.variables}
    want = {"v1": (16, 28), "lat": (1, 6), "v2": (20, 30), "t": (4, 10)}
    for name, (lo, hi) in want.items():
        assert got[name] == pytest.approx((lo, hi), abs=1e-9)
    assert effective_dimension(ls) == 4


def test_uniform_sample_quantiles():
    x = np.random.default_rng(0).uniform(0.0, 10.0, 10_000)
    lo, hi = log2bt.quantile_range(x)
    assert lo == pytest.approx(0.5, abs=0.2)
    assert hi == pytest.approx(9.5, abs=0.2)


def test_no_variation_keeps_the_scenario():
    doc = log2bt.scenario_document(_cut_in_result())
    ls = log2bt.generalize(doc, {})
    assert effective_dimension(ls) == 0
    assert bind_document(sample(ls, [])) == doc


def test_pinning_variables_to_source_values_reproduces_the_tree():
    doc = log2bt.scenario_document(_cut_in_result())
    source = copy.deepcopy(doc)
    dists = {"v1": {"target": "agent.cruise_0.speed", "samples": _interval_samples(16, 28)},
             "t": {"target": "agent.changelane_1.duration", "samples": _interval_samples(4, 10)}}
    ls = log2bt.generalize(doc, dists)
    tree = source["agents"][0]["tree"]
    values = [tree["children"][0]["speed"], tree["children"][1]["duration"]]
    assert bind_document(concrete(ls, values)) == source


def test_unknown_property_and_empty_distribution():
    doc = log2bt.scenario_document(_cut_in_result())
    with pytest.raises(UnknownProperty):
        log2bt.generalize(doc, {"x": {"target": "agent.nope.speed", "samples": [1, 2]}})
    with pytest.raises(EmptyDistribution):
        log2bt.generalize(doc, {"x": {"target": "agent.cruise_0.speed", "samples": []}})
    with pytest.raises(EmptyDistribution):
        log2bt.generalize(doc, {"x": {"target": "agent.cruise_0.speed", "samples": [3.0, 3.0]}})


# --------------------------------------------------------------------------
# compression

def test_two_point_log_may_not_compress():
    traj = [TrajectoryPoint(0.0, 0.0, 0.0, 0.0), TrajectoryPoint(2.0, 0.0, 0.0, 0.1)]
    res = log2bt.log2bt(traj, synthetic.straight_path())
    assert 0 < log2bt.compression_ratio(traj, res.tree) < 1


def test_ratio_grows_with_log_length():
    traj, path = synthetic.cut_in_log(t_after=10.0)
    tree = log2bt.log2bt(traj, path).tree
    ratios = [log2bt.compression_ratio(traj[:n], tree) for n in (50, 100, 150, len(traj))]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))


def test_noisy_cut_in_keeps_its_labels():
    traj, path = synthetic.cut_in_log(v1=18.0, v2=21.0, t_after=4.0, noise=0.1, seed=5)
    res = log2bt.log2bt(traj, path)
    assert log2bt.labels(res.tree) == ["cruise", "changelane", "cruise"]
    ade_s, ade_l = log2bt.reconstruction_error(traj, log2bt.reconstruct(res), path)
    assert ade_s < 0.3 and ade_l < 0.3


def test_noise_level_estimate():
    rng = np.random.default_rng(1)
    t = np.linspace(0, 10, 400)
    clean = 3 + 2 * t - 0.1 * t ** 3 + 0.004 * t ** 5
    assert log2bt.noise_level(clean) < 1e-6
    assert log2bt.noise_level(clean + rng.normal(0, 0.1, t.size)) == pytest.approx(0.1, rel=0.15)

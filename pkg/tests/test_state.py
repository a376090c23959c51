from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fogbalance.policies import DecisionContext, PrivilegedView
from fogbalance.state import (ParlEncoder, PlrlEncoder, PlrlRewarder, RunningMinMax,
                              dist_update, edql_reward, parl_reward, plrl_reward)
from fogbalance.topology import generate_topology
from fogbalance.workload import Workload, default_apps

from oracles import dist_recurrence

SHAPE = (4, 2, 3)


def _apply(updates, shape=SHAPE):
    d = np.zeros(shape)
    for a, c, w in updates:
        d = dist_update(d, a, c, w)
    return d


def test_first_three_updates():
    d = _apply([(0, 0, 0)])
    assert d[0, 0, 0] == 1.0 and d.sum() == 1.0
    d = dist_update(d, 1, 0, 0)
    assert (d[0, 0, 0], d[1, 0, 0]) == (0.5, 0.5)
    d = dist_update(d, 2, 0, 0)
    assert (d[0, 0, 0], d[1, 0, 0], d[2, 0, 0]) == (0.25, 0.25, 0.5)
    assert np.count_nonzero(d) == 3


def test_no_previous_action_restarts():
    d = _apply([(0, 0, 0), (1, 1, 1)])
    assert not dist_update(d, None, 0, 0).any()


def test_out_of_range_index():
    with pytest.raises(IndexError):
        dist_update(np.zeros(SHAPE), 4, 0, 0)


def test_input_not_modified():
    d = _apply([(0, 0, 0)])
    before = d.copy()
    dist_update(d, 1, 1, 1)
    assert np.array_equal(d, before)


def test_repeated_cell_stays_at_one():
    d = _apply([(2, 1, 2)] * 25)
    assert d[2, 1, 2] == 1.0 and d.sum() == 1.0


cells = st.tuples(st.integers(0, SHAPE[0] - 1), st.integers(0, SHAPE[1] - 1),
                  st.integers(0, SHAPE[2] - 1))


@settings(max_examples=200, deadline=None)
@given(st.lists(cells, min_size=1, max_size=60))
def test_matches_exact_recurrence(updates):
    d = _apply(updates)
    exact = dist_recurrence(updates, SHAPE)
    for idx in np.ndindex(SHAPE):
        assert d[idx] == pytest.approx(float(exact.get(idx, Fraction(0))), abs=1e-9)
    assert (d >= 0).all()
    assert d.sum() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(np.ndindex(SHAPE))), st.integers(1, 24))
def test_vanishing_law_for_distinct_cells(order, n):
    updates = order[:n]
    d = _apply(updates)
    # the newest update is one step ago; the two oldest share the remaining mass
    for k, cell in enumerate(reversed(updates), start=1):
        want = 2.0 ** -k if k < n else 2.0 ** -(n - 1)
        assert d[cell] == want


def test_underflowing_weights_are_flushed():
    d = _apply([(0, 0, 0)] + [(1, 0, 0), (2, 0, 0)] * 80)
    assert d[0, 0, 0] == 0.0
    assert d.sum() == pytest.approx(1.0)


def test_parl_reward():
    assert parl_reward(5, 3) == 2
    assert parl_reward(4, 4) == 0
    with pytest.raises(ValueError):
        parl_reward(-1, 0)


def test_plrl_rewards():
    assert plrl_reward("ED", 12.5, 0) == -12.5
    assert plrl_reward("QL", 0.0, 7) == -7
    assert edql_reward(0.2, 0.3, True, 1.0) == pytest.approx(-1.5)
    assert edql_reward(0.2, 0.3, False, 1.0) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        plrl_reward("XX", 1.0, 1)


def test_running_min_max():
    mm = RunningMinMax()
    assert mm(5.0) == 0.0
    assert mm(15.0) == 1.0
    assert mm(10.0) == 0.5
    mm.reset()
    assert mm(100.0) == 0.0


def _ctx(topo, cluster, app, view=None):
    w = Workload(uid=0, app=app.id, source_cluster=cluster, created_at=0.0)
    return DecisionContext(w, app, topo.fog_ids, 0.0, view)


def test_parl_encoding_layout_and_history():
    topo = generate_topology(10, 2, 0)
    apps = default_apps()
    enc = ParlEncoder(topo.fog_ids, topo.cluster_ids)
    n_a, n_c = len(topo.fog_ids), len(topo.cluster_ids)
    assert enc.dim == n_c + 3 + n_a * n_c * 3
    s = enc.encode(_ctx(topo, topo.cluster_ids[1], apps[2]))
    assert s.shape == (enc.dim,)
    assert s[1] == 1.0 and s[n_c + 2] == 1.0 and s.sum() == 2.0
    enc.commit(3)
    s = enc.encode(_ctx(topo, topo.cluster_ids[0], apps[0]))
    d = s[n_c + 3:].reshape(n_a, n_c, 3)
    assert d[3, 1, 2] == 1.0 and d.sum() == 1.0  # previous (action, cluster, category)
    enc.commit(5)
    s = enc.encode(_ctx(topo, topo.cluster_ids[0], apps[1]))
    d = s[n_c + 3:].reshape(n_a, n_c, 3)
    assert (d[3, 1, 2], d[5, 0, 0]) == (0.5, 0.5)
    enc.reset()
    s = enc.encode(_ctx(topo, topo.cluster_ids[0], apps[1]))
    assert not s[n_c + 3:].any()


def test_plrl_encoding_reads_waiting_counts():
    topo = generate_topology(10, 2, 0)
    app = default_apps()[0]
    waiting = {f: i for i, f in enumerate(topo.fog_ids)}
    view = PrivilegedView(waiting, {f: 0.0 for f in topo.fog_ids},
                          {f: topo.node(f).ipt for f in topo.fog_ids})
    enc = PlrlEncoder(topo.fog_ids, topo.cluster_ids)
    s = enc.encode(_ctx(topo, topo.cluster_ids[1], app, view))
    assert list(s) == [0, 1] + list(range(len(topo.fog_ids)))
    with pytest.raises(ValueError):
        enc.encode(_ctx(topo, topo.cluster_ids[1], app))


def test_plrl_rewarder_uses_previous_placement():
    topo = generate_topology(10, 2, 0)
    app = default_apps()[2]
    f = topo.fog_ids[0]
    c = topo.cluster_ids[0]
    ipt = {g: topo.node(g).ipt for g in topo.fog_ids}
    idle = PrivilegedView({g: 0 for g in topo.fog_ids}, {g: 0.0 for g in topo.fog_ids}, ipt)
    busy = PrivilegedView({g: 12 if g == f else 0 for g in topo.fog_ids},
                          {g: 0.0 for g in topo.fog_ids}, ipt)
    ed = topo.transit(c, f, app.req_bytes) + app.fog_instr / ipt[f]

    r = PlrlRewarder("ED", topo)
    assert r.reward(_ctx(topo, c, app, idle)) == 0.0
    r.commit(_ctx(topo, c, app, idle), f)
    assert r.reward(_ctx(topo, c, app, busy)) == pytest.approx(-ed)

    r = PlrlRewarder("QL", topo)
    r.commit(_ctx(topo, c, app, idle), f)
    assert r.reward(_ctx(topo, c, app, busy)) == -12

    r = PlrlRewarder("EDQL", topo, capacity=10, overflow_penalty=1.0)
    r.commit(_ctx(topo, c, app, idle), f)
    # first observation: both running scales are degenerate (0), overflow applies
    assert r.reward(_ctx(topo, c, app, busy)) == -1.0

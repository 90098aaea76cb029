import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from dragsim.lm import MockLanguageModel, TopicSet
from dragsim.routing import (
    ExpertiseCache,
    SearchParams,
    flood_search,
    rw_search,
    score_neighbors,
    select_top_k,
    tarw_search,
    update_expertise,
)
from dragsim.topology import complete_graph, generate_ba, path_graph, ring_graph, star_graph
from tests.conftest import make_net, record, snippet_for

FLU = TopicSet(("flu",))


def test_params_validation():
    for bad in (dict(h_max=-1), dict(k=0), dict(theta=1.5), dict(scheme="dht")):
        with pytest.raises(ValueError):
            SearchParams(**bad)


def test_score_neighbors():
    empty = ExpertiseCache(0)
    assert score_neighbors([1, 2], empty, {"a"}) == {1: 0.0, 2: 0.0}
    cache = ExpertiseCache(0, {1: {"a", "b"}, 2: {"a"}})
    assert score_neighbors([1], cache, {"a", "b"})[1] == 1.0
    assert score_neighbors([2], cache, {"a", "b", "c"})[2] == pytest.approx(1 / 3)
    assert score_neighbors([3], cache, set()) == {3: 0.0}


def test_select_top_k_ordering():
    rng = random.Random(0)
    assert select_top_k([1, 2, 3], {1: 0.5, 2: 0.2, 3: 0.9}, 2, rng) == [3, 1]
    assert sorted(select_top_k([4, 5, 6], {}, 3, rng)) == [4, 5, 6]
    assert select_top_k([7], {}, 5, rng) == [7]


def test_select_top_k_uniform_when_tied():
    counts = Counter()
    trials = 10_000
    for seed in range(trials):
        counts[select_top_k([1, 2, 3, 4], {}, 1, random.Random(seed))[0]] += 1
    for p in (1, 2, 3, 4):
        assert abs(counts[p] / trials - 0.25) <= 0.02


def test_update_expertise():
    cache = ExpertiseCache(0)
    update_expertise(cache, 5, {"flu"})
    assert cache.entries == {5: {"flu"}}
    update_expertise(cache, 5, {"flu"})
    assert cache.entries == {5: {"flu"}}
    update_expertise(cache, 5, {"Cold "})
    assert cache.entries == {5: {"flu", "cold"}}
    update_expertise(cache, 0, {"x"})
    assert 0 not in cache.entries


def test_tarw_star_leaf_to_center():
    recs = [record(0)]
    net = make_net(star_graph(5), {0: recs}, recs)
    found, tr = tarw_search(net, 3, recs[0].question, SearchParams(k=1), random.Random(0), topics=FLU)
    assert found[0].source_record == "r0"
    assert (tr.hops_to_hit, tr.messages_sent) == (1, 2)
    assert net.caches[3].entries == {0: {"flu"}}


def test_tarw_zero_hop_limit_never_searches():
    recs = [record(0)]
    net = make_net(star_graph(3), {0: recs}, recs)
    for origin in (0, 1):
        found, tr = tarw_search(net, origin, recs[0].question, SearchParams(h_max=0), random.Random(0), topics=FLU)
        assert found is None and tr.messages_sent == 0 and tr.visited == []


def test_tarw_path_with_warm_cache():
    recs = [record(0)]
    net = make_net(path_graph(3), {2: recs}, recs)
    update_expertise(net.caches[0], 1, {"flu"})
    found, tr = tarw_search(net, 0, recs[0].question, SearchParams(k=1), random.Random(5), topics=FLU)
    # the only route is 0 -> 1 -> 2
    assert found is not None
    assert (tr.hops_to_hit, tr.messages_sent, tr.visited) == (2, 3, [0, 1, 2])


def test_tarw_prefers_cached_expert():
    recs = [record(0)]
    net = make_net(star_graph(8), {}, recs)
    # center 0 with leaves 1..8; gold sits nowhere, we only check who is forwarded to
    update_expertise(net.caches[0], 6, {"flu"})
    _, tr = tarw_search(net, 0, recs[0].question, SearchParams(k=1, h_max=2), random.Random(1), topics=FLU, learn=False)
    assert tr.visited == [0, 6]


def test_tarw_extracts_topics_with_lm():
    recs = [record(0, "oncology")]
    net = make_net(path_graph(2), {1: recs}, recs)
    found, _ = tarw_search(net, 0, recs[0].question, SearchParams(), random.Random(0), lm=MockLanguageModel(recs))
    assert found is not None
    assert net.caches[0].entries == {1: {"oncology"}}


def test_rw_ring_always_hits():
    recs = [record(0)]
    net = make_net(ring_graph(4), {2: recs}, recs)
    for seed in range(50):
        found, tr = rw_search(net, 0, recs[0].question, SearchParams(), random.Random(seed))
        assert found is not None and tr.hops_to_hit == 2


def test_rw_hit_at_origin_costs_nothing():
    recs = [record(0)]
    net = make_net(complete_graph(3), {0: recs}, recs)
    found, tr = rw_search(net, 0, recs[0].question, SearchParams(), random.Random(0))
    assert found is not None and tr.hops_to_hit == 0 and tr.messages_sent == 0


def test_rw_star_hit_probability():
    # hop-1 leaves are consulted only when h_max > 1 (hop >= h_max is skipped)
    recs = [record(0)]
    net = make_net(star_graph(9), {4: recs}, recs)
    trials = 10_000
    hits = sum(
        rw_search(net, 0, recs[0].question, SearchParams(h_max=2), random.Random(seed))[0] is not None
        for seed in range(trials)
    )
    assert abs(hits / trials - 1 / 9) <= 0.02


def test_rw_dead_end_is_miss():
    recs = [record(0)]
    net = make_net(star_graph(4), {2: recs}, recs)
    found, tr = rw_search(net, 1, recs[0].question, SearchParams(), random.Random(0))
    # leaf 1 -> center 0 -> one other leaf, then nothing unvisited left beyond it
    assert len(tr.visited) == 3
    assert (found is None) == (tr.visited[-1] != 2)


def test_rw_never_touches_expertise():
    recs = [record(0)]
    net = make_net(path_graph(3), {2: recs}, recs)
    rw_search(net, 0, recs[0].question, SearchParams(), random.Random(0))
    assert len(net.caches[0]) == 0


def test_flood_star():
    recs = [record(0)]
    net = make_net(star_graph(9), {5: recs}, recs)
    found, tr = flood_search(net, 0, recs[0].question, SearchParams(scheme="fl"))
    assert found is not None
    assert (tr.hops_to_hit, tr.messages_sent, tr.hit_peer) == (1, 10, 5)


def test_flood_origin_hit_and_hop_limit():
    recs = [record(0)]
    net = make_net(path_graph(4), {0: recs}, recs)
    _, tr = flood_search(net, 0, recs[0].question, SearchParams())
    assert tr.messages_sent == 0 and tr.hit
    net = make_net(path_graph(4), {3: recs}, recs)
    found, tr = flood_search(net, 0, recs[0].question, SearchParams(h_max=2))
    assert found is None
    assert tr.messages_sent == 2
    assert tr.visited == [0, 1, 2]


def test_flood_tie_break_lowest_id():
    recs = [record(0)]
    net = make_net(star_graph(4), {}, recs)
    for peer in (3, 2):
        net.stores[peer].insert(snippet_for(recs[0]))
    _, tr = flood_search(net, 0, recs[0].question, SearchParams())
    assert tr.hit_peer == 2


def test_private_knowledge_never_leaves():
    recs = [record(0)]
    net = make_net(path_graph(3), {2: recs}, recs, private={"r0"})
    for search in (
        lambda: tarw_search(net, 0, recs[0].question, SearchParams(), random.Random(0), topics=FLU),
        lambda: flood_search(net, 0, recs[0].question, SearchParams()),
    ):
        found, tr = search()
        assert found is None
        assert tr.hit_snippet is None and tr.resolved_by == "filtered"


# -- properties over generated graphs ----------------------------------------

graph_case = st.tuples(st.integers(1, 3), st.integers(5, 30), st.integers(0, 10_000), st.integers(0, 10_000))


def _random_world(m, n, seed, n_records=12):
    rng = random.Random(seed)
    t = generate_ba(n, max(1, min(m, n - 1)), seed)
    recs = [record(i, ["a", "b", "c"][i % 3]) for i in range(n_records)]
    placement = {}
    for r in recs:
        if rng.random() < 0.8:
            placement.setdefault(rng.randrange(n), []).append(r)
    return t, recs, placement


@settings(max_examples=80, deadline=None)
@given(graph_case)
def test_flood_exhaustive_with_unbounded_hops(case):
    m, n, seed, wseed = case
    t, recs, placement = _random_world(m, n, seed)
    net = make_net(t, placement, recs)
    held = {r.record_id for rs in placement.values() for r in rs}
    origin = wseed % n
    for r in recs:
        found, tr = flood_search(net, origin, r.question, SearchParams(h_max=n))
        assert (found is not None) == (r.record_id in held)
        assert len(set(tr.visited)) == len(tr.visited)


@settings(max_examples=80, deadline=None)
@given(graph_case)
def test_cold_tarw_k1_equals_random_walk(case):
    m, n, seed, wseed = case
    t, recs, placement = _random_world(m, n, seed)
    net = make_net(t, placement, recs)
    origin = wseed % n
    for r in recs:
        _, a = tarw_search(net, origin, r.question, SearchParams(k=1), random.Random(wseed), topics=FLU, learn=False)
        _, b = rw_search(net, origin, r.question, SearchParams(scheme="rw"), random.Random(wseed))
        da, db = a.to_dict(), b.to_dict()
        da.pop("scheme"), db.pop("scheme")
        assert da == db


@settings(max_examples=60, deadline=None)
@given(graph_case, st.integers(1, 6), st.integers(0, 6))
def test_walk_invariants(case, k, h_max):
    m, n, seed, wseed = case
    t, recs, placement = _random_world(m, n, seed)
    net = make_net(t, placement, recs)
    rng = random.Random(wseed)
    for r in recs:
        for scheme in ("tarw", "rw"):
            params = SearchParams(h_max=h_max, k=k, scheme=scheme)
            if scheme == "tarw":
                _, tr = tarw_search(net, wseed % n, r.question, params, rng, topics=FLU)
            else:
                _, tr = rw_search(net, wseed % n, r.question, params, rng)
            assert len(set(tr.visited)) == len(tr.visited)
            assert tr.messages_sent >= len(tr.visited) - 1
            if tr.hops_to_hit is not None:
                assert tr.hops_to_hit < max(h_max, 1)
            # consecutive consultations come from a bounded fan-out
            width = k if scheme == "tarw" else 1
            assert len(tr.visited) <= sum(width**h for h in range(h_max))


def test_replay_determinism():
    t = generate_ba(40, 3, 9)
    recs = [record(i, ["a", "b"][i % 2]) for i in range(30)]
    placement = {}
    rng = random.Random(2)
    for r in recs:
        placement.setdefault(rng.randrange(40), []).append(r)

    def run():
        net = make_net(t, placement, recs)
        walk = random.Random(11)
        out = []
        for i, r in enumerate(recs * 3):
            topics = TopicSet((r.topic,))
            out.append(tarw_search(net, i % 40, r.question, SearchParams(k=2), walk, topics=topics)[1].to_json())
        return out

    assert run() == run()

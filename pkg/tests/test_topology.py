import itertools
import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from ddsrecon.capture import CaptureRecord, load_capture
from ddsrecon.intersection import (
    Direction,
    EdgeOracle,
    EdgeState,
    brute_force_intersection,
    grant_intersection,
    validate_pair,
)
from ddsrecon.netsim import generate_grid, generate_random, grid_label
from ddsrecon.permissions import CriteriaSet, DomainSet, Grant, PermissionsFile, Qualifier, Rule
from ddsrecon.topology import (
    ANY_TOPIC,
    BipartiteGraph,
    GraphMode,
    HeuristicGraph,
    UnknownVertex,
    build_bipartite,
    build_exact_graph,
    build_heuristic_graph,
    collapse_topics,
    find_path,
    isolate_source,
    isolate_target,
    min_cut_between,
    project_participants,
    to_dot,
    to_json,
)

from randgen import AT, VALID, make_db, scenario_db

DATA = Path(__file__).parent / "data"
EXACT, FAST = GraphMode.EXACT_INTERSECTION, GraphMode.FAST_FNMATCH


def guid(i):
    return f"{i:032x}"


def simple(subject, pubs=(), subs=(), default=Qualifier.DENY):
    rules = [Rule(Qualifier.ALLOW, DomainSet.of(0), publish=CriteriaSet((t,))) for t in pubs]
    rules += [Rule(Qualifier.ALLOW, DomainSet.of(0), subscribe=CriteriaSet((t,))) for t in subs]
    return PermissionsFile(subject, (Grant(subject, *VALID, tuple(rules), default),))


@pytest.fixture
def talker_listener():
    recs = [CaptureRecord(AT, f"10.0.0.{i}:7400", "239.255.0.1:7400", guid(i + 1),
                          f"CN={name}", (DATA / f"{name}.xml").read_bytes())
            for i, name in enumerate(["talker", "listener"])]
    return load_capture(recs)[0]


# -- reachability helpers on an explicit edge set ------------------------------


def reach(edges, src, removed=frozenset()):
    seen, stack = {src}, [src]
    while stack:
        u = stack.pop()
        for a, b in edges:
            if a == u and b not in seen and b not in removed:
                seen.add(b)
                stack.append(b)
    return seen - {src}


def brute_min_cut(vertices, edges, src, dst):
    others = [v for v in vertices if v not in (src, dst)]
    for k in range(len(others) + 1):
        for s in itertools.combinations(others, k):
            if dst not in reach(edges, src, set(s)):
                return k
    return None


def brute_isolate(vertices, edges, src, reverse=False):
    if reverse:
        edges = {(b, a) for a, b in edges}
    others = [v for v in vertices if v != src]
    for k in range(len(others) + 1):
        for s in itertools.combinations(others, k):
            if not reach(edges, src, set(s)):
                return k
    raise AssertionError("unreachable")


# -- construction ------------------------------------------------------------


def test_talker_listener_phases(talker_listener):
    bg = build_bipartite(talker_listener)
    assert len(bg.participants) == 2
    assert len(bg.topic_patterns) == 4
    cg = collapse_topics(bg, EXACT)
    assert {"rt/chatter", "rt/chatter*"} in [set(c) for c in cg.topic_components]
    hg = project_participants(cg)
    t, l = talker_listener.resolve("talker"), talker_listener.resolve("listener")
    assert hg.edges == {(t, l)}


def test_empty_database():
    g = build_bipartite(make_db({}))
    assert g.participants == [] and g.topic_patterns == []
    assert build_heuristic_graph(make_db({})).edges == set()


def test_shared_pattern_deduplicated():
    db = make_db({guid(1): simple("CN=a", pubs=["x"]), guid(2): simple("CN=b", pubs=["x"])})
    g = build_bipartite(db)
    assert g.topic_patterns == ["x"]
    assert g.publish_edges == {(guid(1), "x"), (guid(2), "x")}


def test_deny_rules_add_nothing():
    p = PermissionsFile("CN=a", (Grant("CN=a", *VALID, (
        Rule(Qualifier.DENY, DomainSet.of(0), publish=CriteriaSet(("secret",))),)),))
    g = build_bipartite(make_db({guid(1): p}))
    assert g.topic_patterns == [] and g.participants == [guid(1)]


def test_relay_is_both_directions():
    p = PermissionsFile("CN=r", (Grant("CN=r", *VALID, (
        Rule(Qualifier.ALLOW, DomainSet.of(0), relay=CriteriaSet(("bus",))),)),))
    g = build_bipartite(make_db({guid(1): p}))
    assert (guid(1), "bus") in g.publish_edges and ("bus", guid(1)) in g.subscribe_edges


def test_default_allow_adds_wildcard_vertex():
    g = build_bipartite(make_db({guid(1): simple("CN=a", default=Qualifier.ALLOW)}))
    assert g.topic_patterns == [ANY_TOPIC]


def _bip(patterns):
    return BipartiteGraph(["p"], sorted(patterns), {("p", t) for t in patterns}, set())


def test_foo_bar_component():
    cg = collapse_topics(_bip({"foo/bar/pudding", "foo/bar/*", "foo/bar/test"}), FAST)
    assert [len(c) for c in cg.topic_components] == [3]


def test_non_matching_literals_stay_apart():
    cg = collapse_topics(_bip({"a", "b", "c/d"}), EXACT)
    assert sorted(len(c) for c in cg.topic_components) == [1, 1, 1]


def test_fast_mode_misses_overlap():
    pats = {"foo/*x", "foo/a*"}
    assert len(collapse_topics(_bip(pats), FAST).topic_components) == 2
    assert len(collapse_topics(_bip(pats), EXACT).topic_components) == 1


def test_fast_mode_not_admissible():
    db = make_db({guid(1): simple("CN=a", pubs=["foo/*x"]),
                  guid(2): simple("CN=b", subs=["foo/a*"])})
    pair = grant_intersection(db.permissions(guid(1)), db.permissions(guid(2)), AT)
    assert pair is not None and pair.publisher_action.topic == "foo/ax"
    assert (guid(1), guid(2)) in build_heuristic_graph(db, EXACT).edges
    assert (guid(1), guid(2)) not in build_heuristic_graph(db, FAST).edges


def test_no_self_edges():
    db = make_db({guid(1): simple("CN=a", pubs=["t"], subs=["t"])})
    assert build_heuristic_graph(db).edges == set()
    with pytest.raises(ValueError):
        HeuristicGraph(["a"], {("a", "a")})


def test_grid_2x2_matches_adjacency():
    s = generate_grid(2, 2, seed=1)
    db = scenario_db(s)
    g = build_heuristic_graph(db)
    assert {(s.id_of_guid(u), s.id_of_guid(v)) for u, v in g.edges} == s.intended_adjacency
    assert len(g.edges) == 8


# -- queries -----------------------------------------------------------------


def test_path_to_self():
    db = make_db({guid(1): simple("CN=a", pubs=["t"])})
    g = build_heuristic_graph(db)
    res = find_path(g, EdgeOracle(db), guid(1), guid(1), AT)
    assert res.nodes == (guid(1),) and res.edge_witnesses == () and res.hops == 0


def test_path_unknown_vertex():
    db = make_db({guid(1): simple("CN=a", pubs=["t"])})
    g = build_heuristic_graph(db)
    with pytest.raises(UnknownVertex):
        find_path(g, EdgeOracle(db), guid(1), "nobody", AT)


def test_disjoint_namespaces_refuted():
    # the heuristic edge exists because the partition is not considered there
    a = simple("CN=a", pubs=["t"])
    b = PermissionsFile("CN=b", (Grant("CN=b", *VALID, (Rule(
        Qualifier.ALLOW, DomainSet.of(0), subscribe=CriteriaSet(("t",), ("other",))),)),))
    db = make_db({guid(1): a, guid(2): b})
    g = build_heuristic_graph(db)
    assert g.edges == {(guid(1), guid(2))}
    oracle = EdgeOracle(db)
    assert find_path(g, oracle, guid(1), guid(2), AT) is None
    assert oracle.cached(guid(1), guid(2), AT).state is EdgeState.REFUTED
    assert g.status(guid(1), guid(2), oracle, AT).state is EdgeState.REFUTED


def test_chain_cut():
    db = make_db({guid(1): simple("CN=a", pubs=["ab"]),
                  guid(2): simple("CN=b", subs=["ab"], pubs=["bc"]),
                  guid(3): simple("CN=c", subs=["bc"])})
    g = build_heuristic_graph(db)
    res = min_cut_between(g, EdgeOracle(db), guid(1), guid(3), AT)
    assert res.cut_nodes == {guid(2)} and res.certified and not res.no_vertex_cut


def test_direct_edge_has_no_vertex_cut():
    db = make_db({guid(1): simple("CN=a", pubs=["ab"]), guid(2): simple("CN=b", subs=["ab"])})
    g = build_heuristic_graph(db)
    res = min_cut_between(g, EdgeOracle(db), guid(1), guid(2), AT)
    assert res.no_vertex_cut and not res.certified and res.size == 0
    with pytest.raises(ValueError):
        min_cut_between(g, EdgeOracle(db), guid(1), guid(1), AT)


def _star(outward):
    centre = simple("CN=hub", pubs=["h"] if outward else [], subs=[] if outward else ["h"])
    perms = {guid(1): centre}
    for i in range(2, 5):
        perms[guid(i)] = simple(f"CN=leaf{i}", subs=["h"] if outward else [],
                                pubs=[] if outward else ["h"])
    return make_db(perms)


def test_isolate_star():
    db = _star(outward=True)
    res = isolate_source(build_heuristic_graph(db), EdgeOracle(db), guid(1), AT)
    assert res.cut_nodes == {guid(2), guid(3), guid(4)} and res.certified
    db = _star(outward=False)
    res = isolate_target(build_heuristic_graph(db), EdgeOracle(db), guid(1), AT)
    assert res.cut_nodes == {guid(2), guid(3), guid(4)}


def test_isolate_without_edges_is_empty():
    db = _star(outward=True)
    g = build_heuristic_graph(db)
    assert isolate_source(g, EdgeOracle(db), guid(2), AT).cut_nodes == frozenset()
    assert isolate_target(g, EdgeOracle(db), guid(1), AT).cut_nodes == frozenset()


def test_grid_6x6_queries():
    s = generate_grid(6, 6, seed=7)
    db = scenario_db(s)
    g = build_heuristic_graph(db)
    oracle = EdgeOracle(db)
    src, dst = s.guid_of(grid_label(5, 0)), s.guid_of(grid_label(0, 3))
    path = find_path(g, oracle, src, dst, AT)
    assert path.hops == 8
    for (u, v), w in zip(zip(path.nodes, path.nodes[1:]), path.edge_witnesses):
        assert validate_pair(w, db.permissions(u), db.permissions(v), AT)
    edge_node = s.guid_of(grid_label(5, 2))
    res = isolate_source(g, EdgeOracle(db), edge_node, AT)
    assert res.size == len(g.successors(edge_node)) == 3
    corner = s.guid_of(grid_label(0, 0))
    res = isolate_target(g, EdgeOracle(db), corner, AT)
    assert res.size == 2


def test_export_formats():
    s = generate_grid(2, 2, seed=1)
    db = scenario_db(s)
    g = build_heuristic_graph(db)
    oracle = EdgeOracle(db)
    u, v = sorted(g.edges)[0]
    oracle(u, v, AT)
    doc = to_json(g, oracle, AT)
    json.dumps(doc)
    states = {e["status"] for e in doc["edges"]}
    assert states == {"heuristic", "verified"}
    verified = [e for e in doc["edges"] if e["status"] == "verified"]
    assert verified[0]["witness"]["topic"].startswith("cell/")
    dot = to_dot(g, oracle, AT)
    assert dot.startswith("digraph") and "style=solid" in dot and "style=dashed" in dot


# -- randomized comparisons against the exhaustively verified graph -------------


def exact_edges(db):
    ids = db.ids()
    out = set()
    for u in ids:
        for v in ids:
            if u != v and brute_force_intersection(db.permissions(u), db.permissions(v), AT,
                                                   Direction.A_PUBLISHES_TO_B, max_len=1):
                out.add((u, v))
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 8), st.floats(0.05, 0.5))
def test_random_scenarios_against_brute_force(seed, n, p):
    s = generate_random(n, p, seed, decoy_probability=0.2)
    db = scenario_db(s)
    g = build_heuristic_graph(db)
    truth = exact_edges(db)
    assert truth <= g.edges
    oracle = EdgeOracle(db)
    assert build_exact_graph(db, oracle, AT) == truth
    rng = random.Random(seed)
    ids = db.ids()
    src, dst = rng.sample(ids, 2)
    path = find_path(g, EdgeOracle(db), src, dst, AT)
    assert (path is not None) == (dst in reach(truth, src))
    if path is not None:
        assert path.hops == min_hops(truth, src, dst)
    cut = min_cut_between(g, EdgeOracle(db), src, dst, AT)
    if (src, dst) in truth:
        assert cut.no_vertex_cut
    else:
        assert cut.size == brute_min_cut(ids, truth, src, dst)
        assert dst not in reach(truth, src, cut.cut_nodes)
    iso = isolate_source(g, EdgeOracle(db), src, AT)
    assert iso.size == brute_isolate(ids, truth, src)
    assert not reach(truth, src, iso.cut_nodes)
    iso = isolate_target(g, EdgeOracle(db), dst, AT)
    assert iso.size == brute_isolate(ids, truth, dst, reverse=True)


def min_hops(edges, src, dst):
    frontier, seen, d = {src}, {src}, 0
    while frontier:
        if dst in frontier:
            return d
        frontier = {b for a, b in edges if a in frontier and b not in seen}
        seen |= frontier
        d += 1
    return None

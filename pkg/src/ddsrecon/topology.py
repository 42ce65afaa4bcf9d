"""Heuristic participant graph and lazily verified reachability queries.

The graph is built in three cheap phases from the permission documents
alone: a bipartite participant/topic-expression graph, a contraction of
related expressions into components, and a projection back onto
participants.  Queries then run on that over-approximation and consult the
exact edge oracle only for the edges a candidate answer actually uses.
"""
from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime

from . import flow, patterns
from .intersection import (
    HEURISTIC,
    ActionPair,
    EdgeOracle,
    EdgeState,
    EdgeStatus,
)
from .permissions import Qualifier, format_timestamp

# Expression standing in for "anything not denied" under a default-ALLOW grant.
ANY_TOPIC = "*"


class GraphMode(enum.Enum):
    FAST_FNMATCH = "fast"
    EXACT_INTERSECTION = "exact"


class UnknownVertex(KeyError):
    pass


@dataclass
class BipartiteGraph:
    participants: list[str]
    topic_patterns: list[str]
    # participant -> pattern (publish) and pattern -> participant (subscribe)
    publish_edges: set = field(default_factory=set)
    subscribe_edges: set = field(default_factory=set)


@dataclass
class ContractedGraph:
    participants: list[str]
    topic_components: list[frozenset]
    publish_edges: set = field(default_factory=set)
    subscribe_edges: set = field(default_factory=set)


@dataclass
class HeuristicGraph:
    vertices: list[str]
    edges: set
    mode: GraphMode = GraphMode.EXACT_INTERSECTION
    _succ: dict = field(default_factory=dict, repr=False)
    _pred: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-edge on {u}")
        self._succ = {v: [] for v in self.vertices}
        self._pred = {v: [] for v in self.vertices}
        for u, v in sorted(self.edges):
            self._succ[u].append(v)
            self._pred[v].append(u)

    def require(self, v: str) -> None:
        if v not in self._succ:
            raise UnknownVertex(v)

    def successors(self, v: str) -> list[str]:
        return self._succ[v]

    def predecessors(self, v: str) -> list[str]:
        return self._pred[v]

    def status(self, u: str, v: str, oracle: EdgeOracle | None = None,
               at: datetime | None = None) -> EdgeStatus:
        if (u, v) not in self.edges:
            raise KeyError((u, v))
        if oracle is not None and at is not None:
            cached = oracle.cached(u, v, at)
            if cached is not None:
                return cached
        return HEURISTIC


@dataclass(frozen=True)
class PathResult:
    nodes: tuple[str, ...]
    edge_witnesses: tuple[ActionPair, ...]
    oracle_calls: int = 0

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1


@dataclass(frozen=True)
class CutResult:
    cut_nodes: frozenset
    certified: bool
    # a VERIFIED direct edge from source to target: no vertex set can separate them
    no_vertex_cut: bool = False
    oracle_calls: int = 0

    @property
    def size(self) -> int:
        return len(self.cut_nodes)


# --------------------------------------------------------------------------
# construction


def _capabilities(perm):
    """(publish expressions, subscribe expressions) a participant might use."""
    pubs, subs = set(), set()
    for g in perm.grants:
        if g.subject_name != perm.subject_name:
            continue
        for r in g.rules:
            if r.qualifier is not Qualifier.ALLOW:
                continue
            if r.publish is not None:
                pubs.update(r.publish.topics)
            if r.subscribe is not None:
                subs.update(r.subscribe.topics)
            if r.relay is not None:
                pubs.update(r.relay.topics)
                subs.update(r.relay.topics)
        if g.default is Qualifier.ALLOW:
            pubs.add(ANY_TOPIC)
            subs.add(ANY_TOPIC)
    return pubs, subs


def build_bipartite(db) -> BipartiteGraph:
    g = BipartiteGraph(list(db.ids()), [])
    seen = {}
    for pid in g.participants:
        pubs, subs = _capabilities(db.permissions(pid))
        for t in sorted(pubs | subs):
            if t not in seen:
                seen[t] = len(g.topic_patterns)
                g.topic_patterns.append(t)
        g.publish_edges.update((pid, t) for t in pubs)
        g.subscribe_edges.update((t, pid) for t in subs)
    g.topic_patterns.sort()
    return g


def _related(p: str, q: str, mode: GraphMode) -> bool:
    if mode is GraphMode.FAST_FNMATCH:
        return patterns.two_way_match(p, q)
    return patterns.languages_intersect(p, q)


def collapse_topics(g: BipartiteGraph,
                    mode: GraphMode = GraphMode.EXACT_INTERSECTION) -> ContractedGraph:
    parent = {p: p for p in g.topic_patterns}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    pats = g.topic_patterns
    for i, p in enumerate(pats):
        for q in pats[i + 1:]:
            if find(p) != find(q) and _related(p, q, mode):
                a, b = sorted((find(p), find(q)))
                parent[b] = a
    groups = {}
    for p in pats:
        groups.setdefault(find(p), set()).add(p)
    components = sorted((frozenset(s) for s in groups.values()), key=lambda s: min(s))
    index = {p: i for i, comp in enumerate(components) for p in comp}
    return ContractedGraph(
        list(g.participants), components,
        {(u, index[t]) for u, t in g.publish_edges},
        {(index[t], v) for t, v in g.subscribe_edges},
    )


def project_participants(g: ContractedGraph,
                         mode: GraphMode = GraphMode.EXACT_INTERSECTION) -> HeuristicGraph:
    writers, readers = {}, {}
    for u, c in g.publish_edges:
        writers.setdefault(c, set()).add(u)
    for c, v in g.subscribe_edges:
        readers.setdefault(c, set()).add(v)
    edges = set()
    for c, ws in writers.items():
        for u in ws:
            for v in readers.get(c, ()):
                if u != v:
                    edges.add((u, v))
    return HeuristicGraph(list(g.participants), edges, mode)


def build_heuristic_graph(db, mode: GraphMode = GraphMode.EXACT_INTERSECTION) -> HeuristicGraph:
    return project_participants(collapse_topics(build_bipartite(db), mode), mode)


def build_exact_graph(db, oracle: EdgeOracle, at: datetime) -> set:
    """Every verified directed edge, by asking the oracle about all ordered pairs."""
    ids = db.ids()
    return {(u, v) for u in ids for v in ids
            if u != v and oracle(u, v, at).state is EdgeState.VERIFIED}


# --------------------------------------------------------------------------
# queries


def _known_refuted(g, oracle, at):
    out = set()
    for u, v in g.edges:
        st = oracle.cached(u, v, at)
        if st is not None and st.state is EdgeState.REFUTED:
            out.add((u, v))
    return out


def _bfs_path(g: HeuristicGraph, src, dst, banned):
    parent = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v in g.successors(u):
            if v not in parent and (u, v) not in banned:
                parent[v] = u
                queue.append(v)
    if dst not in parent:
        return None
    path = [dst]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def find_path(g: HeuristicGraph, oracle: EdgeOracle, src: str, dst: str,
              at: datetime) -> PathResult | None:
    """Shortest verified path, checking only the edges of each candidate path.

    Unit edge costs make Dijkstra a breadth-first search; neighbours are
    visited in id order so ties resolve the same way every run.
    """
    g.require(src)
    g.require(dst)
    calls0 = oracle.calls
    if src == dst:
        return PathResult((src,), (), 0)
    banned = _known_refuted(g, oracle, at)
    while True:
        path = _bfs_path(g, src, dst, banned)
        if path is None:
            return None
        witnesses = []
        for u, v in zip(path, path[1:]):
            st = oracle(u, v, at)
            if st.state is EdgeState.REFUTED:
                banned.add((u, v))
                break
            witnesses.append(st.witness)
        else:
            return PathResult(tuple(path), tuple(witnesses), oracle.calls - calls0)


def _reachable(adj, start, allowed):
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj(u):
            if v not in seen and (u, v) in allowed:
                seen.add(v)
                stack.append(v)
    seen.discard(start)
    return seen


def _lazy_cut(g, oracle, at, plan):
    """Recompute the flow until every edge it uses is verified.

    ``plan(live)`` returns ``(sources, sinks, protected)`` for the current live
    edge set, or None when there is nothing to separate.
    """
    calls0 = oracle.calls
    banned = _known_refuted(g, oracle, at)
    while True:
        live = g.edges - banned
        planned = plan(live)
        if planned is None:
            return CutResult(frozenset(), True, False, oracle.calls - calls0)
        sources, sinks, protected = planned
        size, cut, used = flow.vertex_cut(live, sources, sinks, protected)
        refuted = False
        for e in sorted(used):
            if oracle(*e, at).state is EdgeState.REFUTED:
                banned.add(e)
                refuted = True
        if not refuted:
            return CutResult(frozenset(cut), True, False, oracle.calls - calls0)


def min_cut_between(g: HeuristicGraph, oracle: EdgeOracle, src: str, dst: str,
                    at: datetime) -> CutResult:
    """Fewest participants (excluding both ends) whose removal stops src reaching dst."""
    g.require(src)
    g.require(dst)
    if src == dst:
        raise ValueError("source and target must differ")
    calls0 = oracle.calls
    if (src, dst) in g.edges and oracle(src, dst, at).state is EdgeState.VERIFIED:
        return CutResult(frozenset(), False, True, oracle.calls - calls0)

    def plan(live):
        return {src}, {dst}, {src, dst}

    res = _lazy_cut(g, oracle, at, plan)
    return CutResult(res.cut_nodes, res.certified, False, oracle.calls - calls0)


def isolate_source(g: HeuristicGraph, oracle: EdgeOracle, src: str, at: datetime) -> CutResult:
    """Fewest participants to remove so that nothing else receives from ``src``."""
    g.require(src)

    def plan(live):
        reach = _reachable(g.successors, src, live)
        if not reach:
            return None
        return {src}, reach, {src}

    return _lazy_cut(g, oracle, at, plan)


def isolate_target(g: HeuristicGraph, oracle: EdgeOracle, dst: str, at: datetime) -> CutResult:
    """Fewest participants to remove so that ``dst`` receives from nobody."""
    g.require(dst)

    def plan(live):
        flipped = {(v, u) for u, v in live}
        reach = _reachable(g.predecessors, dst, flipped)
        if not reach:
            return None
        return reach, {dst}, {dst}

    return _lazy_cut(g, oracle, at, plan)


# --------------------------------------------------------------------------
# export


def _witness_json(w: ActionPair):
    a = w.publisher_action
    return {"domain_id": a.domain_id, "topic": a.topic, "partition": a.partition,
            "data_tags": sorted([list(t) for t in a.data_tags])}


def to_json(g: HeuristicGraph, oracle: EdgeOracle | None = None, at: datetime | None = None,
            labels: dict | None = None) -> dict:
    labels = labels or {}
    edges = []
    for u, v in sorted(g.edges):
        st = g.status(u, v, oracle, at)
        e = {"from": u, "to": v, "status": st.state.value}
        if st.witness is not None:
            e["witness"] = _witness_json(st.witness)
        edges.append(e)
    return {
        "mode": g.mode.value,
        "at": format_timestamp(at) if at else None,
        "vertices": [{"id": v, "label": labels.get(v, v)} for v in g.vertices],
        "edges": edges,
    }


def to_dot(g: HeuristicGraph, oracle: EdgeOracle | None = None, at: datetime | None = None,
           labels: dict | None = None) -> str:
    labels = labels or {}
    style = {EdgeState.HEURISTIC: "dashed", EdgeState.VERIFIED: "solid",
             EdgeState.REFUTED: "dotted"}
    lines = ["digraph heuristic {"]
    for v in g.vertices:
        lines.append(f'  "{v}" [label="{labels.get(v, v)}"];')
    for u, v in sorted(g.edges):
        st = g.status(u, v, oracle, at)
        lines.append(f'  "{u}" -> "{v}" [style={style[st.state]}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)

"""Unit-capacity vertex cuts by node splitting and Edmonds-Karp max flow."""
from __future__ import annotations

from collections import deque

INF = float("inf")


class FlowNetwork:
    def __init__(self):
        self.cap: dict = {}
        self.adj: dict = {}

    def add_edge(self, u, v, c):
        self.adj.setdefault(u, []).append(v)
        self.adj.setdefault(v, []).append(u)
        self.cap[(u, v)] = self.cap.get((u, v), 0) + c
        self.cap.setdefault((v, u), 0)

    def _bfs(self, s, t):
        parent = {s: None}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in self.adj.get(u, ()):
                if v not in parent and self.cap[(u, v)] > 0:
                    parent[v] = u
                    if v == t:
                        return parent
                    queue.append(v)
        return None

    def max_flow(self, s, t) -> int:
        for u in self.adj:
            self.adj[u].sort(key=repr)
        total = 0
        while True:
            parent = self._bfs(s, t)
            if parent is None:
                return total
            path = []
            v = t
            while parent[v] is not None:
                path.append((parent[v], v))
                v = parent[v]
            push = min(self.cap[e] for e in path)
            if push == INF:
                return INF
            for u, v in path:
                self.cap[(u, v)] -= push
                self.cap[(v, u)] += push
            total += push

    def source_side(self, s) -> set:
        seen = {s}
        stack = [s]
        while stack:
            u = stack.pop()
            for v in self.adj.get(u, ()):
                if v not in seen and self.cap[(u, v)] > 0:
                    seen.add(v)
                    stack.append(v)
        return seen


def _in(v):
    return ("in", v)


def _out(v):
    return ("out", v)


def vertex_cut(edges, sources, sinks, protected=None):
    """Minimum set of vertices separating ``sources`` from ``sinks``.

    ``edges`` are directed pairs.  Vertices in ``protected`` (default: all
    sources and sinks) cannot be cut.  Returns ``(size, cut, flow_edges)`` where
    ``flow_edges`` are the original edges carrying flow.  ``size`` is INF when
    no vertex cut exists, e.g. a protected source with a direct edge into a
    protected sink.
    """
    sources, sinks = set(sources), set(sinks)
    protected = sources | sinks if protected is None else set(protected)
    net = FlowNetwork()
    vertices = {x for e in edges for x in e} | sources | sinks
    for v in sorted(vertices, key=repr):
        c = INF if v in protected else 1
        net.add_edge(_in(v), _out(v), c)
    for u, v in sorted(edges, key=repr):
        net.add_edge(_out(u), _in(v), INF)
    s, t = ("super", "source"), ("super", "sink")
    for v in sorted(sources, key=repr):
        net.add_edge(s, _in(v), INF)
    for v in sorted(sinks, key=repr):
        net.add_edge(_out(v), t, INF)
    size = net.max_flow(s, t)
    if size == INF:
        return INF, set(), set()
    side = net.source_side(s)
    cut = {v for v in vertices if _in(v) in side and _out(v) not in side}
    used = set()
    for u, v in edges:
        # residual on the reverse arc is positive exactly when flow was pushed
        if net.cap[(_in(v), _out(u))] > 0:
            used.add((u, v))
    return size, cut, used

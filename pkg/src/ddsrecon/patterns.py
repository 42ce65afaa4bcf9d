"""Glob patterns as deterministic automata.

Patterns follow plain POSIX ``fnmatch`` with default flags: ``*`` crosses
``/``, ``?`` is any single character, bracket expressions take ranges and
``!``/``^`` negation, and backslash escapes the next character.  Characters
are compared by code point, which coincides with byte order for ASCII.

Automata run over a symbolic alphabet: each automaton carries a sorted list
of boundaries that partition ``[0, MAX_CODEPOINT]`` into intervals, and every
transition is keyed by interval index.  Products refine both partitions, so
complement and difference never enumerate individual characters.
"""
from __future__ import annotations

import bisect
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

MAX_CODEPOINT = 0x10FFFF

# Dialect switch, kept as a constant so differential experiments can flip it.
# '*' always crosses '/' (no FNM_PATHNAME) and leading dots are not special.
FNM_NOESCAPE = False


class PatternSyntaxError(ValueError):
    def __init__(self, message: str, pattern: str, offset: int):
        super().__init__(f"{message} at offset {offset} in {pattern!r}")
        self.pattern = pattern
        self.offset = offset


# Token kinds
_LIT, _ANY, _STAR, _SET = range(4)


@dataclass(frozen=True)
class _Token:
    kind: int
    # For _LIT and _SET: sorted disjoint inclusive intervals of accepted code points.
    ranges: tuple[tuple[int, int], ...] = ()

    def accepts(self, c: int) -> bool:
        if self.kind == _ANY:
            return True
        for lo, hi in self.ranges:
            if lo <= c <= hi:
                return True
        return False


def _normalize(ranges):
    out = []
    for lo, hi in sorted(ranges):
        if out and lo <= out[-1][1] + 1:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return tuple(out)


def _negate(ranges):
    out = []
    nxt = 0
    for lo, hi in ranges:
        if lo > nxt:
            out.append((nxt, lo - 1))
        nxt = hi + 1
    if nxt <= MAX_CODEPOINT:
        out.append((nxt, MAX_CODEPOINT))
    return tuple(out)


def _parse_bracket(src: str, start: int) -> tuple[_Token, int]:
    """Parse a bracket expression whose ``[`` sits at ``start``.

    Returns the token and the index just past the closing ``]``.
    """
    i = start + 1
    n = len(src)
    negated = False
    if i < n and src[i] in "!^":
        negated = True
        i += 1
    ranges = []
    first = True
    while True:
        if i >= n:
            raise PatternSyntaxError("unterminated bracket expression", src, start)
        c = src[i]
        if c == "]" and not first:
            i += 1
            break
        first = False
        if c == "\\" and not FNM_NOESCAPE:
            i += 1
            if i >= n:
                raise PatternSyntaxError("dangling escape", src, i - 1)
            c = src[i]
        lo = ord(c)
        i += 1
        # range a-z; a trailing '-' before ']' is literal
        if i + 1 < n and src[i] == "-" and src[i + 1] != "]":
            i += 1
            hc = src[i]
            if hc == "\\" and not FNM_NOESCAPE:
                i += 1
                if i >= n:
                    raise PatternSyntaxError("dangling escape", src, i - 1)
                hc = src[i]
            hi = ord(hc)
            i += 1
            if hi < lo:
                raise PatternSyntaxError("reversed range", src, i - 3)
            ranges.append((lo, hi))
        else:
            ranges.append((lo, lo))
    ranges = _normalize(ranges)
    if negated:
        ranges = _negate(ranges)
    return _Token(_SET, ranges), i


@lru_cache(maxsize=4096)
def _tokenize(src: str) -> tuple[_Token, ...]:
    if not isinstance(src, str):
        raise TypeError("pattern must be str")
    if src == "":
        raise PatternSyntaxError("empty pattern", src, 0)
    tokens = []
    i = 0
    n = len(src)
    while i < n:
        c = src[i]
        if c == "*":
            # runs of '*' are equivalent to one
            if not tokens or tokens[-1].kind != _STAR:
                tokens.append(_Token(_STAR))
            i += 1
        elif c == "?":
            tokens.append(_Token(_ANY))
            i += 1
        elif c == "[":
            tok, i = _parse_bracket(src, i)
            tokens.append(tok)
        elif c == "\\" and not FNM_NOESCAPE:
            if i + 1 >= n:
                raise PatternSyntaxError("dangling escape", src, i)
            tokens.append(_Token(_LIT, ((ord(src[i + 1]),) * 2,)))
            i += 2
        else:
            tokens.append(_Token(_LIT, ((ord(c),) * 2,)))
            i += 1
    return tuple(tokens)


class GlobPattern:
    """A validated glob expression."""

    __slots__ = ("source", "_tokens")

    def __init__(self, source: str):
        self._tokens = _tokenize(source)
        self.source = source

    def __repr__(self):
        return f"GlobPattern({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, GlobPattern) and other.source == self.source

    def __hash__(self):
        return hash(("GlobPattern", self.source))

    @property
    def is_literal(self) -> bool:
        """True when the pattern matches exactly one string."""
        return all(t.kind == _LIT for t in self._tokens)

    def literal_text(self) -> str:
        if not self.is_literal:
            raise ValueError(f"{self.source!r} is not a literal pattern")
        return "".join(chr(t.ranges[0][0]) for t in self._tokens)


def _as_pattern(p) -> GlobPattern:
    return p if isinstance(p, GlobPattern) else GlobPattern(p)


def validate(source: str) -> None:
    """Raise PatternSyntaxError if ``source`` is not a well-formed glob."""
    _tokenize(source)


def fnmatch(pattern, text: str) -> bool:
    """Match ``text`` against ``pattern`` by direct backtracking."""
    tokens = _as_pattern(pattern)._tokens
    codes = [ord(ch) for ch in text]
    ti = si = 0
    star_ti = -1
    star_si = 0
    nt, ns = len(tokens), len(codes)
    while si < ns:
        if ti < nt and tokens[ti].kind == _STAR:
            star_ti = ti
            star_si = si
            ti += 1
        elif ti < nt and tokens[ti].accepts(codes[si]):
            ti += 1
            si += 1
        elif star_ti >= 0:
            star_si += 1
            si = star_si
            ti = star_ti + 1
        else:
            return False
    while ti < nt and tokens[ti].kind == _STAR:
        ti += 1
    return ti == nt


def two_way_match(p, q) -> bool:
    """The cheap symmetric relation: either pattern matches the other's text."""
    p, q = _as_pattern(p), _as_pattern(q)
    return fnmatch(p, q.source) or fnmatch(q, p.source)


class PatternAutomaton:
    """Complete DFA over interval classes of code points.

    ``bounds`` holds the sorted lower bounds of the classes (``bounds[0] == 0``);
    class ``k`` spans ``[bounds[k], bounds[k+1] - 1]``.  ``delta[q][k]`` is the
    successor of state ``q`` on any character of class ``k``.
    """

    __slots__ = ("bounds", "delta", "start", "accepting")

    def __init__(self, bounds, delta, start, accepting):
        self.bounds = tuple(bounds)
        self.delta = tuple(tuple(row) for row in delta)
        self.start = start
        self.accepting = frozenset(accepting)

    @property
    def states(self) -> range:
        return range(len(self.delta))

    @property
    def complete(self) -> bool:
        width = len(self.bounds)
        return all(len(row) == width for row in self.delta)

    def class_of(self, c: int) -> int:
        return bisect.bisect_right(self.bounds, c) - 1

    def class_range(self, k: int) -> tuple[int, int]:
        hi = self.bounds[k + 1] - 1 if k + 1 < len(self.bounds) else MAX_CODEPOINT
        return self.bounds[k], hi

    def step(self, q: int, ch: str) -> int:
        return self.delta[q][self.class_of(ord(ch))]

    def accepts(self, text: str) -> bool:
        q = self.start
        for ch in text:
            q = self.step(q, ch)
        return q in self.accepting

    def is_empty(self) -> bool:
        return self.witness() is None

    def _distances(self):
        # Reverse BFS: shortest distance from each state to acceptance.
        preds = [set() for _ in self.delta]
        for q, row in enumerate(self.delta):
            for r in row:
                preds[r].add(q)
        dist = {q: 0 for q in self.accepting}
        queue = deque(sorted(self.accepting))
        while queue:
            r = queue.popleft()
            for q in sorted(preds[r]):
                if q not in dist:
                    dist[q] = dist[r] + 1
                    queue.append(q)
        return dist

    def witness(self) -> str | None:
        """Shortest accepted string; ties go to the smallest code points."""
        dist = self._distances()
        q = self.start
        if q not in dist:
            return None
        out = []
        while dist[q] > 0:
            want = dist[q] - 1
            # classes are sorted by lower bound, so the first hit is the smallest char
            for k, r in enumerate(self.delta[q]):
                if dist.get(r) == want:
                    out.append(chr(self.bounds[k]))
                    q = r
                    break
        return "".join(out)

    def complement(self) -> "PatternAutomaton":
        acc = set(self.states) - self.accepting
        return PatternAutomaton(self.bounds, self.delta, self.start, acc)

    def minimize(self) -> "PatternAutomaton":
        """Equivalent automaton with unreachable states dropped and equivalent states merged."""
        reach = {self.start}
        stack = [self.start]
        while stack:
            q = stack.pop()
            for r in self.delta[q]:
                if r not in reach:
                    reach.add(r)
                    stack.append(r)
        live = sorted(reach)
        block = {q: int(q in self.accepting) for q in live}
        while True:
            sig = {q: (block[q],) + tuple(block[r] for r in self.delta[q]) for q in live}
            ids = {}
            new = {}
            for q in live:
                new[q] = ids.setdefault(sig[q], len(ids))
            if len(ids) == len(set(block.values())):
                block = new
                break
            block = new
        # renumber in BFS order from the start for stable output
        order = {block[self.start]: 0}
        queue = deque([self.start])
        seen = {self.start}
        rep = {0: self.start}
        while queue:
            q = queue.popleft()
            for r in self.delta[q]:
                b = block[r]
                if b not in order:
                    order[b] = len(order)
                    rep[order[b]] = r
                if r not in seen:
                    seen.add(r)
                    queue.append(r)
        delta = [[order[block[r]] for r in self.delta[rep[i]]] for i in range(len(order))]
        accepting = {i for i in range(len(order)) if rep[i] in self.accepting}
        # merge adjacent classes that every state treats identically
        bounds = list(self.bounds)
        keep = [0] + [k for k in range(1, len(bounds))
                      if any(row[k] != row[k - 1] for row in delta)]
        bounds = [bounds[k] for k in keep]
        delta = [[row[k] for k in keep] for row in delta]
        return PatternAutomaton(bounds, delta, 0, accepting)

    def __repr__(self):
        return (f"PatternAutomaton(states={len(self.delta)}, classes={len(self.bounds)}, "
                f"accepting={len(self.accepting)})")


def _bounds_for(ranges_list) -> list[int]:
    cuts = {0}
    for ranges in ranges_list:
        for lo, hi in ranges:
            cuts.add(lo)
            if hi + 1 <= MAX_CODEPOINT:
                cuts.add(hi + 1)
    return sorted(cuts)


def _determinize(tokens) -> PatternAutomaton:
    n = len(tokens)
    bounds = _bounds_for(t.ranges for t in tokens if t.kind in (_LIT, _SET))

    def closure(positions):
        out = set(positions)
        stack = list(positions)
        while stack:
            i = stack.pop()
            if i < n and tokens[i].kind == _STAR and i + 1 not in out:
                out.add(i + 1)
                stack.append(i + 1)
        return frozenset(out)

    start = closure({0})
    index = {start: 0}
    order = [start]
    delta = []
    k = 0
    while k < len(order):
        current = order[k]
        row = []
        for b in bounds:
            nxt = set()
            for i in current:
                if i >= n:
                    continue
                tok = tokens[i]
                if tok.kind == _STAR:
                    nxt.add(i)
                elif tok.accepts(b):
                    nxt.add(i + 1)
            target = closure(nxt)
            if target not in index:
                index[target] = len(order)
                order.append(target)
            row.append(index[target])
        delta.append(row)
        k += 1
    accepting = {index[s] for s in order if n in s}
    return PatternAutomaton(bounds, delta, 0, accepting)


@lru_cache(maxsize=4096)
def _compile_cached(source: str) -> PatternAutomaton:
    return _determinize(_tokenize(source)).minimize()


def compile(pattern) -> PatternAutomaton:
    """Compile a glob into a complete DFA accepting exactly its language."""
    return _compile_cached(_as_pattern(pattern).source)


def literal(text: str) -> PatternAutomaton:
    """Automaton for the single string ``text`` (which may be empty)."""
    codes = [ord(c) for c in text]
    bounds = _bounds_for(((c, c),) for c in codes)
    n = len(codes)
    sink = n + 1
    delta = []
    for i in range(n):
        row = [sink] * len(bounds)
        row[bisect.bisect_right(bounds, codes[i]) - 1] = i + 1
        delta.append(row)
    delta.append([sink] * len(bounds))
    delta.append([sink] * len(bounds))
    return PatternAutomaton(bounds, delta, 0, {n})


def universal() -> PatternAutomaton:
    return PatternAutomaton([0], [[0]], 0, {0})


def empty() -> PatternAutomaton:
    return PatternAutomaton([0], [[0]], 0, ())


def _product(a: PatternAutomaton, b: PatternAutomaton, keep) -> PatternAutomaton:
    bounds = sorted(set(a.bounds) | set(b.bounds))
    amap = [a.class_of(x) for x in bounds]
    bmap = [b.class_of(x) for x in bounds]
    start = (a.start, b.start)
    index = {start: 0}
    order = [start]
    delta = []
    k = 0
    while k < len(order):
        qa, qb = order[k]
        ra, rb = a.delta[qa], b.delta[qb]
        row = []
        for j in range(len(bounds)):
            target = (ra[amap[j]], rb[bmap[j]])
            if target not in index:
                index[target] = len(order)
                order.append(target)
            row.append(index[target])
        delta.append(row)
        k += 1
    accepting = {i for i, (qa, qb) in enumerate(order)
                 if keep(qa in a.accepting, qb in b.accepting)}
    return PatternAutomaton(bounds, delta, 0, accepting)


def _automaton(x) -> PatternAutomaton:
    return x if isinstance(x, PatternAutomaton) else compile(x)


def intersect(a, b) -> PatternAutomaton:
    return _product(_automaton(a), _automaton(b), lambda x, y: x and y).minimize()


def union(a, b) -> PatternAutomaton:
    return _product(_automaton(a), _automaton(b), lambda x, y: x or y).minimize()


def difference(a, b) -> PatternAutomaton:
    # every automaton built here is complete, so complementing b is just flipping acceptance
    return _product(_automaton(a), _automaton(b), lambda x, y: x and not y).minimize()


def witness(a) -> str | None:
    return _automaton(a).witness()


def languages_intersect(p, q) -> bool:
    return not intersect(p, q).is_empty()

"""Exact grant-intersection decisions and the cached edge oracle.

Two participants can exchange data when some publish action allowed by one
document matches some subscribe action allowed by the other.  The search
works over boxes ``topic language x partition language`` built with the glob
algebra, proposes the shortest witness of a box, and lets ``evaluate``
confirm it.  When a preceding DENY rule shadows the witness, the box is split
into the two disjoint pieces that avoid that rule's rectangle:

    (T - T_j) x P      and      (T & T_j) x (P - P_j)

Each split removes the rule that caused it from every descendant box, so the
loop ends after at most ``2 ** (rules before the pair)`` boxes, and nothing
allowed is ever removed.
"""
from __future__ import annotations

import enum
import itertools
import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from functools import lru_cache

from . import patterns
from .patterns import PatternAutomaton
from .pdp import evaluate, match_actions
from .permissions import (
    ActionRequest,
    CriteriaSet,
    Grant,
    PermissionsFile,
    Qualifier,
    Verb,
)


class Direction(enum.Enum):
    A_PUBLISHES_TO_B = "a->b"
    B_PUBLISHES_TO_A = "b->a"


@dataclass(frozen=True)
class ActionPair:
    publisher_action: ActionRequest
    subscriber_action: ActionRequest


class EdgeState(enum.Enum):
    HEURISTIC = "heuristic"
    VERIFIED = "verified"
    REFUTED = "refuted"


@dataclass(frozen=True)
class EdgeStatus:
    state: EdgeState
    witness: ActionPair | None = None

    def __post_init__(self):
        if (self.state is EdgeState.VERIFIED) != (self.witness is not None):
            raise ValueError("exactly the VERIFIED status carries a witness")

    @classmethod
    def verified(cls, witness: ActionPair) -> "EdgeStatus":
        return cls(EdgeState.VERIFIED, witness)


HEURISTIC = EdgeStatus(EdgeState.HEURISTIC)
REFUTED = EdgeStatus(EdgeState.REFUTED)


@dataclass
class SearchStats:
    pairs: int = 0
    evaluations: int = 0
    refinements: int = 0
    max_depth: int = 0


@lru_cache(maxsize=8192)
def _union_of(exprs: tuple[str, ...]) -> PatternAutomaton:
    aut = patterns.compile(exprs[0])
    for e in exprs[1:]:
        aut = patterns.union(aut, e)
    return aut


def topic_language(c: CriteriaSet) -> PatternAutomaton:
    return _union_of(tuple(c.topics))


def partition_language(c: CriteriaSet) -> PatternAutomaton:
    if not c.partitions:
        return patterns.literal("")
    return _union_of(tuple(c.partitions))


@dataclass(frozen=True)
class _Entry:
    # rule index, or None for the grant default
    index: int | None
    qualifier: Qualifier
    criteria: CriteriaSet | None
    rule_domains: object = None

    def covers_domain(self, d: int) -> bool:
        return self.rule_domains is None or d in self.rule_domains

    @property
    def tags(self) -> frozenset:
        return frozenset(self.criteria.data_tags) if self.criteria else frozenset()

    def languages(self):
        if self.criteria is None:
            return patterns.universal(), patterns.universal()
        return topic_language(self.criteria), partition_language(self.criteria)


def _entries(grant: Grant, verb: Verb) -> list[_Entry]:
    out = []
    for i, r in enumerate(grant.rules):
        c = r.criteria(verb)
        if c is not None:
            out.append(_Entry(i, r.qualifier, c, r.domains))
    out.append(_Entry(None, grant.default, None))
    return out


def _domain_representatives(*grants: Grant) -> list[int]:
    """One domain id per class of ids that no rule domain set can tell apart."""
    cuts = {0}
    for g in grants:
        for r in g.rules:
            for lo, hi in r.domains.ranges:
                cuts.add(lo)
                cuts.add(hi + 1)
    return sorted(cuts)


def _roles(permA, permB, direction):
    if direction is Direction.A_PUBLISHES_TO_B:
        return permA, permB
    return permB, permA


def _refine(pub, sub, gpub, gsub, d, tags, box, at, stats) -> ActionPair | None:
    queue = deque([(box[0], box[1], 0)])
    while queue:
        topics, parts, depth = queue.popleft()
        stats.max_depth = max(stats.max_depth, depth)
        t = topics.witness()
        p = parts.witness()
        if t is None or p is None:
            continue
        pa = ActionRequest(pub.subject_name, d, Verb.PUBLISH, t, p, tags)
        sa = ActionRequest(sub.subject_name, d, Verb.SUBSCRIBE, t, p, tags)
        qa, tra = evaluate(pub, pa, at)
        qb, trb = evaluate(sub, sa, at)
        stats.evaluations += 2
        if qa is Qualifier.ALLOW and qb is Qualifier.ALLOW:
            return ActionPair(pa, sa)
        grant, trace, verb = (gpub, tra, Verb.PUBLISH) if qa is not Qualifier.ALLOW \
            else (gsub, trb, Verb.SUBSCRIBE)
        if trace.matched_rule_index is None:
            raise AssertionError("witness inside an allow rule fell through to a DENY default")
        shadow = grant.rules[trace.matched_rule_index].criteria(verb)
        t_j, p_j = topic_language(shadow), partition_language(shadow)
        stats.refinements += 1
        queue.append((patterns.difference(topics, t_j), parts, depth + 1))
        queue.append((patterns.intersect(topics, t_j), patterns.difference(parts, p_j), depth + 1))
    return None


def grant_intersection(permA: PermissionsFile, permB: PermissionsFile, at: datetime,
                       direction: Direction = Direction.A_PUBLISHES_TO_B,
                       stats: SearchStats | None = None) -> ActionPair | None:
    """A publish/subscribe action pair both documents ALLOW, or None if none exists."""
    stats = stats if stats is not None else SearchStats()
    pub, sub = _roles(permA, permB, direction)
    sel_p = pub.first_grant(pub.subject_name, at)
    sel_s = sub.first_grant(sub.subject_name, at)
    if sel_p is None or sel_s is None:
        return None
    gpub, gsub = sel_p[1], sel_s[1]
    pub_entries = [e for e in _entries(gpub, Verb.PUBLISH) if e.qualifier is Qualifier.ALLOW]
    sub_entries = [e for e in _entries(gsub, Verb.SUBSCRIBE) if e.qualifier is Qualifier.ALLOW]
    for d in _domain_representatives(gpub, gsub):
        for ep in pub_entries:
            if not ep.covers_domain(d):
                continue
            for es in sub_entries:
                if not es.covers_domain(d):
                    continue
                # extra tags only activate more rules, so the union of the
                # pair's required tags is the most permissive choice
                tags = ep.tags | es.tags
                tp, pp = ep.languages()
                ts, ps = es.languages()
                stats.pairs += 1
                box = (patterns.intersect(tp, ts), patterns.intersect(pp, ps))
                found = _refine(pub, sub, gpub, gsub, d, tags, box, at, stats)
                if found is not None:
                    return found
    return None


# --------------------------------------------------------------------------
# brute-force oracle

MAX_BRUTE_ALPHABET = 4
MAX_BRUTE_LENGTH = 6


def _strings(alphabet: str, max_len: int):
    yield ""
    for n in range(1, max_len + 1):
        for chars in itertools.product(alphabet, repeat=n):
            yield "".join(chars)


def _expressions(perm: PermissionsFile):
    topics, parts = set(), set()
    for g in perm.grants:
        for r in g.rules:
            for verb in Verb:
                c = r.criteria(verb)
                if c is not None:
                    topics.update(c.topics)
                    parts.update(c.partitions)
    return topics, parts


@lru_cache(maxsize=200_000)
def _fnm(expr: str, text: str) -> bool:
    return patterns.fnmatch(expr, text)


def _representatives(strings, exprs, extra=None):
    """First string of each class of strings that every expression treats alike."""
    exprs = sorted(exprs)
    seen = {}
    for s in strings:
        sig = tuple(_fnm(e, s) for e in exprs)
        if extra is not None:
            sig += (extra(s),)
        seen.setdefault(sig, s)
    return list(seen.values())


def brute_force_intersection(permA: PermissionsFile, permB: PermissionsFile, at: datetime,
                             direction: Direction, alphabet: str = "ab/x",
                             max_len: int = 4) -> ActionPair | None:
    """Exhaustive search over short strings; the independent check on grant_intersection.

    Strings are grouped by how every expression in both documents matches
    them, and one representative per group is evaluated: ``evaluate`` cannot
    tell members of a group apart.  The expression texts themselves are added
    as candidate strings so long literal names are reachable.  Domain ids run from 0 to one past the
    largest id mentioned and tag sets over every subset of declared tags.
    """
    if len(alphabet) > MAX_BRUTE_ALPHABET or max_len > MAX_BRUTE_LENGTH:
        raise ValueError(f"brute force limited to {MAX_BRUTE_ALPHABET} symbols "
                         f"and length {MAX_BRUTE_LENGTH}")
    pub, sub = _roles(permA, permB, direction)
    ta, pa_ = _expressions(pub)
    tb, pb = _expressions(sub)
    strings = list(_strings(alphabet, max_len))
    topics = _representatives(strings + sorted(ta | tb), ta | tb)
    partitions = _representatives(strings + sorted(pa_ | pb), pa_ | pb,
                                  extra=lambda s: s == "")
    top = 0
    for perm in (pub, sub):
        for g in perm.grants:
            for r in g.rules:
                for _, hi in r.domains.ranges:
                    top = max(top, hi)
    tag_universe = sorted(pub.declared_tags() | sub.declared_tags())
    tag_sets = [frozenset(c) for n in range(len(tag_universe) + 1)
                for c in itertools.combinations(tag_universe, n)]
    for d in range(top + 2):
        for tags in tag_sets:
            for t in topics:
                for p in partitions:
                    a = ActionRequest(pub.subject_name, d, Verb.PUBLISH, t, p, tags)
                    if evaluate(pub, a, at)[0] is not Qualifier.ALLOW:
                        continue
                    b = ActionRequest(sub.subject_name, d, Verb.SUBSCRIBE, t, p, tags)
                    if evaluate(sub, b, at)[0] is Qualifier.ALLOW and match_actions(a, b):
                        return ActionPair(a, b)
    return None


def validate_pair(pair: ActionPair, pub: PermissionsFile, sub: PermissionsFile,
                  at: datetime) -> bool:
    """Re-check a witness with the PDP alone."""
    return (match_actions(pair.publisher_action, pair.subscriber_action)
            and pair.publisher_action.verb is Verb.PUBLISH
            and pair.publisher_action.subject_name == pub.subject_name
            and pair.subscriber_action.subject_name == sub.subject_name
            and evaluate(pub, pair.publisher_action, at)[0] is Qualifier.ALLOW
            and evaluate(sub, pair.subscriber_action, at)[0] is Qualifier.ALLOW)


# --------------------------------------------------------------------------
# cached oracle over a participant database


@dataclass
class EdgeOracle:
    """Directed reachability oracle with a memo keyed by (from, to, at).

    ``calls`` counts solver invocations; cache hits do not increment it.
    Inserts are idempotent, so concurrent workers may race on the same key.
    """

    db: object
    calls: int = 0
    lookups: int = 0
    _cache: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def __call__(self, src: str, dst: str, at: datetime) -> EdgeStatus:
        key = (src, dst, at)
        with self._lock:
            self.lookups += 1
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        perm_src = self.db.permissions(src)
        perm_dst = self.db.permissions(dst)
        pair = grant_intersection(perm_src, perm_dst, at, Direction.A_PUBLISHES_TO_B)
        status = EdgeStatus.verified(pair) if pair is not None else REFUTED
        with self._lock:
            self.calls += 1
            return self._cache.setdefault(key, status)

    def cached(self, src: str, dst: str, at: datetime) -> EdgeStatus | None:
        return self._cache.get((src, dst, at))


def edge_oracle(oracle: EdgeOracle, src: str, dst: str, at: datetime) -> EdgeStatus:
    return oracle(src, dst, at)

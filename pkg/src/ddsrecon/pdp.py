"""Policy decision point for DDS permission documents.

``evaluate`` is the default access-control logic: the first grant naming the
subject and valid at the evaluation time decides; its rules are scanned in
document order and the first rule whose domain set and criteria match
returns its qualifier, otherwise the grant default applies.  Two emulated
vendor defects are available as variants for differential testing.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from datetime import datetime

from . import patterns
from .patterns import PatternSyntaxError
from .permissions import (
    DEFAULT_PARTITION,
    ActionRequest,
    CriteriaSet,
    PermissionsFile,
    Qualifier,
    Verb,
)


class PdpVariant(enum.Enum):
    COMPLIANT = "compliant"
    # fnmatch(action_literal, rule_expression) instead of the reverse
    SWAPPED_FNMATCH_ARGS = "swapped-fnmatch-args"
    # remote partition permissions never checked
    SKIP_PARTITION_CHECK = "skip-partition-check"


@dataclass(frozen=True)
class EvaluationTrace:
    matched_grant_index: int | None
    matched_rule_index: int | None
    matched_criterion_kind: str | None
    outcome: Qualifier


def _lenient_fnmatch(pattern: str, text: str) -> bool:
    # An action literal used as a pattern may be empty or malformed; plain
    # string comparison is what a C fnmatch falls back to in those cases.
    try:
        return patterns.fnmatch(pattern, text)
    except PatternSyntaxError:
        return pattern == text


def _expr_matches(expr: str, literal: str, variant: PdpVariant, exact: bool) -> bool:
    if exact:
        return expr == literal
    if variant is PdpVariant.SWAPPED_FNMATCH_ARGS:
        return _lenient_fnmatch(literal, expr)
    return patterns.fnmatch(expr, literal)


def topics_match(c: CriteriaSet, action: ActionRequest, variant=PdpVariant.COMPLIANT,
                 exact=False) -> bool:
    return any(_expr_matches(t, action.topic, variant, exact) for t in c.topics)


def partitions_match(c: CriteriaSet, action: ActionRequest, variant=PdpVariant.COMPLIANT,
                     exact=False) -> bool:
    if variant is PdpVariant.SKIP_PARTITION_CHECK:
        return True
    if not c.partitions:
        return action.partition == DEFAULT_PARTITION
    return any(_expr_matches(p, action.partition, variant, exact) for p in c.partitions)


def tags_match(c: CriteriaSet, action: ActionRequest) -> bool:
    return set(c.data_tags) <= set(action.data_tags)


def check_criteria(c: CriteriaSet, action: ActionRequest, variant=PdpVariant.COMPLIANT,
                   exact=False) -> bool:
    return (topics_match(c, action, variant, exact)
            and partitions_match(c, action, variant, exact)
            and tags_match(c, action))


def _constraining_kind(c: CriteriaSet) -> str:
    if c.data_tags:
        return "tags"
    if c.partitions:
        return "partitions"
    return "topics"


# Whether rules of later applicable grants are consulted when the first
# applicable grant has no matching rule.  Off: the first grant's default decides.
SCAN_LATER_GRANTS = False


def evaluate(perm: PermissionsFile, action: ActionRequest, at: datetime,
             variant: PdpVariant = PdpVariant.COMPLIANT,
             scan_later_grants: bool | None = None) -> tuple[Qualifier, EvaluationTrace]:
    """Decide ``action`` against ``perm`` at time ``at``.

    Obfuscated documents are matched by exact string equality; the caller is
    expected to digest the action with the same key first.  With
    ``scan_later_grants`` the rules of every applicable grant are tried in
    order before falling back to the first applicable grant's default.
    """
    if scan_later_grants is None:
        scan_later_grants = SCAN_LATER_GRANTS
    exact = perm.obfuscated
    fallback = None
    for gi, grant in enumerate(perm.grants):
        if grant.subject_name != action.subject_name or not grant.valid_at(at):
            continue
        for ri, rule in enumerate(grant.rules):
            if action.domain_id not in rule.domains:
                continue
            c = rule.criteria(action.verb)
            if c is None:
                continue
            if check_criteria(c, action, variant, exact):
                return rule.qualifier, EvaluationTrace(gi, ri, _constraining_kind(c),
                                                       rule.qualifier)
        if fallback is None:
            fallback = (grant.default, EvaluationTrace(gi, None, None, grant.default))
        if not scan_later_grants:
            break
    if fallback is not None:
        return fallback
    return Qualifier.ERROR, EvaluationTrace(None, None, None, Qualifier.ERROR)


def match_actions(a: ActionRequest, b: ActionRequest) -> bool:
    """True iff one side publishes, the other subscribes, and the QoS fields agree."""
    verbs = {a.verb, b.verb}
    if verbs != {Verb.PUBLISH, Verb.SUBSCRIBE}:
        return False
    return (a.topic == b.topic and a.partition == b.partition
            and frozenset(a.data_tags) == frozenset(b.data_tags))


# --------------------------------------------------------------------------
# differential search


@dataclass(frozen=True)
class DifferentialWitness:
    action: ActionRequest
    at: datetime
    compliant: Qualifier
    variant_outcome: Qualifier


_PROBES = ("*", "?", "[*]", "*/*")


def _literal_probes(exprs):
    out = []
    for e in exprs:
        out.append(e)
        try:
            w = patterns.witness(e)
        except PatternSyntaxError:
            w = None
        if w is not None:
            out.append(w)
    out.extend(_PROBES)
    return out


def _candidates(perm: PermissionsFile):
    """Deterministic stream of (action, at) probes built from the file itself."""
    times = []
    for g in perm.grants:
        if g.subject_name == perm.subject_name and g.not_before not in times:
            times.append(g.not_before)
    topics, partitions, tag_sets, domains = [], [DEFAULT_PARTITION], [frozenset()], []
    for g in perm.grants:
        for r in g.rules:
            for lo, _ in r.domains.ranges:
                if lo not in domains:
                    domains.append(lo)
            for verb in Verb:
                c = r.criteria(verb)
                if c is None:
                    continue
                topics.extend(c.topics)
                partitions.extend(c.partitions)
                if c.data_tags and frozenset(c.data_tags) not in tag_sets:
                    tag_sets.append(frozenset(c.data_tags))
    domains = domains or [0]
    topics = list(dict.fromkeys(_literal_probes(topics)))
    partitions = list(dict.fromkeys([DEFAULT_PARTITION] + _literal_probes(partitions[1:])))
    for at, domain, verb, topic, partition, tags in itertools.product(
            times, domains, Verb, topics, partitions, tag_sets):
        yield ActionRequest(perm.subject_name, domain, verb, topic, partition, tags), at


def find_divergences(perm: PermissionsFile, variant_a: PdpVariant, variant_b: PdpVariant,
                     search_budget: int):
    """All probes (within budget) on which the two variants disagree."""
    found = []
    for n, (action, at) in enumerate(_candidates(perm)):
        if n >= search_budget:
            break
        qa, _ = evaluate(perm, action, at, variant_a)
        qb, _ = evaluate(perm, action, at, variant_b)
        if qa is not qb:
            found.append(DifferentialWitness(action, at, qa, qb))
    return found


def differential_witness(perm: PermissionsFile, variant: PdpVariant,
                         search_budget: int = 10_000) -> DifferentialWitness | None:
    """First probe where ``variant`` disagrees with the compliant PDP, if any."""
    if variant is PdpVariant.COMPLIANT:
        raise ValueError("differential_witness needs a non-compliant variant")
    for n, (action, at) in enumerate(_candidates(perm)):
        if n >= search_budget:
            break
        qc, _ = evaluate(perm, action, at, PdpVariant.COMPLIANT)
        qv, _ = evaluate(perm, action, at, variant)
        if qc is not qv:
            return DifferentialWitness(action, at, qc, qv)
    return None

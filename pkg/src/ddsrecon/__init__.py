"""Topology reconnaissance and permission-intersection analysis for Secure DDS."""
from .intersection import (
    ActionPair,
    Direction,
    EdgeOracle,
    EdgeState,
    EdgeStatus,
    brute_force_intersection,
    edge_oracle,
    grant_intersection,
)
from .patterns import GlobPattern, PatternAutomaton, PatternSyntaxError
from .pdp import PdpVariant, differential_witness, evaluate, match_actions
from .permissions import (
    ActionRequest,
    CriteriaSet,
    DomainSet,
    Grant,
    PermissionsFile,
    Qualifier,
    Rule,
    Verb,
    obfuscate_permissions,
    parse_permissions,
    serialize_permissions,
)

__all__ = [
    "ActionPair", "ActionRequest", "CriteriaSet", "Direction", "DomainSet", "EdgeOracle",
    "EdgeState", "EdgeStatus", "GlobPattern", "Grant", "PatternAutomaton", "PatternSyntaxError",
    "PdpVariant", "PermissionsFile", "Qualifier", "Rule", "Verb", "brute_force_intersection",
    "differential_witness", "edge_oracle", "evaluate", "grant_intersection", "match_actions",
    "obfuscate_permissions", "parse_permissions", "serialize_permissions",
]

__version__ = "0.1.0"

"""Permission documents: data model, XML parsing and serialization, obfuscation.

The XML vocabulary (see ``docs/formats.md``)::

    <dds>
      <permissions subject_name="CN=talker">
        <grant name="talker_grant">
          <subject_name>CN=talker</subject_name>
          <validity>
            <not_before>2020-01-01T00:00:00Z</not_before>
            <not_after>2030-01-01T00:00:00Z</not_after>
          </validity>
          <allow_rule>
            <domains><id>0</id><id_range><min>1</min><max>5</max></id_range></domains>
            <publish>
              <topics><topic>rt/chatter</topic></topics>
              <partitions><partition>p</partition></partitions>
              <data_tags><tag><name>n</name><value>v</value></tag></data_tags>
            </publish>
          </allow_rule>
          <default>DENY</default>
        </grant>
      </permissions>
    </dds>
"""
from __future__ import annotations

import base64
import enum
import hashlib
import hmac
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from xml.parsers import expat

from . import patterns
from .patterns import PatternSyntaxError

# An empty <partitions> list admits only the default partition.
DEFAULT_PARTITION = ""

OBFUSCATION_MARKER = "hmac-sha256-b64"


class Qualifier(enum.Enum):
    ALLOW = "ALLOW"
    DENY = "DENY"
    ERROR = "ERROR"


class Verb(enum.Enum):
    PUBLISH = "publish"
    SUBSCRIBE = "subscribe"
    RELAY = "relay"


class PermissionsError(ValueError):
    """Malformed permission document.  Carries the element path and byte offset."""

    def __init__(self, message: str, path: str = "", offset: int | None = None):
        where = f" at {path}" if path else ""
        if offset is not None:
            where += f" (byte {offset})"
        super().__init__(message + where)
        self.path = path
        self.offset = offset


@dataclass(frozen=True)
class DomainSet:
    """Domain ids as a union of inclusive ranges; single ids are ``(d, d)``."""

    ranges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for lo, hi in self.ranges:
            if lo < 0 or hi < lo:
                raise ValueError(f"invalid domain range {lo}..{hi}")

    @classmethod
    def of(cls, *items) -> "DomainSet":
        out = []
        for it in items:
            out.append((it, it) if isinstance(it, int) else tuple(it))
        return cls(tuple(out))

    def __contains__(self, domain_id: int) -> bool:
        return any(lo <= domain_id <= hi for lo, hi in self.ranges)


@dataclass(frozen=True)
class CriteriaSet:
    topics: tuple[str, ...]
    partitions: tuple[str, ...] = ()
    data_tags: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.topics:
            raise ValueError("criteria need at least one topic expression")


@dataclass(frozen=True)
class Rule:
    qualifier: Qualifier
    domains: DomainSet
    publish: CriteriaSet | None = None
    subscribe: CriteriaSet | None = None
    relay: CriteriaSet | None = None

    def __post_init__(self):
        if self.qualifier is Qualifier.ERROR:
            raise ValueError("ERROR is an evaluation outcome, not a rule qualifier")
        if self.publish is None and self.subscribe is None and self.relay is None:
            raise ValueError("rule needs publish, subscribe or relay criteria")

    def criteria(self, verb: Verb) -> CriteriaSet | None:
        return getattr(self, verb.value)


@dataclass(frozen=True)
class Grant:
    subject_name: str
    not_before: datetime
    not_after: datetime
    rules: tuple[Rule, ...] = ()
    default: Qualifier = Qualifier.DENY
    name: str = ""

    def __post_init__(self):
        if not self.not_before < self.not_after:
            raise ValueError("grant validity needs not_before < not_after")
        if self.default is Qualifier.ERROR:
            raise ValueError("grant default must be ALLOW or DENY")

    def valid_at(self, at: datetime) -> bool:
        return self.not_before <= at <= self.not_after


@dataclass(frozen=True)
class PermissionsFile:
    subject_name: str
    grants: tuple[Grant, ...]
    obfuscated: bool = False

    def __post_init__(self):
        if not self.subject_name:
            raise ValueError("subject_name must be non-empty")
        if not self.grants:
            raise ValueError("permissions need at least one grant")

    def first_grant(self, subject_name: str, at: datetime) -> tuple[int, Grant] | None:
        for i, g in enumerate(self.grants):
            if g.subject_name == subject_name and g.valid_at(at):
                return i, g
        return None

    def declared_tags(self) -> set[tuple[str, str]]:
        tags = set()
        for g in self.grants:
            for r in g.rules:
                for verb in Verb:
                    c = r.criteria(verb)
                    if c is not None:
                        tags.update(c.data_tags)
        return tags


@dataclass(frozen=True)
class ActionRequest:
    subject_name: str
    domain_id: int
    verb: Verb
    topic: str
    partition: str = DEFAULT_PARTITION
    data_tags: frozenset = field(default_factory=frozenset)

    def with_subject(self, subject_name: str) -> "ActionRequest":
        return replace(self, subject_name=subject_name)


# --------------------------------------------------------------------------
# timestamps


def parse_timestamp(text: str) -> datetime:
    """Parse ISO-8601 UTC, second precision (``2020-01-01T00:00:00Z``)."""
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# --------------------------------------------------------------------------
# parsing


class _Node:
    __slots__ = ("tag", "attrs", "children", "text", "offset", "path")

    def __init__(self, tag, attrs, offset, path):
        self.tag = tag
        self.attrs = attrs
        self.children = []
        self.text = ""
        self.offset = offset
        self.path = path


def _build_tree(document: bytes) -> _Node:
    parser = expat.ParserCreate("UTF-8")
    stack: list[_Node] = []
    root: list[_Node] = []

    def start(tag, attrs):
        parent_path = stack[-1].path if stack else ""
        node = _Node(tag, attrs, parser.CurrentByteIndex, f"{parent_path}/{tag}")
        if stack:
            stack[-1].children.append(node)
        else:
            root.append(node)
        stack.append(node)

    def end(tag):
        stack.pop()

    def chars(data):
        if stack:
            stack[-1].text += data

    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = chars
    try:
        parser.Parse(document, True)
    except expat.ExpatError as exc:
        raise PermissionsError(f"malformed markup: {expat.ErrorString(exc.code)}",
                               offset=parser.CurrentByteIndex) from None
    return root[0]


def _fail(node: _Node, message: str):
    raise PermissionsError(message, node.path, node.offset)


def _only(node: _Node, allowed: set[str]):
    for ch in node.children:
        if ch.tag not in allowed:
            _fail(ch, f"unknown element <{ch.tag}>")


def _one(node: _Node, tag: str, required=True) -> _Node | None:
    found = [c for c in node.children if c.tag == tag]
    if len(found) > 1:
        _fail(found[1], f"duplicate <{tag}>")
    if not found:
        if required:
            _fail(node, f"missing required element <{tag}>")
        return None
    return found[0]


def _text(node: _Node) -> str:
    if node.children:
        _fail(node.children[0], f"unexpected element inside <{node.tag}>")
    return node.text.strip()


def _int(node: _Node) -> int:
    try:
        value = int(_text(node))
    except ValueError:
        _fail(node, "expected a non-negative integer")
    if value < 0:
        _fail(node, "expected a non-negative integer")
    return value


def _pattern(node: _Node) -> str:
    text = _text(node)
    try:
        patterns.validate(text)
    except PatternSyntaxError as exc:
        _fail(node, f"malformed pattern: {exc}")
    return text


def _parse_domains(node: _Node) -> DomainSet:
    _only(node, {"id", "id_range"})
    ranges = []
    for ch in node.children:
        if ch.tag == "id":
            d = _int(ch)
            ranges.append((d, d))
        else:
            _only(ch, {"min", "max"})
            lo = _int(_one(ch, "min"))
            hi_node = _one(ch, "max")
            hi = _int(hi_node)
            if hi < lo:
                _fail(hi_node, "empty domain range")
            ranges.append((lo, hi))
    if not ranges:
        _fail(node, "empty <domains>")
    return DomainSet(tuple(ranges))


def _parse_criteria(node: _Node) -> CriteriaSet:
    _only(node, {"topics", "partitions", "data_tags"})
    topics_node = _one(node, "topics")
    _only(topics_node, {"topic"})
    topics = tuple(_pattern(t) for t in topics_node.children)
    if not topics:
        _fail(topics_node, "empty <topics>")
    partitions = ()
    pnode = _one(node, "partitions", required=False)
    if pnode is not None:
        _only(pnode, {"partition"})
        partitions = tuple(_pattern(p) for p in pnode.children)
    tags = ()
    tnode = _one(node, "data_tags", required=False)
    if tnode is not None:
        _only(tnode, {"tag"})
        out = []
        for tag in tnode.children:
            _only(tag, {"name", "value"})
            out.append((_text(_one(tag, "name")), _text(_one(tag, "value"))))
        tags = tuple(out)
    return CriteriaSet(topics, partitions, tags)


def _parse_rule(node: _Node) -> Rule:
    _only(node, {"domains", "publish", "subscribe", "relay"})
    qualifier = Qualifier.ALLOW if node.tag == "allow_rule" else Qualifier.DENY
    domains = _parse_domains(_one(node, "domains"))
    kinds = {}
    for verb in Verb:
        c = _one(node, verb.value, required=False)
        kinds[verb.value] = _parse_criteria(c) if c is not None else None
    if not any(kinds.values()):
        _fail(node, "rule needs <publish>, <subscribe> or <relay>")
    return Rule(qualifier, domains, **kinds)


def _parse_grant(node: _Node) -> Grant:
    _only(node, {"subject_name", "validity", "allow_rule", "deny_rule", "default"})
    subject = _text(_one(node, "subject_name"))
    if not subject:
        _fail(node, "empty <subject_name>")
    validity = _one(node, "validity")
    _only(validity, {"not_before", "not_after"})
    stamps = []
    for tag in ("not_before", "not_after"):
        ts_node = _one(validity, tag)
        try:
            stamps.append(parse_timestamp(_text(ts_node)))
        except ValueError:
            _fail(ts_node, "invalid timestamp")
    if not stamps[0] < stamps[1]:
        _fail(validity, "not_before must precede not_after")
    rules = tuple(_parse_rule(c) for c in node.children if c.tag in ("allow_rule", "deny_rule"))
    default_node = _one(node, "default")
    default_text = _text(default_node)
    if default_text not in ("ALLOW", "DENY"):
        _fail(default_node, "default must be ALLOW or DENY")
    # <default> closes the grant; rules after it would be ambiguous about order
    if node.children[-1] is not default_node:
        _fail(node.children[-1], "<default> must be the last element of a grant")
    return Grant(subject, stamps[0], stamps[1], rules, Qualifier(default_text),
                 node.attrs.get("name", ""))


def parse_permissions(document: bytes | str) -> PermissionsFile:
    if isinstance(document, str):
        document = document.encode("utf-8")
    root = _build_tree(document)
    if root.tag != "dds":
        _fail(root, "root element must be <dds>")
    _only(root, {"permissions"})
    perms = _one(root, "permissions")
    _only(perms, {"grant"})
    unknown = set(perms.attrs) - {"subject_name", "obfuscated"}
    if unknown:
        _fail(perms, f"unknown attribute {sorted(unknown)[0]!r}")
    grants = tuple(_parse_grant(g) for g in perms.children)
    if not grants:
        _fail(perms, "at least one <grant> required")
    marker = perms.attrs.get("obfuscated")
    if marker is not None and marker != OBFUSCATION_MARKER:
        _fail(perms, f"unknown obfuscation marker {marker!r}")
    subject = perms.attrs.get("subject_name", grants[0].subject_name)
    return PermissionsFile(subject, grants, obfuscated=marker is not None)


# --------------------------------------------------------------------------
# serialization


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def _criteria_xml(tag: str, c: CriteriaSet, ind: str) -> list[str]:
    out = [f"{ind}<{tag}>", f"{ind}  <topics>"]
    out += [f"{ind}    <topic>{_esc(t)}</topic>" for t in c.topics]
    out.append(f"{ind}  </topics>")
    if c.partitions:
        out.append(f"{ind}  <partitions>")
        out += [f"{ind}    <partition>{_esc(p)}</partition>" for p in c.partitions]
        out.append(f"{ind}  </partitions>")
    if c.data_tags:
        out.append(f"{ind}  <data_tags>")
        for name, value in c.data_tags:
            out.append(f"{ind}    <tag><name>{_esc(name)}</name><value>{_esc(value)}</value></tag>")
        out.append(f"{ind}  </data_tags>")
    out.append(f"{ind}</{tag}>")
    return out


def serialize_permissions(perm: PermissionsFile) -> bytes:
    attrs = f' subject_name="{_esc(perm.subject_name)}"'
    if perm.obfuscated:
        attrs += f' obfuscated="{OBFUSCATION_MARKER}"'
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', "<dds>", f"  <permissions{attrs}>"]
    for g in perm.grants:
        name = f' name="{_esc(g.name)}"' if g.name else ""
        lines += [
            f"    <grant{name}>",
            f"      <subject_name>{_esc(g.subject_name)}</subject_name>",
            "      <validity>",
            f"        <not_before>{format_timestamp(g.not_before)}</not_before>",
            f"        <not_after>{format_timestamp(g.not_after)}</not_after>",
            "      </validity>",
        ]
        for r in g.rules:
            tag = "allow_rule" if r.qualifier is Qualifier.ALLOW else "deny_rule"
            lines.append(f"      <{tag}>")
            lines.append("        <domains>")
            for lo, hi in r.domains.ranges:
                if lo == hi:
                    lines.append(f"          <id>{lo}</id>")
                else:
                    lines.append(f"          <id_range><min>{lo}</min><max>{hi}</max></id_range>")
            lines.append("        </domains>")
            for verb in Verb:
                c = r.criteria(verb)
                if c is not None:
                    lines += _criteria_xml(verb.value, c, "        ")
            lines.append(f"      </{tag}>")
        lines.append(f"      <default>{g.default.value}</default>")
        lines.append("    </grant>")
    lines += ["  </permissions>", "</dds>", ""]
    return "\n".join(lines).encode("utf-8")


def verify_signature(document: bytes) -> bool:
    """Signature hook.  Documents are trusted input here; PKI is not modelled."""
    return True


# --------------------------------------------------------------------------
# keyed-digest obfuscation


def digest(text: str, key: bytes) -> str:
    # The default partition stays empty so "no partitions" keeps its meaning.
    if text == "":
        return ""
    mac = hmac.new(key, text.encode("utf-8"), hashlib.sha256).digest()
    return base64.b64encode(mac).decode("ascii")


def _obf_criteria(c: CriteriaSet | None, key: bytes) -> CriteriaSet | None:
    if c is None:
        return None
    return CriteriaSet(
        tuple(digest(t, key) for t in c.topics),
        tuple(digest(p, key) for p in c.partitions),
        tuple((n, digest(v, key)) for n, v in c.data_tags),
    )


def obfuscate_permissions(perm: PermissionsFile, key: bytes) -> PermissionsFile:
    """Replace every expression and tag value by its base64 HMAC-SHA256 digest.

    Only exact-string matching survives: a wildcard expression becomes an
    opaque digest and no longer expands.
    """
    if not key:
        raise ValueError("obfuscation key must be non-empty")
    if perm.obfuscated:
        raise ValueError("permissions are already obfuscated")
    grants = []
    for g in perm.grants:
        rules = tuple(
            replace(r, publish=_obf_criteria(r.publish, key),
                    subscribe=_obf_criteria(r.subscribe, key),
                    relay=_obf_criteria(r.relay, key))
            for r in g.rules
        )
        grants.append(replace(g, rules=rules))
    return PermissionsFile(perm.subject_name, tuple(grants), obfuscated=True)


def obfuscate_action(action: ActionRequest, key: bytes) -> ActionRequest:
    """Digest the literal fields of an action the same way as the permissions."""
    return replace(
        action,
        topic=digest(action.topic, key),
        partition=digest(action.partition, key),
        data_tags=frozenset((n, digest(v, key)) for n, v in action.data_tags),
    )

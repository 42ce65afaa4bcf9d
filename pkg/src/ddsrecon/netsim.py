"""Synthetic Secure DDS deployments and KeepAlive propagation.

Scenarios carry both the generated permission documents and the
application's own endpoints (the topics each participant actually writes
and reads).  ``simulate`` decides every transfer with the compliant PDP, so
it is an oracle independent of the topology module.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone

from .capture import CaptureRecord
from .pdp import evaluate, match_actions
from .permissions import (
    ActionRequest,
    CriteriaSet,
    DomainSet,
    Grant,
    PermissionsFile,
    Qualifier,
    Rule,
    Verb,
    parse_permissions,
    serialize_permissions,
)

NOT_BEFORE = datetime(2020, 1, 1, tzinfo=timezone.utc)
NOT_AFTER = datetime(2030, 1, 1, tzinfo=timezone.utc)
CAPTURE_START = datetime(2024, 6, 1, 12, 0, 0, tzinfo=timezone.utc)
DOMAIN = 0
DECOY_PARTITION = "quarantine"
MULTICAST = "239.255.0.1:7400"


@dataclass(frozen=True)
class Endpoint:
    topic: str
    partition: str = ""


@dataclass
class ScenarioParticipant:
    id: str
    guid: str
    permissions: PermissionsFile
    coord: tuple[int, int] | None = None
    publishes: list[Endpoint] = field(default_factory=list)
    subscribes: list[Endpoint] = field(default_factory=list)

    @property
    def subject_name(self) -> str:
        return self.permissions.subject_name


@dataclass
class Scenario:
    shape: str
    seed: int
    participants: list[ScenarioParticipant]
    intended_adjacency: set

    def __post_init__(self):
        ids = [p.id for p in self.participants]
        if len(set(ids)) != len(ids):
            raise ValueError("participant ids must be unique")

    def by_id(self, pid: str) -> ScenarioParticipant:
        for p in self.participants:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def guid_of(self, pid: str) -> str:
        return self.by_id(pid).guid

    def id_of_guid(self, guid: str) -> str:
        for p in self.participants:
            if p.guid == guid:
                return p.id
        raise KeyError(guid)

    # --- text export/import

    def to_json(self) -> str:
        return json.dumps({
            "shape": self.shape,
            "seed": self.seed,
            "participants": [{
                "id": p.id,
                "guid": p.guid,
                "coord": list(p.coord) if p.coord is not None else None,
                "publishes": [[e.topic, e.partition] for e in p.publishes],
                "subscribes": [[e.topic, e.partition] for e in p.subscribes],
                "permissions": serialize_permissions(p.permissions).decode("utf-8"),
            } for p in self.participants],
            "intended_adjacency": sorted([list(e) for e in self.intended_adjacency]),
        }, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        obj = json.loads(text)
        parts = [ScenarioParticipant(
            p["id"], p["guid"], parse_permissions(p["permissions"].encode("utf-8")),
            tuple(p["coord"]) if p["coord"] is not None else None,
            [Endpoint(*e) for e in p["publishes"]],
            [Endpoint(*e) for e in p["subscribes"]],
        ) for p in obj["participants"]]
        return cls(obj["shape"], obj["seed"], parts,
                   {tuple(e) for e in obj["intended_adjacency"]})


def _guid(rng: random.Random) -> str:
    return "%032x" % rng.getrandbits(128)


def _permissions(subject: str, pubs, subs, decoys=()) -> PermissionsFile:
    """Minimal grant: one ALLOW rule per needed publish or subscribe, default DENY."""
    rules = []
    for t in pubs:
        rules.append(Rule(Qualifier.ALLOW, DomainSet.of(DOMAIN), publish=CriteriaSet((t,))))
    for t in subs:
        rules.append(Rule(Qualifier.ALLOW, DomainSet.of(DOMAIN), subscribe=CriteriaSet((t,))))
    for t in decoys:
        # grants the topic but only in a partition nobody writes: a heuristic
        # edge that the exact check refutes
        rules.append(Rule(Qualifier.ALLOW, DomainSet.of(DOMAIN),
                          subscribe=CriteriaSet((t,), (DECOY_PARTITION,))))
    grant = Grant(subject, NOT_BEFORE, NOT_AFTER, tuple(rules), Qualifier.DENY,
                  name=subject.split("=", 1)[-1] + "_grant")
    return PermissionsFile(subject, (grant,))


def grid_label(r: int, c: int) -> str:
    return f"{r},{c}"


def grid_subject(r: int, c: int) -> str:
    return f"CN=cell-{r}-{c},O=ddsrecon"


def grid_topic(r: int, c: int) -> str:
    return f"cell/{r}/{c}"


def generate_grid(rows: int, cols: int, seed: int) -> Scenario:
    """Grid where each cell writes its own topic and reads its 4-neighbours' topics."""
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    rng = random.Random(seed)
    participants, adjacency = [], set()
    for r in range(rows):
        for c in range(cols):
            nbrs = [(r + dr, c + dc) for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
                    if 0 <= r + dr < rows and 0 <= c + dc < cols]
            subs = [grid_topic(*n) for n in nbrs]
            perm = _permissions(grid_subject(r, c), [grid_topic(r, c)], subs)
            participants.append(ScenarioParticipant(
                grid_label(r, c), _guid(rng), perm, (r, c),
                [Endpoint(grid_topic(r, c))], [Endpoint(t) for t in subs]))
            adjacency.update((grid_label(*n), grid_label(r, c)) for n in nbrs)
    return Scenario("grid", seed, participants, adjacency)


def generate_random(n: int, edge_probability: float, seed: int,
                    decoy_probability: float = 0.0) -> Scenario:
    """Directed Erdos-Renyi intent realized with literal per-participant topics.

    With ``decoy_probability`` > 0, some non-edges get a subscribe grant in an
    unused partition: the heuristic graph then contains edges the exact
    oracle must refute.
    """
    if not 0.0 <= edge_probability <= 1.0 or not 0.0 <= decoy_probability <= 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    rng = random.Random(seed)
    ids = [f"n{i}" for i in range(n)]
    adjacency = set()
    decoys = set()
    for u in ids:
        for v in ids:
            if u == v:
                continue
            if rng.random() < edge_probability:
                adjacency.add((u, v))
            elif rng.random() < decoy_probability:
                decoys.add((u, v))
    participants = []
    for i, u in enumerate(ids):
        topic = f"node/{u}/out"
        ins = sorted(a for a, b in adjacency if b == u)
        fakes = sorted(a for a, b in decoys if b == u)
        subs = [f"node/{a}/out" for a in ins]
        perm = _permissions(f"CN={u},O=ddsrecon", [topic], subs, [f"node/{a}/out" for a in fakes])
        participants.append(ScenarioParticipant(
            u, _guid(rng), perm, None, [Endpoint(topic)],
            [Endpoint(t) for t in subs] + [Endpoint(f"node/{a}/out", DECOY_PARTITION)
                                           for a in fakes]))
    return Scenario("random", seed, participants, adjacency)


def _endpoint(i: int) -> str:
    return f"10.{i // 62500 % 256}.{i // 250 % 250}.{i % 250 + 1}:7410"


def emit_capture(s: Scenario) -> list[CaptureRecord]:
    """Handshake observations: one per intended link direction, plus a discovery
    announcement for every participant."""
    index = {p.id: i for i, p in enumerate(s.participants)}
    docs = {p.id: serialize_permissions(p.permissions) for p in s.participants}
    records = []
    tick = 0
    for p in s.participants:
        i = index[p.id]
        records.append(CaptureRecord(CAPTURE_START + timedelta(seconds=tick), _endpoint(i),
                                     MULTICAST, p.guid, p.subject_name, docs[p.id]))
        tick += 1
    for u, v in sorted(s.intended_adjacency):
        pu = s.by_id(u)
        records.append(CaptureRecord(CAPTURE_START + timedelta(seconds=tick), _endpoint(index[u]),
                                     _endpoint(index[v]), pu.guid, pu.subject_name, docs[u]))
        tick += 1
    return records


# --------------------------------------------------------------------------
# KeepAlive propagation


@dataclass(frozen=True)
class Delivery:
    origin: str
    receiver: str
    round: int
    lineage: tuple[str, ...]


@dataclass
class DeliveryReport:
    deliveries: set
    rounds_run: int

    def delivered(self, origin: str, receiver: str) -> bool:
        return any(d.origin == origin and d.receiver == receiver for d in self.deliveries)

    def first_round(self, origin: str, receiver: str) -> int | None:
        rounds = [d.round for d in self.deliveries if d.origin == origin and d.receiver == receiver]
        return min(rounds) if rounds else None

    def reach_pairs(self) -> set:
        return {(d.origin, d.receiver) for d in self.deliveries}

    def to_lines(self) -> str:
        rows = sorted(self.deliveries, key=lambda d: (d.origin, d.receiver, d.round, d.lineage))
        out = [f"# rounds_run={self.rounds_run}"]
        out += [f"{d.origin}\t{d.receiver}\t{d.round}\t{'>'.join(d.lineage)}" for d in rows]
        return "\n".join(out) + "\n"


def _links(s: Scenario, live: list[ScenarioParticipant], at: datetime):
    """(sender, receiver, topic) transfers the compliant PDP permits."""
    allowed_pub, allowed_sub = {}, {}
    for p in live:
        allowed_pub[p.id] = [
            e for e in p.publishes
            if evaluate(p.permissions, ActionRequest(p.subject_name, DOMAIN, Verb.PUBLISH,
                                                     e.topic, e.partition), at)[0]
            is Qualifier.ALLOW]
        allowed_sub[p.id] = [
            e for e in p.subscribes
            if evaluate(p.permissions, ActionRequest(p.subject_name, DOMAIN, Verb.SUBSCRIBE,
                                                     e.topic, e.partition), at)[0]
            is Qualifier.ALLOW]
    out = {}
    for a in live:
        for b in live:
            if a.id == b.id:
                continue
            topics = [w.topic for w in allowed_pub[a.id] for r in allowed_sub[b.id]
                      if match_actions(
                          ActionRequest(a.subject_name, DOMAIN, Verb.PUBLISH, w.topic, w.partition),
                          ActionRequest(b.subject_name, DOMAIN, Verb.SUBSCRIBE, r.topic, r.partition))]
            if topics:
                out.setdefault(a.id, []).append(b.id)
    return out


def simulate(s: Scenario, removed=frozenset(), rounds: int = 20,
             at: datetime | None = None) -> DeliveryReport:
    """Synchronous KeepAlive rounds.

    Every round each live participant originates a KeepAlive (sequence number
    = round) on its writable topics.  A participant relays each (origin,
    sequence) once, appending its id, and never relays a message whose
    lineage already names it.  A message sent in round r arrives in round r.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    at = at or NOT_BEFORE + (NOT_AFTER - NOT_BEFORE) / 2
    removed = set(removed)
    live = [p for p in s.participants if p.id not in removed]
    links = _links(s, live, at)
    deliveries = set()
    relayed = set()
    inbox: list[tuple[str, int, tuple[str, ...]]] = []   # (origin, seq, lineage ending in sender)
    for rnd in range(1, rounds + 1):
        outgoing = [(p.id, rnd, (p.id,)) for p in live]
        for origin, seq, lineage in sorted(inbox):
            me = lineage[-1]
            if (me, origin, seq) in relayed:
                continue
            relayed.add((me, origin, seq))
            outgoing.append((origin, seq, lineage))
        inbox = []
        for origin, seq, lineage in outgoing:
            sender = lineage[-1]
            for receiver in links.get(sender, ()):
                if receiver in lineage:
                    continue
                deliveries.add(Delivery(origin, receiver, rnd, lineage))
                inbox.append((origin, seq, lineage + (receiver,)))
    return DeliveryReport(deliveries, rounds)

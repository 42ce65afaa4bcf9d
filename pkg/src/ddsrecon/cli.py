"""Command line front end.

Exit status: 0 success, 1 query unsatisfiable / no witness, 2 input error,
3 internal invariant violation.  Results go to stdout as JSON (``--human``
for a short text rendering), diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from . import capture, netsim, permissions, topology
from .intersection import EdgeOracle
from .pdp import PdpVariant, differential_witness
from .permissions import format_timestamp, parse_timestamp


class InputError(Exception):
    pass


class Unsatisfied(Exception):
    """Raised with the JSON payload when a query has no answer."""

    def __init__(self, payload):
        super().__init__(payload.get("message", "no result"))
        self.payload = payload


def _read_bytes(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str, data: str) -> None:
    try:
        Path(path).write_text(data)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from None


def _load_db(path: str) -> capture.ParticipantDatabase:
    try:
        return capture.ParticipantDatabase.from_json(_read_bytes(path).decode("utf-8"))
    except (ValueError, KeyError) as exc:
        raise InputError(f"bad database file {path}: {exc}") from None


def _label(db, guid: str) -> str:
    subject = db.entry(guid).subject_name
    cn = dict(p.split("=", 1) for p in subject.split(",") if "=" in p).get("CN", guid)
    m = re.fullmatch(r"cell-(\d+)-(\d+)", cn)
    return f"{m.group(1)},{m.group(2)}" if m else cn


def _resolve(db, name: str) -> str:
    try:
        return db.resolve(name)
    except capture.UnknownParticipant:
        pass
    m = re.fullmatch(r"(\d+),(\d+)", name)
    if m:
        try:
            return db.resolve(f"cell-{m.group(1)}-{m.group(2)}")
        except capture.UnknownParticipant:
            pass
    raise InputError(f"unknown participant {name!r}")


def _at(args, db):
    if args.at:
        try:
            return parse_timestamp(args.at)
        except ValueError:
            raise InputError(f"bad --at timestamp {args.at!r}") from None
    latest = db.latest_observation()
    if latest is None:
        raise InputError("empty database and no --at given")
    return latest


def _witness(pair):
    a = pair.publisher_action
    return {"publisher": a.subject_name, "subscriber": pair.subscriber_action.subject_name,
            "domain_id": a.domain_id, "topic": a.topic, "partition": a.partition,
            "data_tags": sorted([list(t) for t in a.data_tags])}


# --------------------------------------------------------------------------
# commands


def cmd_gen(args):
    if args.seed is None:
        raise InputError("gen requires --seed")
    if args.shape == "grid":
        scen = netsim.generate_grid(args.rows, args.cols, args.seed)
    else:
        scen = netsim.generate_random(args.n, args.p, args.seed, args.decoy_p)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = netsim.emit_capture(scen)
    _write(str(out / "scenario.json"), scen.to_json())
    (out / "capture.jsonl").write_bytes(capture.encode_records(records))
    return {"scenario": str(out / "scenario.json"), "capture": str(out / "capture.jsonl"),
            "participants": len(scen.participants), "records": len(records),
            "intended_edges": len(scen.intended_adjacency)}


def cmd_ingest(args):
    db = _load_db(args.into) if args.into else capture.ParticipantDatabase()
    new = []
    for path in args.captures:
        try:
            records = capture.decode_adapter(_read_bytes(path), args.codec)
            _, anomalies = capture.load_capture(records, db)
        except capture.CaptureError as exc:
            raise InputError(f"{path}: {exc}") from None
        new.extend(anomalies)
    _write(args.db, db.to_json() + "\n")
    return {"database": args.db, "participants": len(db),
            "anomalies": [a.__dict__ for a in new]}


def cmd_graph(args):
    db = _load_db(args.db)
    g = topology.build_heuristic_graph(db, topology.GraphMode(args.mode))
    oracle = EdgeOracle(db)
    at = _at(args, db) if (args.verify or args.at) else None
    if args.verify:
        for u, v in sorted(g.edges):
            oracle(u, v, at)
    labels = {v: _label(db, v) for v in g.vertices}
    if args.format == "dot":
        text = topology.to_dot(g, oracle, at, labels)
    else:
        text = topology.dumps(topology.to_json(g, oracle, at, labels))
    if args.out:
        _write(args.out, text)
        return {"graph": args.out, "vertices": len(g.vertices), "edges": len(g.edges)}
    return text


def cmd_query(args):
    db = _load_db(args.db)
    g = topology.build_heuristic_graph(db, topology.GraphMode(args.mode))
    oracle = EdgeOracle(db)
    at = _at(args, db)
    n = len(g.vertices)
    base = {"query": args.kind, "at": format_timestamp(at), "mode": args.mode,
            "heuristic_edges": len(g.edges), "exhaustive_pairs": n * (n - 1)}

    def need(value, flag):
        if not value:
            raise InputError(f"query {args.kind} needs {flag}")
        return _resolve(db, value)

    def finish(result_calls):
        base["oracle_calls"] = result_calls
        base["reduction_factor"] = (n * (n - 1)) / result_calls if result_calls else None

    if args.kind == "path":
        src, dst = need(args.src, "--from"), need(args.dst, "--to")
        res = topology.find_path(g, oracle, src, dst, at)
        finish(oracle.calls)
        if res is None:
            raise Unsatisfied({**base, "path": None, "message": "no verified path"})
        return {**base, "path": [_label(db, v) for v in res.nodes], "nodes": list(res.nodes),
                "hops": res.hops, "witnesses": [_witness(w) for w in res.edge_witnesses]}
    if args.kind == "cut":
        src, dst = need(args.src, "--from"), need(args.dst, "--to")
        res = topology.min_cut_between(g, oracle, src, dst, at)
    elif args.kind == "isolate-src":
        res = topology.isolate_source(g, oracle, need(args.node or args.src, "--node"), at)
    else:
        res = topology.isolate_target(g, oracle, need(args.node or args.dst, "--node"), at)
    finish(oracle.calls)
    out = {**base, "cut": sorted(_label(db, v) for v in res.cut_nodes),
           "cut_guids": sorted(res.cut_nodes), "size": res.size,
           "certified": res.certified, "no_vertex_cut": res.no_vertex_cut}
    if res.no_vertex_cut:
        out["message"] = "direct verified edge: no vertex cut exists"
        raise Unsatisfied(out)
    return out


def cmd_simulate(args):
    try:
        scen = netsim.Scenario.from_json(_read_bytes(args.scenario).decode("utf-8"))
    except (ValueError, KeyError) as exc:
        raise InputError(f"bad scenario file: {exc}") from None
    names = list(args.remove or [])
    if args.remove_json:
        try:
            names += json.loads(_read_bytes(args.remove_json))["cut"]
        except (ValueError, KeyError, TypeError):
            raise InputError("--remove-json needs a query output with a 'cut' list") from None
    ids = {p.id for p in scen.participants}
    by_guid = {p.guid: p.id for p in scen.participants}
    removed = set()
    for name in names:
        if name in ids:
            removed.add(name)
        elif name in by_guid:
            removed.add(by_guid[name])
        else:
            raise InputError(f"unknown participant {name!r}")
    report = netsim.simulate(scen, removed, args.rounds)
    if args.lines:
        return report.to_lines()
    out = {"rounds": report.rounds_run, "removed": sorted(removed),
           "deliveries": len(report.deliveries), "reach_pairs": len(report.reach_pairs())}
    if args.src and args.dst:
        out.update({"from": args.src, "to": args.dst,
                    "delivered": report.delivered(args.src, args.dst),
                    "first_round": report.first_round(args.src, args.dst)})
    return out


def cmd_diff_vendor(args):
    variant = PdpVariant(args.variant)
    if variant is PdpVariant.COMPLIANT:
        raise InputError("diff-vendor needs a non-compliant variant")
    results = []
    for path in args.files:
        try:
            perm = permissions.parse_permissions(_read_bytes(path))
        except permissions.PermissionsError as exc:
            raise InputError(f"{path}: {exc}") from None
        w = differential_witness(perm, variant, args.budget)
        if w is not None:
            a = w.action
            results.append({"file": path, "at": format_timestamp(w.at), "verb": a.verb.value,
                            "subject_name": a.subject_name, "domain_id": a.domain_id,
                            "topic": a.topic, "partition": a.partition,
                            "data_tags": sorted([list(t) for t in a.data_tags]),
                            "compliant": w.compliant.value,
                            "variant": w.variant_outcome.value})
    out = {"variant": variant.value, "files": len(args.files), "witnesses": results}
    if not results:
        raise Unsatisfied({**out, "message": "no divergence found within budget"})
    return out


def cmd_obfuscate(args):
    if args.key_file:
        key = _read_bytes(args.key_file)
    elif args.key:
        try:
            key = bytes.fromhex(args.key)
        except ValueError:
            raise InputError("--key must be hex") from None
    else:
        raise InputError("obfuscate needs --key or --key-file")
    try:
        perm = permissions.parse_permissions(_read_bytes(args.file))
        return permissions.serialize_permissions(
            permissions.obfuscate_permissions(perm, key)).decode("utf-8")
    except (permissions.PermissionsError, ValueError) as exc:
        raise InputError(str(exc)) from None


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddsrecon", description=__doc__.splitlines()[0])
    p.add_argument("--human", action="store_true", help="human-readable output")
    sub = p.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a scenario and its capture")
    gen.add_argument("shape", choices=["grid", "random"])
    gen.add_argument("--rows", type=int, default=6)
    gen.add_argument("--cols", type=int, default=6)
    gen.add_argument("--n", type=int, default=8)
    gen.add_argument("--p", type=float, default=0.3)
    gen.add_argument("--decoy-p", type=float, default=0.0)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(func=cmd_gen)

    ing = sub.add_parser("ingest", help="load capture files into a database")
    ing.add_argument("captures", nargs="+", help="capture files ('-' for stdin)")
    ing.add_argument("--db", required=True, help="database file to write")
    ing.add_argument("--into", help="existing database to merge into")
    ing.add_argument("--codec", default="jsonl")
    ing.set_defaults(func=cmd_ingest)

    gr = sub.add_parser("graph", help="build and export the heuristic graph")
    gr.add_argument("--db", required=True)
    gr.add_argument("--mode", choices=["exact", "fast"], default="exact")
    gr.add_argument("--format", choices=["json", "dot"], default="json")
    gr.add_argument("--verify", action="store_true", help="check every edge with the oracle")
    gr.add_argument("--at")
    gr.add_argument("--out")
    gr.set_defaults(func=cmd_graph)

    q = sub.add_parser("query", help="path and cut queries")
    q.add_argument("kind", choices=["path", "isolate-src", "isolate-dst", "cut"])
    q.add_argument("--db", required=True)
    q.add_argument("--from", dest="src")
    q.add_argument("--to", dest="dst")
    q.add_argument("--node")
    q.add_argument("--at")
    q.add_argument("--mode", choices=["exact", "fast"], default="exact")
    q.set_defaults(func=cmd_query)

    sim = sub.add_parser("simulate", help="KeepAlive propagation with removed participants")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--remove", nargs="*", help="participant ids, guids")
    sim.add_argument("--remove-json", help="query output whose 'cut' list is removed")
    sim.add_argument("--rounds", type=int, default=20)
    sim.add_argument("--from", dest="src")
    sim.add_argument("--to", dest="dst")
    sim.add_argument("--lines", action="store_true", help="line-oriented delivery report")
    sim.set_defaults(func=cmd_simulate)

    dv = sub.add_parser("diff-vendor", help="search for vendor-variant divergences")
    dv.add_argument("--variant", required=True,
                    choices=[v.value for v in PdpVariant if v is not PdpVariant.COMPLIANT])
    dv.add_argument("--budget", type=int, default=10_000)
    dv.add_argument("files", nargs="+")
    dv.set_defaults(func=cmd_diff_vendor)

    ob = sub.add_parser("obfuscate", help="replace expressions by keyed digests")
    ob.add_argument("file")
    ob.add_argument("--key", help="hex key")
    ob.add_argument("--key-file")
    ob.set_defaults(func=cmd_obfuscate)
    return p


def _render(result, human: bool) -> str:
    if isinstance(result, str):
        return result if result.endswith("\n") else result + "\n"
    if human:
        return "".join(f"{k}: {v}\n" for k, v in result.items())
    return json.dumps(result, indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "rounds", 1) < 1:
        parser.error("--rounds must be >= 1")
    try:
        result = args.func(args)
    except InputError as exc:
        print(f"ddsrecon: {exc}", file=sys.stderr)
        return 2
    except Unsatisfied as exc:
        sys.stdout.write(_render(exc.payload, args.human))
        print(f"ddsrecon: {exc}", file=sys.stderr)
        return 1
    except (AssertionError, RuntimeError) as exc:
        print(f"ddsrecon: internal invariant violated: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(_render(result, args.human))
    return 0


if __name__ == "__main__":
    sys.exit(main())

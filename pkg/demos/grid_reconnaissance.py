# Reconnaissance on a synthetic 6x6 grid deployment.
#
# Every cell may publish its own topic and read its four neighbours.  We
# capture the handshakes, rebuild the heuristic graph, ask the three query
# types, and then check the computed cut with the KeepAlive simulator.
from datetime import datetime, timezone

from ddsrecon.capture import load_capture
from ddsrecon.intersection import EdgeOracle
from ddsrecon.netsim import emit_capture, generate_grid, simulate
from ddsrecon.topology import (
    build_heuristic_graph,
    find_path,
    isolate_source,
    min_cut_between,
)

AT = datetime(2025, 1, 1, tzinfo=timezone.utc)

scenario = generate_grid(6, 6, seed=36)
db, _ = load_capture(emit_capture(scenario))
graph = build_heuristic_graph(db)
n = len(db)
print(f"{n} participants, {len(graph.edges)} heuristic edges, {n * (n - 1)} ordered pairs")

name = scenario.id_of_guid
src, dst = scenario.guid_of("5,0"), scenario.guid_of("0,3")

oracle = EdgeOracle(db)
path = find_path(graph, oracle, src, dst, AT)
print("path:", " -> ".join(name(v) for v in path.nodes), f"({oracle.calls} oracle calls)")
for w in path.edge_witnesses[:2]:
    a = w.publisher_action
    print("   witness topic", a.topic, "partition", repr(a.partition))

oracle = EdgeOracle(db)
iso = isolate_source(graph, oracle, scenario.guid_of("5,2"), AT)
print("isolate 5,2:", sorted(name(v) for v in iso.cut_nodes), f"({oracle.calls} oracle calls)")

oracle = EdgeOracle(db)
cut = min_cut_between(graph, oracle, src, dst, AT)
removed = {name(v) for v in cut.cut_nodes}
print("cut 5,0 / 0,3:", sorted(removed), f"({oracle.calls} oracle calls)")

before = simulate(scenario, rounds=20)
after = simulate(scenario, removed, rounds=20)
print("KeepAlive 5,0 -> 0,3 without cut: round", before.first_round("5,0", "0,3"))
print("KeepAlive 5,0 -> 0,3 with cut removed:", after.delivered("5,0", "0,3"))

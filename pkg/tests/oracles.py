"""Slow, obviously-correct reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

from semdeg.linectl import Buffer, Event, IllegalTransition, LineModel, Machine, State, fire_event, step
from semdeg.units import Converter, ConverterRegistry


def floyd_warshall_closure(nodes, edges) -> set[tuple]:
    nodes = list(nodes)
    reach = {(a, b): False for a in nodes for b in nodes}
    for a, b in edges:
        reach[a, b] = True
    for k in nodes:
        for i in nodes:
            if reach[i, k]:
                for j in nodes:
                    if reach[k, j]:
                        reach[i, j] = True
    return {(a, b) for (a, b), r in reach.items() if r and a != b}


def random_digraph(rng: random.Random, max_nodes: int = 8):
    n = rng.randint(0, max_nodes)
    nodes = [f"n{i}" for i in range(n)]
    density = rng.random()
    edges = [(a, b) for a, b in itertools.product(nodes, repeat=2) if rng.random() < density * 0.5]
    return nodes, edges


def all_simple_paths(registry: ConverterRegistry, source: str, target: str):
    """Every converter id sequence from source to target visiting no unit twice."""
    out = {}
    for c in registry.converters.values():
        out.setdefault(c.source, []).append(c)
    found = []

    def walk(unit, visited, ids):
        if unit == target:
            found.append(tuple(ids))
            return
        for c in out.get(unit, ()):
            if c.target not in visited:
                walk(c.target, visited | {c.target}, ids + [c.id])

    walk(source, {source}, [])
    return found


def brute_force_chain(registry: ConverterRegistry, source: str, target: str):
    """Shortest id sequence, ties broken lexicographically; None if unreachable."""
    if source == target:
        return ()
    paths = all_simple_paths(registry, source, target)
    return min(paths, key=lambda p: (len(p), p)) if paths else None


def random_registry(rng: random.Random, max_units: int = 6, max_converters: int = 10):
    units = [f"u{i}" for i in range(rng.randint(1, max_units))]
    reg = ConverterRegistry()
    for u in units:
        reg.register_unit(u)
    if len(units) < 2:
        return reg, units
    for i in range(rng.randint(0, max_converters)):
        a, b = rng.sample(units, 2)
        # Random ids so tie-breaking is exercised independently of insertion order.
        cid = f"c{rng.randint(0, 99):02d}_{i}"
        reg.register_converter(Converter(cid, a, b, rng.choice([0.5, 2.0, -1.0, 3.0]),
                                         rng.uniform(-10, 10)))
    return reg, units


# ---------------------------------------------------------------------------
# Production line property driver

def random_line(rng: random.Random, policy: str | None = None):
    n = rng.randint(1, 4)
    machines = [Machine(f"M{i}", Fraction(rng.randint(0, 6), rng.randint(1, 3)),
                        rng.choice([State.PRODUCING, State.PRODUCING, State.IDLE]))
                for i in range(n)]
    buffers = [Buffer(f"B{i + 1}", f"M{i}", f"M{i + 1}", rng.randint(0, 6)) for i in range(n - 1)]
    return LineModel(machines, buffers, speed_policy=policy or rng.choice(["linear", "constant"]))


def random_schedule(rng: random.Random, line, ticks: int):
    events = list(Event)
    schedule = [(rng.randrange(ticks), rng.choice(line.machines).id, rng.choice(events))
                for _ in range(rng.randint(0, 3 * ticks))]
    return sorted(schedule, key=lambda e: e[0])


def run_checked(line, schedule, ticks: int, check) -> list[str]:
    """Step ``line`` for ``ticks`` ticks, firing legal events, calling ``check(line)`` each tick.

    Illegal events in a random schedule are skipped; the returned log lists
    the events that actually fired, for determinism comparisons.
    """
    fired = []
    for t in range(ticks):
        for tick, machine, event in schedule:
            if tick == line.clock:
                try:
                    fire_event(line, machine, event)
                    fired.append(f"{tick} {machine} {event}")
                except IllegalTransition:
                    pass
        check(line)
        step(line)
    check(line)
    return fired


def conservation_violations(line) -> list[str]:
    out = []
    for k, buf in enumerate(line.buffers):
        up, down = line.machines[k], line.machines[k + 1]
        if up.emitted != down.consumed + buf.count:
            out.append(f"tick {line.clock}: {up.id} emitted {up.emitted} != "
                       f"{down.id} consumed {down.consumed} + {buf.id} {buf.count}")
        if not 0 <= buf.count <= buf.capacity:
            out.append(f"tick {line.clock}: {buf.id} count {buf.count} outside 0..{buf.capacity}")
    for m in line.machines:
        if not 0 <= m.accumulator < 1:
            out.append(f"tick {line.clock}: {m.id} accumulator {m.accumulator} outside [0, 1)")
    return out

"""Affine unit converters and chain search over the converter graph."""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from semdeg.semstore import OntologyTriple

REL_TOL = 1e-9
ABS_TOL = 1e-12

# Vocabulary of the chain serialization (version 1).
CHAIN_SCHEMA = "chain-triples/1"
CHAIN_NODE = "chain"
CONVERTS_FROM = "convertsFrom"
CONVERTS_TO = "convertsTo"
PRECEDES = "precedes"
CHAIN_HEAD = "startsWith"
IDENTITY_ON = "identityOn"


class UnitError(Exception):
    pass


class DegenerateConverter(UnitError):
    pass


class NoConverterPath(UnitError):
    pass


class UnitMismatch(UnitError):
    pass


def close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=REL_TOL, abs_tol=ABS_TOL)


@dataclass(frozen=True)
class Quantity:
    magnitude: float
    unit: Optional[str] = None  # None means dimensionless

    def __str__(self) -> str:
        return f"{self.magnitude:g} {self.unit}" if self.unit else f"{self.magnitude:g}"


@dataclass(frozen=True)
class Converter:
    """y = scale * x + offset, from ``source`` to ``target``."""

    id: str
    source: str
    target: str
    scale: float
    offset: float = 0.0

    def __post_init__(self) -> None:
        if self.scale == 0 or not math.isfinite(self.scale) or not math.isfinite(self.offset):
            raise DegenerateConverter(f"{self.id}: scale must be finite and non-zero")
        if self.source == self.target:
            raise DegenerateConverter(f"{self.id}: source and target are both {self.source!r}")

    def __call__(self, x: float) -> float:
        return self.scale * x + self.offset


@dataclass(frozen=True)
class ConverterChain:
    steps: tuple[Converter, ...]
    source: Optional[str] = None
    target: Optional[str] = None

    def __post_init__(self) -> None:
        if self.steps:
            for a, b in zip(self.steps, self.steps[1:]):
                if a.target != b.source:
                    raise UnitMismatch(f"{a.id} ends in {a.target!r} but {b.id} starts at {b.source!r}")
            object.__setattr__(self, "source", self.steps[0].source)
            object.__setattr__(self, "target", self.steps[-1].target)
        elif self.source != self.target:
            raise UnitMismatch("an empty chain must have equal source and target")

    @classmethod
    def identity(cls, unit: Optional[str] = None) -> ConverterChain:
        return cls((), unit, unit)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.steps)

    @property
    def composed(self) -> tuple[float, float]:
        scale, offset = 1.0, 0.0
        for s in self.steps:
            # s(a*x + b) = s.scale*a*x + (s.scale*b + s.offset)
            scale, offset = s.scale * scale, s.scale * offset + s.offset
        return scale, offset

    def __len__(self) -> int:
        return len(self.steps)

    def __str__(self) -> str:
        return "[" + " ".join(self.ids) + "]"


@dataclass
class ConverterRegistry:
    converters: dict[str, Converter] = field(default_factory=dict)
    units: set[str] = field(default_factory=set)

    def register_unit(self, unit: str) -> ConverterRegistry:
        self.units.add(unit)
        return self

    def register_converter(self, converter: Converter) -> ConverterRegistry:
        if converter.id in self.converters and self.converters[converter.id] != converter:
            raise ValueError(f"converter id {converter.id!r} already registered")
        self.converters[converter.id] = converter
        self.units.update((converter.source, converter.target))
        return self

    def known(self, unit: str) -> bool:
        return unit in self.units

    def edges(self) -> list[tuple[str, str]]:
        return [(c.source, c.target) for c in self.converters.values()]

    def _outgoing(self) -> dict[str, list[Converter]]:
        out: dict[str, list[Converter]] = defaultdict(list)
        for c in self.converters.values():
            out[c.source].append(c)
        for lst in out.values():
            lst.sort(key=lambda c: c.id)
        return out

    def find_chain(self, source: str, target: str) -> ConverterChain:
        """Shortest chain; ties go to the lexicographically smallest id sequence."""
        for u in (source, target):
            if not self.known(u):
                raise NoConverterPath(f"unknown unit {u!r}")
        if source == target:
            return ConverterChain.identity(source)
        out = self._outgoing()
        # Distance to target over reversed edges, then walk forward greedily.
        incoming: dict[str, list[str]] = defaultdict(list)
        for c in self.converters.values():
            incoming[c.target].append(c.source)
        dist = {target: 0}
        todo = deque([target])
        while todo:
            u = todo.popleft()
            for v in incoming[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    todo.append(v)
        if source not in dist:
            raise NoConverterPath(f"no converter path from {source!r} to {target!r}")
        steps = []
        here = source
        while here != target:
            step = next(c for c in out[here] if dist.get(c.target) == dist[here] - 1)
            steps.append(step)
            here = step.target
        return ConverterChain(tuple(steps))

    def reachable(self, source: str, target: str) -> bool:
        try:
            self.find_chain(source, target)
        except NoConverterPath:
            return False
        return True


def apply_chain(chain: ConverterChain, q: Quantity) -> Quantity:
    if not chain.steps:
        return q
    if q.unit != chain.source:
        raise UnitMismatch(f"chain starts at {chain.source!r}, quantity is in {q.unit!r}")
    scale, offset = chain.composed
    return Quantity(scale * q.magnitude + offset, chain.target)


def apply_stepwise(chain: ConverterChain, x: float) -> float:
    for s in chain.steps:
        x = s(x)
    return x


def convert(registry: ConverterRegistry, q: Quantity, target: str) -> Quantity:
    if q.unit == target:
        return q
    if q.unit is None:
        raise UnitMismatch(f"dimensionless value cannot be converted to {target!r}")
    return apply_chain(registry.find_chain(q.unit, target), q)


# ---------------------------------------------------------------------------
# Chain <-> triples


def chain_to_triples(chain: ConverterChain) -> list[OntologyTriple]:
    if not chain.steps:
        return [OntologyTriple(CHAIN_NODE, IDENTITY_ON, chain.source or "")]
    triples = [OntologyTriple(CHAIN_NODE, CHAIN_HEAD, chain.steps[0].id)]
    for s in chain.steps:
        triples.append(OntologyTriple(s.id, CONVERTS_FROM, s.source))
        triples.append(OntologyTriple(s.id, CONVERTS_TO, s.target))
    for a, b in zip(chain.steps, chain.steps[1:]):
        triples.append(OntologyTriple(a.id, PRECEDES, b.id))
    return triples


def triples_to_chain(triples: Iterable[OntologyTriple], registry: ConverterRegistry) -> ConverterChain:
    triples = list(triples)
    identity = [t for t in triples if t.subject == CHAIN_NODE and t.relation == IDENTITY_ON]
    heads = [t for t in triples if t.subject == CHAIN_NODE and t.relation == CHAIN_HEAD]
    if identity and not heads:
        return ConverterChain.identity(identity[0].object or None)
    if len(heads) != 1:
        raise ValueError("chain triples need exactly one head marker")
    nxt = {}
    declared: dict[str, dict[str, str]] = defaultdict(dict)
    for t in triples:
        if t.relation == PRECEDES:
            if t.subject in nxt:
                raise ValueError(f"{t.subject} precedes more than one step")
            nxt[t.subject] = t.object
        elif t.relation in (CONVERTS_FROM, CONVERTS_TO):
            declared[t.subject][t.relation] = t.object
    steps = []
    cur: Optional[str] = heads[0].object
    while cur is not None:
        if cur not in registry.converters:
            raise ValueError(f"converter {cur!r} not in registry")
        conv = registry.converters[cur]
        decl = declared.get(cur, {})
        if decl.get(CONVERTS_FROM, conv.source) != conv.source or decl.get(CONVERTS_TO, conv.target) != conv.target:
            raise ValueError(f"triples disagree with registry on converter {cur!r}")
        steps.append(conv)
        if len(steps) > len(triples):
            raise ValueError("precedes relation loops")
        cur = nxt.get(cur)
    return ConverterChain(tuple(steps))


# ---------------------------------------------------------------------------
# Registry file: CONV<TAB>id<TAB>source<TAB>target<TAB>scale<TAB>offset, UNIT<TAB>name


def _fmt(x: float) -> str:
    return format(x, ".12g")


def loads(text: str) -> ConverterRegistry:
    reg = ConverterRegistry()
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cols = raw.split("\t")
        try:
            if cols[0] == "CONV" and len(cols) == 6:
                reg.register_converter(Converter(cols[1], cols[2], cols[3],
                                                 float(cols[4]), float(cols[5])))
            elif cols[0] == "UNIT" and len(cols) == 2:
                reg.register_unit(cols[1])
            else:
                raise ValueError(f"malformed record {raw!r}")
        except (ValueError, UnitError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return reg


def dumps(registry: ConverterRegistry) -> str:
    lines = []
    for cid in sorted(registry.converters):
        c = registry.converters[cid]
        lines.append("\t".join(["CONV", c.id, c.source, c.target, _fmt(c.scale), _fmt(c.offset)]))
    used = {u for c in registry.converters.values() for u in (c.source, c.target)}
    for u in sorted(registry.units - used):
        lines.append(f"UNIT\t{u}")
    return "\n".join(lines) + "\n"


def load(path) -> ConverterRegistry:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def temperature_registry() -> ConverterRegistry:
    """Fahrenheit -> Kelvin (f1), Kelvin -> Celsius (f2), Celsius -> Fahrenheit (f3)."""
    reg = ConverterRegistry()
    reg.register_converter(Converter("f1", "Fahrenheit", "Kelvin", 5 / 9, 273.15 - 32 * 5 / 9))
    reg.register_converter(Converter("f2", "Kelvin", "Celsius", 1.0, -273.15))
    reg.register_converter(Converter("f3", "Celsius", "Fahrenheit", 9 / 5, 32.0))
    return reg

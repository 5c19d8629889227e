"""Product parameters to machine configurations, and port-to-signal matching."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from semdeg import constraints
from semdeg.semstore import KnowledgeBase
from semdeg.units import (
    ConverterChain,
    ConverterRegistry,
    NoConverterPath,
    Quantity,
    UnitMismatch,
    apply_chain,
)


class Provenance(enum.Enum):
    DIRECT = "direct"
    SYNONYM = "synonym"
    DERIVED = "derived"


@dataclass(frozen=True)
class RequiredParameter:
    local: str
    term: str
    unit: Optional[str]


@dataclass
class MachineProfile:
    machine: str
    required: list[RequiredParameter] = field(default_factory=list)
    derivations: dict[str, str] = field(default_factory=dict)


ParameterSet = dict[str, Quantity]


@dataclass(frozen=True)
class Resolved:
    machine: str
    local: str
    value: Quantity
    provenance: Provenance
    source: str  # product path or derivation text


@dataclass(frozen=True)
class Missing:
    machine: str
    local: str
    reason: str


@dataclass
class MappingReport:
    resolved: dict[tuple[str, str], Resolved] = field(default_factory=dict)
    missing: list[Missing] = field(default_factory=list)


def _leaf(path: str) -> str:
    return path.rsplit(".", 1)[-1]


def _canonical(kb: KnowledgeBase, term: str) -> Optional[str]:
    return kb.canonicalize(term) if kb.has_term(term) else None


def _to_unit(q: Quantity, unit: Optional[str], registry: ConverterRegistry) -> Quantity:
    if unit is None or q.unit == unit:
        return q
    if q.unit is None:
        raise UnitMismatch(f"dimensionless value where {unit} expected")
    try:
        chain = registry.find_chain(q.unit, unit)
    except NoConverterPath:
        raise UnitMismatch(f"no conversion {q.unit} -> {unit}") from None
    return apply_chain(chain, q)


def _resolve_one(machine: str, req: RequiredParameter, derivation: Optional[str],
                 product: ParameterSet, kb: KnowledgeBase,
                 registry: ConverterRegistry) -> Union[Resolved, Missing]:
    def found(path: str, how: Provenance) -> Union[Resolved, Missing]:
        try:
            value = _to_unit(product[path], req.unit, registry)
        except UnitMismatch as exc:
            return Missing(machine, req.local, f"unit mismatch: {exc}")
        return Resolved(machine, req.local, value, how, path)

    def single(candidates: list[str], how: Provenance) -> Union[Resolved, Missing, None]:
        if len(candidates) > 1:
            return Missing(machine, req.local, f"ambiguous {how.value} match: {', '.join(candidates)}")
        return found(candidates[0], how) if candidates else None

    own_path = f"{machine}.{req.local}"
    if own_path in product:
        return found(own_path, Provenance.DIRECT)
    outcome = single(sorted(p for p in product if _leaf(p) == req.local), Provenance.DIRECT)
    if outcome is not None:
        return outcome

    wanted = _canonical(kb, req.term)
    if wanted is not None:
        outcome = single(sorted(p for p in product if _canonical(kb, _leaf(p)) == wanted),
                         Provenance.SYNONYM)
        if outcome is not None:
            return outcome

    if derivation is None:
        return Missing(machine, req.local, f"no product parameter for term {req.term}")
    env = constraints.Environment(dict(product))
    try:
        value = constraints.evaluate(derivation, env, registry, kb)
        if isinstance(value, bool):
            raise constraints.EvalTypeError("derivation yields a boolean")
        value = _to_unit(value, req.unit, registry)
    except constraints.UnboundPath as exc:
        return Missing(machine, req.local, str(exc))
    except UnitMismatch as exc:
        return Missing(machine, req.local, f"unit mismatch: {exc}")
    except constraints.ConstraintError as exc:
        return Missing(machine, req.local, f"derivation failed: {exc}")
    return Resolved(machine, req.local, value, Provenance.DERIVED, derivation)


def derive_config(product: ParameterSet, machines: Iterable[MachineProfile],
                  kb: KnowledgeBase, registry: ConverterRegistry) -> MappingReport:
    """Resolve every required parameter: direct, then synonym, then derivation."""
    report = MappingReport()
    for profile in machines:
        for req in profile.required:
            result = _resolve_one(profile.machine, req, profile.derivations.get(req.local),
                                  product, kb, registry)
            if isinstance(result, Resolved):
                report.resolved[(profile.machine, req.local)] = result
            else:
                report.missing.append(result)
    report.missing.sort(key=lambda m: (m.machine, m.local))
    return report


# ---------------------------------------------------------------------------
# Signal matching


@dataclass(frozen=True)
class SignalPort:
    owner: str
    name: str
    direction: str  # "in" or "out"
    term: str
    unit: Optional[str] = None

    def __post_init__(self) -> None:
        if self.direction not in ("in", "out"):
            raise ValueError(f"{self.label}: direction must be 'in' or 'out'")

    @property
    def label(self) -> str:
        return f"{self.owner}.{self.name}"


@dataclass(frozen=True)
class Connection:
    source: SignalPort  # the "out" side
    sink: SignalPort    # the "in" side
    chain: Optional[ConverterChain] = None

    def convert(self, magnitude: float) -> float:
        if self.chain is None:
            return magnitude
        return apply_chain(self.chain, Quantity(magnitude, self.source.unit)).magnitude


@dataclass(frozen=True)
class Unmatched:
    port: SignalPort
    reason: str


@dataclass(frozen=True)
class Ambiguous:
    port: SignalPort
    candidates: tuple[SignalPort, ...]


@dataclass
class MatchReport:
    connections: list[Connection] = field(default_factory=list)
    ambiguous: list[Ambiguous] = field(default_factory=list)
    unmatched: list[Unmatched] = field(default_factory=list)


def _port_key(p: SignalPort) -> tuple[str, str]:
    return (p.owner, p.name)


def match_signals(block_ports: Iterable[SignalPort], device_ports: Iterable[SignalPort],
                  kb: KnowledgeBase, registry: ConverterRegistry) -> MatchReport:
    """Wire block ports to device ports with the same canonical term and opposite direction."""
    block_ports = sorted(block_ports, key=_port_key)
    device_ports = sorted(device_ports, key=_port_key)
    report = MatchReport()
    used: set[tuple[str, str]] = set()

    def canon(p: SignalPort) -> str:
        return kb.canonicalize(p.term) if kb.has_term(p.term) else p.term

    for bp in block_ports:
        candidates = [dp for dp in device_ports
                      if dp.direction != bp.direction and canon(dp) == canon(bp)]
        if not candidates:
            report.unmatched.append(Unmatched(bp, f"no device port for {canon(bp)} ({bp.direction})"))
            continue
        if len(candidates) > 1:
            report.ambiguous.append(Ambiguous(bp, tuple(candidates)))
            continue
        dp = candidates[0]
        if _port_key(dp) in used:
            report.unmatched.append(Unmatched(bp, f"candidate {dp.label} already connected"))
            continue
        source, sink = (bp, dp) if bp.direction == "out" else (dp, bp)
        chain = None
        if source.unit and sink.unit and source.unit != sink.unit:
            try:
                chain = registry.find_chain(source.unit, sink.unit)
            except NoConverterPath:
                report.unmatched.append(
                    Unmatched(bp, f"unit mismatch: no conversion {source.unit} -> {sink.unit}"))
                continue
        used.add(_port_key(dp))
        report.connections.append(Connection(source, sink, chain))

    ambiguous_devices = {_port_key(c) for a in report.ambiguous for c in a.candidates}
    for dp in device_ports:
        if _port_key(dp) not in used and _port_key(dp) not in ambiguous_devices:
            report.unmatched.append(Unmatched(dp, "no block port uses this signal"))
    return report


# ---------------------------------------------------------------------------
# Reports


def explain(report: Union[MappingReport, MatchReport]) -> str:
    lines = []
    if isinstance(report, MappingReport):
        if not report.missing:
            lines.append("== all parameters resolved ==")
        for key in sorted(report.resolved):
            r = report.resolved[key]
            lines.append(f"RESOLVED {r.machine}.{r.local} = {r.value} "
                         f"({r.provenance.value}: {r.source})")
        for m in report.missing:
            lines.append(f"MISSING {m.machine}.{m.local}: {m.reason}")
    else:
        if not report.ambiguous and not report.unmatched:
            lines.append("== all signals connected ==")
        for c in report.connections:
            via = f" via {c.chain} (scale {c.chain.composed[0]:g}, offset {c.chain.composed[1]:g})" if c.chain else ""
            lines.append(f"CONNECT {c.source.label} -> {c.sink.label}{via}")
        for a in report.ambiguous:
            lines.append(f"AMBIGUOUS {a.port.label}: {', '.join(c.label for c in a.candidates)}")
        for u in report.unmatched:
            lines.append(f"UNMATCHED {u.port.label}: {u.reason}")
    return "\n".join(lines) + "\n"


def report_records(report: Union[MappingReport, MatchReport]) -> str:
    """Tab-separated machine-readable form of a report."""
    rows = []
    if isinstance(report, MappingReport):
        for key in sorted(report.resolved):
            r = report.resolved[key]
            rows.append(["RESOLVED", r.machine, r.local, repr(r.value.magnitude), r.value.unit or "-",
                         r.provenance.value, r.source])
        for m in report.missing:
            rows.append(["MISSING", m.machine, m.local, m.reason])
    else:
        for c in report.connections:
            scale, offset = c.chain.composed if c.chain else (1.0, 0.0)
            rows.append(["CONNECT", c.source.label, c.sink.label, " ".join(c.chain.ids) if c.chain else "-",
                         repr(scale), repr(offset)])
        for a in report.ambiguous:
            rows.append(["AMBIGUOUS", a.port.label] + [c.label for c in a.candidates])
        for u in report.unmatched:
            rows.append(["UNMATCHED", u.port.label, u.reason])
    return "".join("\t".join(r) + "\n" for r in rows)


# ---------------------------------------------------------------------------
# Input files
#
#   PARAM<TAB>path<TAB>magnitude<TAB>unit|-
#   MACHINE<TAB>id
#   REQUIRE<TAB>machine<TAB>local<TAB>term<TAB>unit|-
#   DERIVE<TAB>machine<TAB>local<TAB>expression
#   PORT<TAB>owner<TAB>name<TAB>in|out<TAB>term<TAB>unit|-


def _unit(col: str) -> Optional[str]:
    col = col.strip()
    return None if col in ("", "-") else col


def loads_profiles(text: str) -> tuple[ParameterSet, list[MachineProfile]]:
    product: ParameterSet = {}
    profiles: dict[str, MachineProfile] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cols = raw.split("\t")
        kind = cols[0]
        try:
            if kind == "PARAM" and len(cols) == 4:
                if cols[1] in product:
                    raise ValueError(f"duplicate parameter {cols[1]}")
                product[cols[1]] = Quantity(float(cols[2]), _unit(cols[3]))
            elif kind == "MACHINE" and len(cols) == 2:
                profiles.setdefault(cols[1], MachineProfile(cols[1]))
            elif kind == "REQUIRE" and len(cols) == 5:
                profiles.setdefault(cols[1], MachineProfile(cols[1])).required.append(
                    RequiredParameter(cols[2], cols[3], _unit(cols[4])))
            elif kind == "DERIVE" and len(cols) == 4:
                constraints.parse(cols[3])
                profiles.setdefault(cols[1], MachineProfile(cols[1])).derivations[cols[2]] = cols[3]
            else:
                raise ValueError(f"malformed record {raw!r}")
        except (ValueError, constraints.ExprSyntaxError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return product, list(profiles.values())


def loads_ports(text: str) -> list[SignalPort]:
    ports = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cols = raw.split("\t")
        if cols[0] != "PORT" or len(cols) != 6:
            raise ValueError(f"line {lineno}: malformed record {raw!r}")
        try:
            ports.append(SignalPort(cols[1], cols[2], cols[3], cols[4], _unit(cols[5])))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    return ports

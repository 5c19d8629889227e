"""Boots service, bus, slaves and master on loopback and replays plug-and-sense."""

from __future__ import annotations

import asyncio
import configparser
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from semdeg import semstore, units
from semdeg.busnet.bus import Bus, Master, Slave, SlaveRejected
from semdeg.busnet.devices import DeviceDescriptor, SlaveState
from semdeg.busnet.messages import msg
from semdeg.busnet.service import I40Service, ServiceClient
from semdeg.units import Quantity

FLOAT32_TOL = 1e-6


@dataclass
class SlaveSpec:
    unit_id: int
    device_type: str
    unit: str
    sample: float


@dataclass
class Expectation:
    lifecycle: str
    chain: Optional[tuple[str, ...]] = None
    value: Optional[float] = None
    unit: Optional[str] = None
    exception: Optional[int] = None


@dataclass
class Scenario:
    kb: semstore.KnowledgeBase
    registry: units.ConverterRegistry
    mappings: list[DeviceDescriptor]
    slaves: list[SlaveSpec]
    expectations: dict[int, Expectation] = field(default_factory=dict)
    host: str = "127.0.0.1"
    service_port: int = 0
    bus_port: int = 0
    subtyping: bool = True


def _read_resource(name: str, base: Optional[Path]) -> str:
    if base is not None and (base / name).exists():
        return (base / name).read_text("utf-8")
    return resources.files("semdeg.data").joinpath(name).read_text("utf-8")


def load_scenario(path: Union[str, Path, None] = None) -> Scenario:
    """Parse a scenario file; ``None`` loads the bundled plug-and-sense setup.

    Referenced knowledge/converter files are looked up next to the scenario
    file first, then among the bundled data files.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if path is None:
        cp.read_string(_read_resource("plug_and_sense.ini", None))
        base = None
    else:
        path = Path(path)
        cp.read(path, encoding="utf-8")
        base = path.parent
    svc = cp["service"]
    kb = semstore.loads(_read_resource(svc.get("knowledge", "plug_and_sense.kb"), base))
    registry = units.loads(_read_resource(svc.get("converters", "temperature.conv"), base))
    scenario = Scenario(kb, registry, [], [], host=svc.get("host", "127.0.0.1"),
                        service_port=svc.getint("port", 0),
                        bus_port=cp.getint("bus", "port", fallback=0),
                        subtyping=svc.getboolean("subtyping", True))
    for name in cp.sections():
        kind, _, ident = name.partition(" ")
        if not ident:
            continue
        sec = cp[name]
        uid = int(ident)
        if kind == "mapping":
            scenario.mappings.append(DeviceDescriptor(uid, sec["device_type"], sec["unit"],
                                                      sec.getint("register_base", 0)))
        elif kind == "slave":
            scenario.slaves.append(SlaveSpec(uid, sec["device_type"], sec["unit"],
                                             sec.getfloat("sample")))
        elif kind == "expect":
            scenario.expectations[uid] = Expectation(
                sec["lifecycle"],
                tuple(sec["chain"].split()) if "chain" in sec else None,
                sec.getfloat("value") if "value" in sec else None,
                sec.get("unit"),
                int(sec["exception"], 0) if "exception" in sec else None,
            )
        else:
            raise ValueError(f"unknown section [{name}]")
    return scenario


@dataclass
class Outcome:
    states: dict[int, SlaveState]
    readings: dict[int, Quantity]
    exceptions: dict[int, bytes]
    data_responses: dict[int, int]
    trace: list[str]
    elapsed: float
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


async def run_async(scenario: Scenario) -> Outcome:
    trace: list[str] = []
    started = time.perf_counter()
    service = I40Service(scenario.kb, scenario.registry, scenario.subtyping, trace=trace.append)
    service_server = await service.start(scenario.host, scenario.service_port)
    service_port = service_server.sockets[0].getsockname()[1]
    bus = Bus(trace=trace.append)
    bus_server = await bus.start(scenario.host, scenario.bus_port)
    bus_port = bus_server.sockets[0].getsockname()[1]

    states: dict[int, SlaveState] = {}
    readings: dict[int, Quantity] = {}
    exceptions: dict[int, bytes] = {}
    slaves: dict[int, Slave] = {}
    master = Master(scenario.host, bus_port, {d.unit_id: d for d in scenario.mappings},
                    trace=trace.append)
    try:
        engineer = ServiceClient(scenario.host, service_port)
        for d in scenario.mappings:
            trace.append(f"engineer registers unit {d.unit_id}: {d.device_type} [{d.native_unit}]")
            reply = await engineer.request(msg("REGISTER_MAPPING", slave=d.unit_id,
                                               device_type=d.device_type, unit=d.native_unit,
                                               register_base=d.register_base))
            if reply.verb != "OK":
                raise RuntimeError(f"mapping for unit {d.unit_id} refused: {reply.fields}")
        await engineer.close()

        # Slaves plug in one after another so the trace is deterministic.
        for spec in scenario.slaves:
            slave = Slave(spec.unit_id, spec.device_type, spec.unit, spec.sample, trace=trace.append)
            client = ServiceClient(scenario.host, service_port)
            try:
                states[spec.unit_id] = await slave.plug(client)
            finally:
                await client.close()
            bus.attach(slave)
            slaves[spec.unit_id] = slave

        for spec in scenario.slaves:
            if spec.unit_id not in master.io_map:
                continue
            try:
                readings[spec.unit_id] = await master.read(spec.unit_id)
            except SlaveRejected as exc:
                exceptions[spec.unit_id] = exc.frame
    finally:
        await master.close()
        for server in (bus_server, service_server):
            server.close()
            await server.wait_closed()

    outcome = Outcome(states, readings, exceptions,
                      {uid: s.data_responses for uid, s in slaves.items()},
                      trace, time.perf_counter() - started, [])
    outcome.failures = check(scenario, outcome)
    return outcome


def run(scenario: Optional[Scenario] = None) -> Outcome:
    return asyncio.run(run_async(scenario or load_scenario()))


def check(scenario: Scenario, outcome: Outcome) -> list[str]:
    failures = []
    for uid, exp in sorted(scenario.expectations.items()):
        state = outcome.states.get(uid)
        if state is None or str(state.lifecycle) != exp.lifecycle:
            failures.append(f"unit {uid}: lifecycle {state.lifecycle if state else None}, "
                            f"expected {exp.lifecycle}")
        if exp.chain is not None:
            got = state.active_chain.ids if state and state.active_chain else ()
            if got != exp.chain:
                failures.append(f"unit {uid}: chain {list(got)}, expected {list(exp.chain)}")
        if exp.value is not None:
            q = outcome.readings.get(uid)
            if q is None or q.unit != exp.unit or abs(q.magnitude - exp.value) > FLOAT32_TOL * max(1.0, abs(exp.value)):
                failures.append(f"unit {uid}: delivered {q}, expected {exp.value:g} {exp.unit}")
        if exp.exception is not None:
            frame = outcome.exceptions.get(uid)
            if frame is None or frame[-3:] != bytes([uid, 0x83, exp.exception]):
                failures.append(f"unit {uid}: exception frame {frame.hex(' ') if frame else None}")
            if outcome.data_responses.get(uid, 0):
                failures.append(f"unit {uid}: rejected slave sent data")
    return failures

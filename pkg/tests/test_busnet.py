import asyncio
import random
import struct

import pytest
from hypothesis import given, strategies as st

from semdeg.busnet import codec, harness, messages
from semdeg.busnet.bus import Bus, Master, Slave, SlaveRejected
from semdeg.busnet.devices import DeviceDescriptor, Lifecycle, SlaveState, decide, type_matches
from semdeg.busnet.messages import MessageError, ServiceMessage, msg
from semdeg.busnet.service import I40Service, ServiceClient, ServiceUnreachable
from semdeg.units import ConverterChain, Quantity, apply_chain, temperature_registry

HEX = bytes.fromhex


# ---------------------------------------------------------------------------
# codec

def test_read_request_bytes():
    frame = codec.MbapFrame(1, 1, codec.read_request(0, 2))
    assert codec.encode_frame(frame) == HEX("00 01 00 00 00 06 01 03 00 00 00 02")


def test_float_response_bytes():
    regs = codec.float_to_registers(25.0)
    assert regs == [0x41C8, 0x0000]
    # independent bit oracle
    assert struct.unpack(">I", struct.pack(">f", 25.0))[0] == 0x41C80000
    frame = codec.MbapFrame(1, 1, codec.read_response(regs))
    assert codec.encode_frame(frame) == HEX("00 01 00 00 00 07 01 03 04 41 C8 00 00")


def test_exception_bytes():
    frame = codec.MbapFrame(1, 1, codec.exception_response(0x03, 0x04))
    assert codec.encode_frame(frame) == HEX("00 01 00 00 00 03 01 83 04")
    assert codec.parse_exception(frame.pdu) == (0x03, 0x04)
    assert frame.is_exception and frame.supported


def test_write_pdus_round_trip():
    pdu = codec.write_request(10, [1, 2, 0xFFFF])
    assert codec.parse_write_request(pdu) == (10, [1, 2, 0xFFFF])
    assert codec.parse_write_response(codec.write_response(10, 3)) == (10, 3)


def test_decode_errors():
    with pytest.raises(codec.ShortFrame):
        codec.decode_frame(HEX("00 01 00 00 00 02 01"))
    with pytest.raises(codec.LengthMismatch):
        codec.decode_frame(HEX("00 01 00 00 00 07 01 03 00 00 00 02"))
    with pytest.raises(codec.BadProtocolId):
        codec.decode_frame(HEX("00 01 00 01 00 06 01 03 00 00 00 02"))
    odd = HEX("00 01 00 00 00 02 01 2B")
    assert not codec.decode_frame(odd).supported
    with pytest.raises(codec.UnsupportedFunction):
        codec.decode_frame(odd, strict=True)


def test_expected_size():
    assert codec.expected_size(HEX("00 01 00 00 00 06 01")) == 12
    with pytest.raises(codec.LengthMismatch):
        codec.expected_size(HEX("00 01 00 00 01 00 01"))


frames = st.builds(
    codec.MbapFrame,
    st.integers(0, 0xFFFF), st.integers(0, 0xFF),
    st.binary(min_size=1, max_size=253),
)


@given(frames)
def test_codec_round_trip(frame):
    assert codec.decode_frame(codec.encode_frame(frame)) == frame


@given(frames, st.integers(0, 0xFFFF))
def test_mutated_length_field_rejected(frame, new_length):
    raw = bytearray(codec.encode_frame(frame))
    if new_length == frame.length:
        return
    raw[4:6] = new_length.to_bytes(2, "big")
    with pytest.raises(codec.LengthMismatch):
        codec.decode_frame(bytes(raw))


def test_small_payloads_exhaustive():
    for fn in (0x03, 0x10, 0x83, 0x90):
        for b in range(256):
            f = codec.MbapFrame(b * 257, b, bytes([fn, b]))
            assert codec.decode_frame(codec.encode_frame(f)) == f


@given(st.floats(-3e38, 3e38, allow_nan=False))
def test_float_registers_round_trip(x):
    back = codec.registers_to_float(codec.float_to_registers(x))
    assert back == struct.unpack(">f", struct.pack(">f", x))[0]


# ---------------------------------------------------------------------------
# messages

def test_message_round_trip_with_quoting():
    m = msg("ERR", reason="NoConverterPath", detail='no path from "F" to K = x\\y')
    line = messages.encode(m)
    assert line.endswith("\n") and line.count("\n") == 1
    assert messages.decode(line) == m


@given(st.dictionaries(st.from_regex(r"[a-z_]{1,8}", fullmatch=True),
                       st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc")), max_size=20),
                       max_size=5))
def test_message_round_trip_property(fields):
    m = ServiceMessage("OK", fields)
    assert messages.decode(messages.encode(m)) == m


@pytest.mark.parametrize("line", ["", "HELLO x=1", "OK novalue", "OK a=1 a=2", 'OK a="open'])
def test_message_errors(line):
    with pytest.raises(MessageError):
        messages.decode(line)


def test_triples_packing():
    t = [("chain", "startsWith", "f1"), ("f1", "convertsFrom", "Fahrenheit")]
    assert messages.unpack_triples(messages.pack_triples(t)) == t
    assert messages.unpack_triples("") == []
    with pytest.raises(MessageError):
        messages.pack_triples([("a|b", "r", "o")])


# ---------------------------------------------------------------------------
# service

@pytest.fixture
def scenario():
    return harness.load_scenario()


@pytest.fixture
def service(scenario):
    return I40Service(scenario.kb, scenario.registry)


def test_register_mapping(service):
    d = DeviceDescriptor(1, "temperature-sensor", "Celsius")
    assert service.register_mapping(d) == msg("OK", slave=1, overwrite="false")
    assert service.register_mapping(d)["overwrite"] == "true"
    bad_unit = service.handle(msg("REGISTER_MAPPING", slave=2, device_type="sensor", unit="Furlong"))
    assert bad_unit["reason"] == "UnknownUnitTerm"
    bad_type = service.handle(msg("REGISTER_MAPPING", slave=2, device_type="toaster", unit="Celsius"))
    assert bad_type["reason"] == "UnknownDeviceType"


def test_query_expected(service):
    service.register_mapping(DeviceDescriptor(1, "temperature-sensor", "Celsius"))
    r = service.handle(msg("QUERY_EXPECTED", slave=1, device_type="thermocouple"))
    assert r.verb == "EXPECTED" and r["unit"] == "Celsius" and r["type_match"] == "true"
    r = service.handle(msg("QUERY_EXPECTED", slave=1, device_type="pressure-sensor"))
    assert r["type_match"] == "false"
    r = service.handle(msg("QUERY_EXPECTED", slave=1, device_type="Bluetooth-Device_000A3A58F310"))
    assert r["type_match"] == "true"
    assert service.handle(msg("QUERY_EXPECTED", slave=9))["reason"] == "NoMappingRegistered"


def test_request_converter(service):
    r = service.request_converter("Fahrenheit", "Celsius")
    assert r.verb == "CHAIN" and r["steps"] == "f1 f2"
    assert messages.unpack_triples(r["triples"])[0] == ("chain", "startsWith", "f1")
    same = service.request_converter("Celsius", "Celsius")
    assert same["steps"] == "" and same["triples"] == "chain|identityOn|Celsius"
    assert service.request_converter("Fahrenheit", "Kilogram")["reason"] == "NoConverterPath"
    assert service.request_converter("Furlong", "Celsius")["reason"] == "UnknownUnitTerm"


def test_handle_line_bad_requests(service):
    assert messages.decode(service.handle_line("garbage\n"))["reason"] == "BadRequest"
    assert messages.decode(service.handle_line("OK\n"))["reason"] == "BadRequest"
    assert messages.decode(service.handle_line("QUERY_EXPECTED\n"))["reason"] == "BadRequest"


# ---------------------------------------------------------------------------
# acceptance decision

def test_decide_cases(scenario):
    kb, reg = scenario.kb, scenario.registry
    slot = DeviceDescriptor(1, "temperature-sensor", "Celsius")
    cond = decide(slot, "temperature-sensor", "Fahrenheit", kb, reg)
    assert cond.lifecycle is Lifecycle.CONDITIONALLY_ACCEPTED and cond.active_chain.ids == ("f1", "f2")
    assert str(cond) == "ConditionallyAccepted [f1 f2]"
    assert decide(slot, "temperature-sensor", "Celsius", kb, reg).lifecycle is Lifecycle.ACCEPTED
    assert decide(slot, "thermocouple", "Celsius", kb, reg).lifecycle is Lifecycle.ACCEPTED
    assert decide(slot, "thermocouple", "Celsius", kb, reg, subtyping=False).lifecycle is Lifecycle.REJECTED
    assert decide(slot, "pressure-sensor", "Pascal", kb, reg).lifecycle is Lifecycle.REJECTED
    assert decide(slot, "temperature-sensor", "Kilogram", kb, reg).lifecycle is Lifecycle.REJECTED


def test_decide_is_replayable(scenario):
    rng = random.Random(3)
    types = ["temperature-sensor", "thermocouple", "pressure-sensor", "sensor", "device"]
    unit_names = ["Celsius", "Fahrenheit", "Kelvin", "Pascal", "Kilogram"]
    for _ in range(200):
        slot = DeviceDescriptor(rng.randint(1, 247), rng.choice(types), rng.choice(unit_names))
        args = (slot, rng.choice(types), rng.choice(unit_names), scenario.kb, scenario.registry)
        assert decide(*args) == decide(*args)


def test_slave_state_invariant(scenario):
    chain = scenario.registry.find_chain("Fahrenheit", "Celsius")
    with pytest.raises(ValueError):
        SlaveState(Lifecycle.ACCEPTED, chain)
    with pytest.raises(ValueError):
        SlaveState(Lifecycle.CONDITIONALLY_ACCEPTED, ConverterChain.identity("Celsius"))
    assert type_matches(scenario.kb, "x", "x")


# ---------------------------------------------------------------------------
# slave / bus without sockets

def test_unvalidated_slave_serves_no_data():
    s = Slave(1, "temperature-sensor", "Celsius", 20.0)
    assert s.handle_pdu(codec.read_request(0, 2)) == bytes([0x83, 0x04])
    assert s.data_responses == 0


def test_bus_unknown_unit():
    bus = Bus()
    reply = bus.handle(codec.encode_frame(codec.MbapFrame(7, 9, codec.read_request(0, 2))))
    assert reply == HEX("00 07 00 00 00 03 09 83 0B")


# ---------------------------------------------------------------------------
# end to end over loopback

def test_plug_and_sense_end_to_end():
    outcome = harness.run()
    assert outcome.ok, outcome.failures
    assert outcome.readings[1].unit == "Celsius"
    assert abs(outcome.readings[1].magnitude - 25.0) < 1e-6
    assert outcome.exceptions[3][-3:] == HEX("03 83 04")
    assert outcome.data_responses[3] == 0
    text = "\n".join(outcome.trace)
    assert "QUERY_EXPECTED" in text and "ConditionallyAccepted [f1 f2]" in text


@given(st.floats(-400, 1000, allow_nan=False))
def test_delivered_value_matches_chain(raw):
    base = harness.load_scenario()
    scen = harness.Scenario(base.kb, base.registry,
                            [DeviceDescriptor(1, "temperature-sensor", "Celsius")],
                            [harness.SlaveSpec(1, "temperature-sensor", "Fahrenheit", raw)])
    outcome = harness.run(scen)
    expected = apply_chain(outcome.states[1].active_chain, Quantity(raw, "Fahrenheit")).magnitude
    got = outcome.readings[1].magnitude
    assert abs(got - expected) <= 1e-6 * max(1.0, abs(expected))


def test_rejected_slave_never_sends_data():
    base = harness.load_scenario()
    scen = harness.Scenario(base.kb, base.registry,
                            [DeviceDescriptor(5, "temperature-sensor", "Celsius")],
                            [harness.SlaveSpec(5, "pressure-sensor", "Pascal", 1.0),
                             harness.SlaveSpec(6, "temperature-sensor", "Celsius", 1.0)])
    outcome = harness.run(scen)
    assert outcome.states[5].lifecycle is Lifecycle.REJECTED
    assert outcome.states[6].reason == "NoMappingRegistered"
    assert all(n == 0 for n in outcome.data_responses.values())
    assert not any("deliver" in line for line in outcome.trace)


def test_service_unreachable():
    async def go():
        client = ServiceClient("127.0.0.1", 1, timeout=0.5)
        await client.request(msg("QUERY_EXPECTED", slave=1))
    with pytest.raises(ServiceUnreachable):
        asyncio.run(go())


def test_master_surfaces_rejection():
    async def go():
        bus = Bus()
        slave = Slave(2, "pressure-sensor", "Pascal", 1.0)
        slave.state = SlaveState(Lifecycle.REJECTED, reason="test")
        bus.attach(slave)
        server = await bus.start("127.0.0.1", 0)
        port = server.sockets[0].getsockname()[1]
        master = Master("127.0.0.1", port, {2: DeviceDescriptor(2, "temperature-sensor", "Celsius")})
        try:
            await master.read(2)
        finally:
            await master.close()
            server.close()
            await server.wait_closed()
    with pytest.raises(SlaveRejected) as info:
        asyncio.run(go())
    assert info.value.code == 0x04


def test_temperature_registry_fixture_consistent(scenario):
    assert scenario.registry.find_chain("Fahrenheit", "Celsius").ids == \
        temperature_registry().find_chain("Fahrenheit", "Celsius").ids

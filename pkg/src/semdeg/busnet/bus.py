"""Data plane: smart slaves behind a Modbus-TCP bus gateway, and the master.

Slaves sit on one bus addressed by unit id.  The gateway accepts any number
of master connections; each connection is served sequentially.
"""

from __future__ import annotations

import asyncio
from typing import Callable, Optional, Union

from semdeg.busnet import codec, messages
from semdeg.busnet.devices import DeviceDescriptor, Lifecycle, SlaveState, judge
from semdeg.busnet.service import ServiceClient, unpack_converters
from semdeg.busnet.messages import msg
from semdeg.units import ConverterRegistry, Quantity, apply_chain, triples_to_chain

DEFAULT_PORT = 1502
EXC_GATEWAY_TARGET = 0x0B

Trace = Callable[[str], None]


def _hex(data: bytes) -> str:
    return data.hex(" ").upper()


class Slave:
    """A smart sensor that validates itself against the service before serving data."""

    def __init__(self, unit_id: int, device_type: str, native_unit: str,
                 sample: Union[float, Callable[[], float]], trace: Optional[Trace] = None):
        self.unit_id = unit_id
        self.device_type = device_type
        self.native_unit = native_unit
        self._sample = sample
        self.state = SlaveState()
        self.expected: Optional[DeviceDescriptor] = None
        self.registers: dict[int, int] = {}
        self.data_responses = 0
        self._trace = trace or (lambda line: None)

    def raw_sample(self) -> float:
        return self._sample() if callable(self._sample) else float(self._sample)

    def reading(self) -> Quantity:
        raw = Quantity(self.raw_sample(), self.native_unit)
        if self.state.active_chain is not None:
            return apply_chain(self.state.active_chain, raw)
        return raw

    async def plug(self, service: ServiceClient) -> SlaveState:
        t = self._trace
        t(f"slave {self.unit_id} plugged: {self.device_type} [{self.native_unit}]")
        reply = await service.request(msg("QUERY_EXPECTED", slave=self.unit_id,
                                          device_type=self.device_type))
        if reply.verb == "ERR":
            self.state = SlaveState(Lifecycle.REJECTED, reason=reply.get("reason", "ERR"))
            t(f"slave {self.unit_id} state {self.state}")
            return self.state
        expected = DeviceDescriptor(self.unit_id, reply["device_type"], reply["unit"],
                                    int(reply["register_base"]))
        self.expected = expected
        matches = reply.get("type_match") == "true"
        chain = None
        if matches and expected.native_unit != self.native_unit:
            conv = await service.request(msg("REQUEST_CONVERTER", source=self.native_unit,
                                             target=expected.native_unit))
            if conv.verb == "CHAIN":
                local = ConverterRegistry()
                for c in unpack_converters(conv.get("defs", "")):
                    local.register_converter(c)
                chain = triples_to_chain(messages.unpack_triples(conv["triples"]), local)
                t(f"slave {self.unit_id} received chain {chain}")
            else:
                t(f"slave {self.unit_id} converter request failed: {conv.get('reason')}")
        self.state = judge(matches, expected.native_unit, self.native_unit, chain)
        t(f"slave {self.unit_id} state {self.state}")
        return self.state

    def handle_pdu(self, pdu: bytes) -> bytes:
        function = pdu[0]
        if not self.state.lifecycle.serves_data:
            return codec.exception_response(function, codec.EXC_DEVICE_FAILURE)
        if function == codec.READ_HOLDING_REGISTERS:
            try:
                address, quantity = codec.parse_read_request(pdu)
            except codec.PduError:
                return codec.exception_response(function, codec.EXC_ILLEGAL_VALUE)
            base = self.expected.register_base if self.expected else 0
            if (address, quantity) != (base, 2):
                return codec.exception_response(function, codec.EXC_ILLEGAL_ADDRESS)
            try:
                registers = codec.float_to_registers(self.reading().magnitude)
            except OverflowError:
                return codec.exception_response(function, codec.EXC_DEVICE_FAILURE)
            self.data_responses += 1
            return codec.read_response(registers)
        if function == codec.WRITE_MULTIPLE_REGISTERS:
            try:
                address, values = codec.parse_write_request(pdu)
            except codec.PduError:
                return codec.exception_response(function, codec.EXC_ILLEGAL_VALUE)
            for i, v in enumerate(values):
                self.registers[address + i] = v
            return codec.write_response(address, len(values))
        return codec.exception_response(function, codec.EXC_ILLEGAL_FUNCTION)


class Bus:
    """Modbus-TCP gateway routing frames to attached slaves by unit id."""

    def __init__(self, trace: Optional[Trace] = None):
        self.slaves: dict[int, Slave] = {}
        self._trace = trace or (lambda line: None)

    def attach(self, slave: Slave) -> None:
        if slave.unit_id in self.slaves:
            raise ValueError(f"unit id {slave.unit_id} already on the bus")
        self.slaves[slave.unit_id] = slave

    def handle(self, raw: bytes) -> Optional[bytes]:
        try:
            request = codec.decode_frame(raw)
        except codec.FrameError:
            return None
        slave = self.slaves.get(request.unit_id)
        if slave is None:
            pdu = codec.exception_response(request.function, EXC_GATEWAY_TARGET)
        else:
            pdu = slave.handle_pdu(request.pdu)
        response = codec.encode_frame(codec.MbapFrame(request.transaction_id, request.unit_id, pdu))
        self._trace(f"bus unit {request.unit_id}: {_hex(raw)} -> {_hex(response)}")
        return response

    async def _client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            while True:
                raw = await codec.read_frame(reader)
                response = self.handle(raw)
                if response is None:
                    break
                writer.write(response)
                await writer.drain()
        except (asyncio.IncompleteReadError, ConnectionError, codec.FrameError):
            pass
        finally:
            writer.close()

    async def start(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT) -> asyncio.AbstractServer:
        return await asyncio.start_server(self._client, host, port)


class SlaveRejected(Exception):
    def __init__(self, unit_id: int, code: int, frame: bytes):
        super().__init__(f"slave {unit_id} answered exception 0x{code:02X}")
        self.unit_id = unit_id
        self.code = code
        self.frame = frame


class Timeout(Exception):
    pass


class Master:
    """PLC side: reads mapped slaves and interprets values in the mapped unit."""

    def __init__(self, host: str, port: int, io_map: dict[int, DeviceDescriptor],
                 timeout: float = 2.0, trace: Optional[Trace] = None):
        self.host, self.port, self.timeout = host, port, timeout
        self.io_map = io_map
        self._txn = 0
        self._reader: Optional[asyncio.StreamReader] = None
        self._writer: Optional[asyncio.StreamWriter] = None
        self._trace = trace or (lambda line: None)
        self.responses: list[bytes] = []

    async def connect(self) -> None:
        self._reader, self._writer = await asyncio.wait_for(
            asyncio.open_connection(self.host, self.port), self.timeout)

    async def transact(self, unit_id: int, pdu: bytes) -> codec.MbapFrame:
        if self._writer is None:
            await self.connect()
        assert self._reader is not None and self._writer is not None
        self._txn = (self._txn + 1) & 0xFFFF
        request = codec.MbapFrame(self._txn, unit_id, pdu)
        self._writer.write(codec.encode_frame(request))
        await self._writer.drain()
        try:
            raw = await asyncio.wait_for(codec.read_frame(self._reader), self.timeout)
        except asyncio.TimeoutError:
            raise Timeout(f"no answer from unit {unit_id} within {self.timeout}s") from None
        self.responses.append(raw)
        response = codec.decode_frame(raw, strict=True)
        if response.transaction_id != request.transaction_id or response.unit_id != unit_id:
            raise codec.FrameError("response does not match request")
        if response.is_exception:
            _, code = codec.parse_exception(response.pdu)
            self._trace(f"master read unit {unit_id}: exception 0x{code:02X} [{_hex(raw)}]")
            raise SlaveRejected(unit_id, code, raw)
        return response

    async def read(self, unit_id: int) -> Quantity:
        descriptor = self.io_map[unit_id]
        response = await self.transact(unit_id, codec.read_request(descriptor.register_base, 2))
        value = codec.registers_to_float(codec.parse_read_response(response.pdu))
        q = Quantity(value, descriptor.native_unit)
        self._trace(f"master read unit {unit_id}: deliver {q}")
        return q

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except ConnectionError:
                pass
            self._writer = None

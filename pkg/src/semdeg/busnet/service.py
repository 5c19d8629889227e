"""The I4.0 service: expected-device mappings, type reasoning, converter delivery."""

from __future__ import annotations

import asyncio
import logging
from typing import Callable, Optional

from semdeg.busnet import messages
from semdeg.busnet.devices import DeviceDescriptor, type_matches
from semdeg.busnet.messages import MessageError, ServiceMessage, msg
from semdeg.semstore import KnowledgeBase
from semdeg.units import Converter, ConverterChain, ConverterRegistry, NoConverterPath, chain_to_triples

log = logging.getLogger(__name__)

DEFAULT_PORT = 15020


def pack_converters(chain: ConverterChain) -> str:
    return ";".join(f"{c.id}|{c.source}|{c.target}|{c.scale!r}|{c.offset!r}" for c in chain.steps)


def unpack_converters(text: str) -> list[Converter]:
    out = []
    for chunk in filter(None, text.split(";")):
        parts = chunk.split("|")
        if len(parts) != 5:
            raise MessageError(f"bad converter definition {chunk!r}")
        out.append(Converter(parts[0], parts[1], parts[2], float(parts[3]), float(parts[4])))
    return out


class I40Service:
    def __init__(self, kb: KnowledgeBase, registry: ConverterRegistry, subtyping: bool = True,
                 trace: Optional[Callable[[str], None]] = None):
        self.kb = kb
        self.registry = registry
        self.subtyping = subtyping
        self.mappings: dict[int, DeviceDescriptor] = {}
        self._trace = trace or (lambda line: None)

    # -- direct API ----------------------------------------------------------

    def register_mapping(self, descriptor: DeviceDescriptor) -> ServiceMessage:
        return self.handle(msg("REGISTER_MAPPING", slave=descriptor.unit_id,
                               device_type=descriptor.device_type,
                               unit=descriptor.native_unit,
                               register_base=descriptor.register_base))

    def request_converter(self, source: str, target: str) -> ServiceMessage:
        return self.handle(msg("REQUEST_CONVERTER", source=source, target=target))

    # -- protocol ------------------------------------------------------------

    def handle(self, request: ServiceMessage) -> ServiceMessage:
        try:
            if request.verb == "REGISTER_MAPPING":
                return self._register(request)
            if request.verb == "QUERY_EXPECTED":
                return self._query(request)
            if request.verb == "REQUEST_CONVERTER":
                return self._converter(request)
            return msg("ERR", reason="BadRequest", detail=f"{request.verb} is a reply verb")
        except (MessageError, ValueError) as exc:
            return msg("ERR", reason="BadRequest", detail=str(exc))

    def handle_line(self, line: str) -> str:
        try:
            request = messages.decode(line)
        except MessageError as exc:
            reply = msg("ERR", reason="BadRequest", detail=str(exc))
            self._trace(f"service <- (malformed) {line.strip()}")
        else:
            self._trace(f"service <- {messages.encode(request).strip()}")
            reply = self.handle(request)
        out = messages.encode(reply)
        self._trace(f"service -> {out.strip()}")
        return out

    def _register(self, m: ServiceMessage) -> ServiceMessage:
        unit_id = int(m["slave"])
        dtype, unit = m["device_type"], m["unit"]
        if not self.kb.has_term(dtype):
            return msg("ERR", reason="UnknownDeviceType", detail=dtype)
        if not self.kb.has_term(unit):
            return msg("ERR", reason="UnknownUnitTerm", detail=unit)
        descriptor = DeviceDescriptor(unit_id, dtype, unit, int(m.get("register_base", "0")))
        overwrite = unit_id in self.mappings
        if overwrite:
            log.warning("mapping for slave %d overwritten", unit_id)
        self.mappings[unit_id] = descriptor
        return msg("OK", slave=unit_id, overwrite=str(overwrite).lower())

    def _query(self, m: ServiceMessage) -> ServiceMessage:
        unit_id = int(m["slave"])
        expected = self.mappings.get(unit_id)
        if expected is None:
            return msg("ERR", reason="NoMappingRegistered", detail=f"slave {unit_id}")
        fields = dict(slave=unit_id, device_type=expected.device_type, unit=expected.native_unit,
                      register_base=expected.register_base)
        actual = m.get("device_type")
        if actual is not None:
            fields["type_match"] = str(
                type_matches(self.kb, actual, expected.device_type, self.subtyping)).lower()
        return msg("EXPECTED", **fields)

    def _converter(self, m: ServiceMessage) -> ServiceMessage:
        source, target = m["source"], m["target"]
        for u in (source, target):
            if not self.kb.has_term(u) and not self.registry.known(u):
                return msg("ERR", reason="UnknownUnitTerm", detail=u)
        if source == target:
            chain = ConverterChain.identity(source)
        else:
            try:
                chain = self.registry.find_chain(source, target)
            except NoConverterPath as exc:
                return msg("ERR", reason="NoConverterPath", detail=str(exc))
        return msg("CHAIN", source=source, target=target, steps=" ".join(chain.ids),
                   triples=messages.pack_triples(chain_to_triples(chain)),
                   defs=pack_converters(chain))

    # -- network -------------------------------------------------------------

    async def _client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                writer.write(self.handle_line(line.decode("utf-8", "replace")).encode("utf-8"))
                await writer.drain()
        except ConnectionError:
            pass
        finally:
            writer.close()

    async def start(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT) -> asyncio.AbstractServer:
        return await asyncio.start_server(self._client, host, port)


class ServiceUnreachable(ConnectionError):
    pass


class ServiceClient:
    """Sequential request/response client for the service plane."""

    def __init__(self, host: str, port: int, timeout: float = 2.0):
        self.host, self.port, self.timeout = host, port, timeout
        self._reader: Optional[asyncio.StreamReader] = None
        self._writer: Optional[asyncio.StreamWriter] = None

    async def connect(self) -> None:
        try:
            self._reader, self._writer = await asyncio.wait_for(
                asyncio.open_connection(self.host, self.port), self.timeout)
        except (OSError, asyncio.TimeoutError) as exc:
            raise ServiceUnreachable(f"{self.host}:{self.port}: {exc}") from None

    async def request(self, message: ServiceMessage) -> ServiceMessage:
        if self._writer is None:
            await self.connect()
        assert self._reader is not None and self._writer is not None
        try:
            self._writer.write(messages.encode(message).encode("utf-8"))
            await self._writer.drain()
            line = await asyncio.wait_for(self._reader.readline(), self.timeout)
        except (OSError, asyncio.TimeoutError) as exc:
            raise ServiceUnreachable(str(exc) or type(exc).__name__) from None
        if not line:
            raise ServiceUnreachable("connection closed by service")
        return messages.decode(line.decode("utf-8"))

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except ConnectionError:
                pass
            self._writer = None

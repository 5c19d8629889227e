"""Modbus-TCP framing (MBAP header + PDU), subset: functions 0x03 and 0x10."""

from __future__ import annotations

import struct
from dataclasses import dataclass

READ_HOLDING_REGISTERS = 0x03
WRITE_MULTIPLE_REGISTERS = 0x10
EXCEPTION_FLAG = 0x80
SUPPORTED_FUNCTIONS = frozenset({
    READ_HOLDING_REGISTERS,
    WRITE_MULTIPLE_REGISTERS,
    READ_HOLDING_REGISTERS | EXCEPTION_FLAG,
    WRITE_MULTIPLE_REGISTERS | EXCEPTION_FLAG,
})

EXC_ILLEGAL_FUNCTION = 0x01
EXC_ILLEGAL_ADDRESS = 0x02
EXC_ILLEGAL_VALUE = 0x03
EXC_DEVICE_FAILURE = 0x04

HEADER_SIZE = 7
MIN_FRAME = 8
# Modbus caps the ADU at 260 bytes: 6 header bytes + unit id + 253 PDU bytes.
MAX_LENGTH_FIELD = 254


class FrameError(ValueError):
    pass


class ShortFrame(FrameError):
    pass


class LengthMismatch(FrameError):
    pass


class UnsupportedFunction(FrameError):
    pass


class BadProtocolId(FrameError):
    pass


class PduError(FrameError):
    pass


@dataclass(frozen=True)
class MbapFrame:
    transaction_id: int
    unit_id: int
    pdu: bytes
    protocol_id: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.transaction_id <= 0xFFFF:
            raise ValueError("transaction id out of range")
        if not 0 <= self.unit_id <= 0xFF:
            raise ValueError("unit id out of range")
        if self.protocol_id != 0:
            raise BadProtocolId(f"protocol id must be 0, got {self.protocol_id}")
        if not 1 <= len(self.pdu) <= MAX_LENGTH_FIELD - 1:
            raise ValueError(f"pdu size {len(self.pdu)} out of range")

    @property
    def length(self) -> int:
        return 1 + len(self.pdu)

    @property
    def function(self) -> int:
        return self.pdu[0]

    @property
    def supported(self) -> bool:
        return self.function in SUPPORTED_FUNCTIONS

    @property
    def is_exception(self) -> bool:
        return bool(self.function & EXCEPTION_FLAG)


def encode_frame(frame: MbapFrame) -> bytes:
    return struct.pack(">HHHB", frame.transaction_id, frame.protocol_id, frame.length,
                       frame.unit_id) + frame.pdu


def decode_frame(data: bytes, strict: bool = False) -> MbapFrame:
    """Decode one complete frame.

    Frames with unsupported function codes decode normally (check
    ``frame.supported``) unless ``strict`` is set.
    """
    if len(data) < MIN_FRAME:
        raise ShortFrame(f"{len(data)} bytes, need at least {MIN_FRAME}")
    txn, proto, length, unit = struct.unpack_from(">HHHB", data)
    if proto != 0:
        raise BadProtocolId(f"protocol id {proto}")
    if length != len(data) - 6 or length > MAX_LENGTH_FIELD:
        raise LengthMismatch(f"length field {length}, frame carries {len(data) - 6}")
    frame = MbapFrame(txn, unit, bytes(data[HEADER_SIZE:]))
    if strict and not frame.supported:
        raise UnsupportedFunction(f"function 0x{frame.function:02X}")
    return frame


def expected_size(header: bytes) -> int:
    """Total frame size announced by a 7-byte MBAP header."""
    if len(header) < HEADER_SIZE:
        raise ShortFrame("incomplete header")
    _, proto, length, _ = struct.unpack_from(">HHHB", header)
    if proto != 0:
        raise BadProtocolId(f"protocol id {proto}")
    if not 2 <= length <= MAX_LENGTH_FIELD:
        raise LengthMismatch(f"length field {length}")
    return 6 + length


async def read_frame(reader) -> bytes:
    """Read one raw frame from an asyncio stream."""
    header = await reader.readexactly(HEADER_SIZE)
    rest = await reader.readexactly(expected_size(header) - HEADER_SIZE)
    return header + rest


# ---------------------------------------------------------------------------
# PDUs


def read_request(address: int, quantity: int) -> bytes:
    if not 1 <= quantity <= 125:
        raise PduError("quantity must be 1..125")
    return struct.pack(">BHH", READ_HOLDING_REGISTERS, address, quantity)


def parse_read_request(pdu: bytes) -> tuple[int, int]:
    if len(pdu) != 5 or pdu[0] != READ_HOLDING_REGISTERS:
        raise PduError("malformed read-holding-registers request")
    _, address, quantity = struct.unpack(">BHH", pdu)
    return address, quantity


def read_response(registers: list[int]) -> bytes:
    return struct.pack(f">BB{len(registers)}H", READ_HOLDING_REGISTERS, 2 * len(registers),
                       *registers)


def parse_read_response(pdu: bytes) -> list[int]:
    if len(pdu) < 2 or pdu[0] != READ_HOLDING_REGISTERS:
        raise PduError("malformed read-holding-registers response")
    count = pdu[1]
    if count % 2 or len(pdu) != 2 + count:
        raise PduError("byte count disagrees with payload")
    return list(struct.unpack(f">{count // 2}H", pdu[2:]))


def write_request(address: int, registers: list[int]) -> bytes:
    if not 1 <= len(registers) <= 123:
        raise PduError("quantity must be 1..123")
    return struct.pack(f">BHHB{len(registers)}H", WRITE_MULTIPLE_REGISTERS, address,
                       len(registers), 2 * len(registers), *registers)


def parse_write_request(pdu: bytes) -> tuple[int, list[int]]:
    if len(pdu) < 6 or pdu[0] != WRITE_MULTIPLE_REGISTERS:
        raise PduError("malformed write-multiple-registers request")
    _, address, quantity, count = struct.unpack_from(">BHHB", pdu)
    if count != 2 * quantity or len(pdu) != 6 + count:
        raise PduError("byte count disagrees with payload")
    return address, list(struct.unpack(f">{quantity}H", pdu[6:]))


def write_response(address: int, quantity: int) -> bytes:
    return struct.pack(">BHH", WRITE_MULTIPLE_REGISTERS, address, quantity)


def parse_write_response(pdu: bytes) -> tuple[int, int]:
    if len(pdu) != 5 or pdu[0] != WRITE_MULTIPLE_REGISTERS:
        raise PduError("malformed write-multiple-registers response")
    _, address, quantity = struct.unpack(">BHH", pdu)
    return address, quantity


def exception_response(function: int, code: int) -> bytes:
    return bytes([function | EXCEPTION_FLAG, code])


def parse_exception(pdu: bytes) -> tuple[int, int]:
    if len(pdu) != 2 or not pdu[0] & EXCEPTION_FLAG:
        raise PduError("not an exception response")
    return pdu[0] & ~EXCEPTION_FLAG, pdu[1]


def float_to_registers(value: float) -> list[int]:
    """IEEE-754 binary32, big-endian, high word first."""
    hi, lo = struct.unpack(">HH", struct.pack(">f", value))
    return [hi, lo]


def registers_to_float(registers: list[int]) -> float:
    if len(registers) != 2:
        raise PduError("a float spans exactly two registers")
    return struct.unpack(">f", struct.pack(">HH", *registers))[0]

"""Framed read/write protocol and ANY-pointer codecs.

Frame layout (all integers big-endian)::

    [length:2] 'L' 'P' [version:1] [kind:1] [sequence:2] [count:1] items...

``length`` counts the bytes that follow it.  Request items are
``[transport:1][db:2][bit address:3][length:2]`` with the payload appended
for writes.  Read results are ``[code:1][length:2][data]`` and write
results are a bare ``[code:1]``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Iterator, Union

MAGIC = b"LP"
VERSION = 0x01
HEADER = struct.Struct(">2sBBHB")
ITEM = struct.Struct(">BHBHH")  # transport, db, address hi byte, address lo word, length
MAX_ITEMS = 255
MAX_BYTE_OFFSET = (1 << 21) - 1

# Sequence number reserved for protocol-error responses.
PROTOCOL_ERROR_SEQUENCE = 0xFFFF

POINTER_SIZE = 10
POINTER_SYNTAX_ID = 0x10
AREA_DB = 0x84

TRANSPORT_BIT = 0x01
TRANSPORT_BYTE = 0x02


class ElemType(enum.IntEnum):
    BIT = 0x01
    BYTE = 0x02
    WORD = 0x04
    INT = 0x05
    DWORD = 0x06
    DINT = 0x07
    REAL = 0x08

    @property
    def size(self) -> int:
        """Element width in bytes; BIT reports 1 and is counted in bits."""
        return _ELEM_SIZES[self]


_ELEM_SIZES = {
    ElemType.BIT: 1,
    ElemType.BYTE: 1,
    ElemType.WORD: 2,
    ElemType.INT: 2,
    ElemType.DWORD: 4,
    ElemType.DINT: 4,
    ElemType.REAL: 4,
}


class MessageKind(enum.IntEnum):
    READ_REQUEST = 0x01
    READ_RESPONSE = 0x81
    WRITE_REQUEST = 0x05
    WRITE_RESPONSE = 0x85

    @property
    def is_request(self) -> bool:
        return not self & 0x80

    @property
    def is_read(self) -> bool:
        return (self & 0x7F) == 0x01

    @property
    def response_kind(self) -> "MessageKind":
        return MessageKind(self | 0x80)


class ReturnCode(enum.IntEnum):
    SUCCESS = 0xFF
    ADDRESS_OUT_OF_RANGE = 0x05
    ACCESS_DENIED = 0x06
    OBJECT_DOES_NOT_EXIST = 0x0A


class FrameError(ValueError):
    """Base class for frame decoding failures."""


class MalformedFrame(FrameError):
    pass


class IncompleteFrame(FrameError):
    """More bytes are needed before the frame can be decoded."""

    def __init__(self, needed: int, available: int):
        super().__init__(f"incomplete frame: need {needed} bytes, have {available}")
        self.needed = needed
        self.available = available


class EncodeError(ValueError):
    pass


class AreaError(Exception):
    """A memory access failed with a per-item return code."""

    def __init__(self, code: ReturnCode, detail: str = ""):
        super().__init__(f"{code.name}{': ' + detail if detail else ''}")
        self.code = code


class PointerSyntaxError(ValueError):
    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position}: {text!r}")
        self.text = text
        self.position = position


# --------------------------------------------------------------------------
# ANY pointers


@dataclass(frozen=True)
class AnyPointer:
    db_number: int
    byte_offset: int
    bit_offset: int = 0
    elem_type: ElemType = ElemType.BYTE
    count: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "elem_type", ElemType(self.elem_type))
        if not 0 <= self.db_number <= 0xFFFF:
            raise ValueError(f"db_number out of range: {self.db_number}")
        if not 0 <= self.byte_offset <= MAX_BYTE_OFFSET:
            raise ValueError(f"byte_offset out of range: {self.byte_offset}")
        if not 0 <= self.bit_offset <= 7:
            raise ValueError(f"bit_offset out of range: {self.bit_offset}")
        if self.bit_offset and self.elem_type is not ElemType.BIT:
            raise ValueError("bit_offset must be 0 unless elem_type is BIT")
        if not 1 <= self.count <= 0xFFFF:
            raise ValueError(f"count out of range: {self.count}")

    @property
    def total_bits(self) -> int:
        if self.elem_type is ElemType.BIT:
            return self.count
        return self.count * self.elem_type.size * 8

    @property
    def total_bytes(self) -> int:
        return (self.total_bits + 7) // 8

    @property
    def is_bit(self) -> bool:
        return self.elem_type is ElemType.BIT

    @property
    def bit_address(self) -> int:
        return self.byte_offset * 8 + self.bit_offset

    def __str__(self) -> str:
        return format_pointer_literal(self)


class _Unused:
    """All-zero pointer slot."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNUSED"

    def __reduce__(self):
        return (_Unused, ())


UNUSED = _Unused()


@dataclass(frozen=True)
class InvalidPointer:
    reason: str
    raw: bytes


SlotPointer = Union[AnyPointer, _Unused, InvalidPointer]


def encode_any_pointer(p: AnyPointer | _Unused) -> bytes:
    if p is UNUSED:
        return bytes(POINTER_SIZE)
    addr = p.bit_address
    return struct.pack(
        ">BBHHBBH",
        POINTER_SYNTAX_ID,
        p.elem_type,
        p.count,
        p.db_number,
        AREA_DB,
        addr >> 16,
        addr & 0xFFFF,
    )


def decode_any_pointer(data: bytes) -> SlotPointer:
    data = bytes(data)
    if len(data) != POINTER_SIZE:
        raise ValueError(f"ANY pointer must be {POINTER_SIZE} bytes, got {len(data)}")
    if not any(data):
        return UNUSED
    syntax, type_code, count, db, area, addr_hi, addr_lo = struct.unpack(">BBHHBBH", data)
    if syntax != POINTER_SYNTAX_ID:
        return InvalidPointer(f"bad syntax id 0x{syntax:02X}", data)
    if type_code not in ElemType._value2member_map_:
        return InvalidPointer(f"unknown type code 0x{type_code:02X}", data)
    if area != AREA_DB:
        return InvalidPointer(f"unsupported area 0x{area:02X}", data)
    if count == 0:
        return InvalidPointer("zero repetition count", data)
    addr = (addr_hi << 16) | addr_lo
    elem = ElemType(type_code)
    if addr & 7 and elem is not ElemType.BIT:
        return InvalidPointer("bit offset on non-BIT type", data)
    return AnyPointer(db, addr >> 3, addr & 7, elem, count)


def format_pointer_literal(p: AnyPointer) -> str:
    return f"P#DB{p.db_number}.DBX{p.byte_offset}.{p.bit_offset} {p.elem_type.name} {p.count}"


def parse_pointer_literal(text: str) -> AnyPointer:
    """Parse ``P#DB<n>.DBX<byte>.<bit> <TYPE> <count>``."""
    pos = 0

    def expect(token: str) -> None:
        nonlocal pos
        if text[pos : pos + len(token)].upper() != token:
            raise PointerSyntaxError(f"expected {token!r}", text, pos)
        pos += len(token)

    def number(what: str) -> int:
        nonlocal pos
        start = pos
        while pos < len(text) and text[pos].isdigit():
            pos += 1
        if start == pos:
            raise PointerSyntaxError(f"expected {what}", text, start)
        return int(text[start:pos])

    def spaces() -> None:
        nonlocal pos
        start = pos
        while pos < len(text) and text[pos] in " \t":
            pos += 1
        if start == pos:
            raise PointerSyntaxError("expected whitespace", text, start)

    expect("P#DB")
    db = number("DB number")
    expect(".DBX")
    byte = number("byte offset")
    expect(".")
    bit_pos = pos
    bit = number("bit offset")
    spaces()
    type_pos = pos
    while pos < len(text) and text[pos].isalpha():
        pos += 1
    type_name = text[type_pos:pos].upper()
    if type_name not in ElemType.__members__:
        raise PointerSyntaxError("expected element type", text, type_pos)
    spaces()
    count_pos = pos
    count = number("count")
    if pos != len(text):
        raise PointerSyntaxError("trailing characters", text, pos)
    if bit > 7:
        raise PointerSyntaxError("bit offset must be 0-7", text, bit_pos)
    try:
        return AnyPointer(db, byte, bit, ElemType[type_name], count)
    except ValueError as exc:
        raise PointerSyntaxError(str(exc), text, count_pos if "count" in str(exc) else 0) from None


# --------------------------------------------------------------------------
# Protocol messages


@dataclass(frozen=True)
class AddressItem:
    db_number: int
    start_byte: int
    length_bytes: int = 1
    start_bit: int = 0
    bit: bool = False
    data: bytes = b""  # payload, write requests only

    def __post_init__(self) -> None:
        object.__setattr__(self, "data", bytes(self.data))
        if not 0 <= self.db_number <= 0xFFFF:
            raise ValueError(f"db_number out of range: {self.db_number}")
        if not 0 <= self.start_byte <= MAX_BYTE_OFFSET:
            raise ValueError(f"start_byte out of range: {self.start_byte}")
        if not 0 <= self.start_bit <= 7:
            raise ValueError(f"start_bit out of range: {self.start_bit}")
        if self.start_bit and not self.bit:
            raise ValueError("start_bit requires a bit item")
        if not 1 <= self.length_bytes <= 0xFFFF:
            raise ValueError(f"length_bytes out of range: {self.length_bytes}")
        if self.bit and self.length_bytes != 1:
            raise ValueError("bit items have length 1")

    @classmethod
    def for_pointer(cls, p: AnyPointer, data: bytes = b"") -> "AddressItem":
        if p.is_bit:
            if p.count != 1:
                raise ValueError("multi-bit pointers have no single address item")
            return cls(p.db_number, p.byte_offset, 1, p.bit_offset, True, data)
        return cls(p.db_number, p.byte_offset, p.total_bytes, data=data)


@dataclass(frozen=True)
class ResultItem:
    code: ReturnCode
    data: bytes = b""

    def __post_init__(self) -> None:
        object.__setattr__(self, "code", ReturnCode(self.code))
        object.__setattr__(self, "data", bytes(self.data))

    @property
    def ok(self) -> bool:
        return self.code is ReturnCode.SUCCESS


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    sequence: int
    items: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MessageKind(self.kind))
        object.__setattr__(self, "items", tuple(self.items))
        if not 0 <= self.sequence <= 0xFFFF:
            raise ValueError(f"sequence out of range: {self.sequence}")

    @property
    def is_protocol_error(self) -> bool:
        return (
            not self.kind.is_request
            and self.sequence == PROTOCOL_ERROR_SEQUENCE
            and not self.items
        )


def protocol_error_response(kind: MessageKind = MessageKind.READ_REQUEST) -> ProtocolMessage:
    return ProtocolMessage(kind.response_kind, PROTOCOL_ERROR_SEQUENCE, ())


def _encode_item(kind: MessageKind, item) -> bytes:
    if kind.is_request:
        if not isinstance(item, AddressItem):
            raise EncodeError(f"{kind.name} carries AddressItem values, got {type(item).__name__}")
        addr = item.start_byte * 8 + item.start_bit
        head = ITEM.pack(
            TRANSPORT_BIT if item.bit else TRANSPORT_BYTE,
            item.db_number,
            addr >> 16,
            addr & 0xFFFF,
            item.length_bytes,
        )
        if kind is MessageKind.WRITE_REQUEST:
            if len(item.data) != item.length_bytes:
                raise EncodeError("write payload length differs from item length")
            return head + item.data
        if item.data:
            raise EncodeError("read request items carry no payload")
        return head
    if not isinstance(item, ResultItem):
        raise EncodeError(f"{kind.name} carries ResultItem values, got {type(item).__name__}")
    if kind is MessageKind.WRITE_RESPONSE:
        if item.data:
            raise EncodeError("write results carry no data")
        return bytes([item.code])
    if len(item.data) > 0xFFFF:
        raise EncodeError("result data too long")
    return struct.pack(">BH", item.code, len(item.data)) + item.data


def encode_pdu(msg: ProtocolMessage) -> bytes:
    if len(msg.items) > MAX_ITEMS:
        raise EncodeError(f"too many items: {len(msg.items)} > {MAX_ITEMS}")
    body = HEADER.pack(MAGIC, VERSION, msg.kind, msg.sequence, len(msg.items))
    body += b"".join(_encode_item(msg.kind, it) for it in msg.items)
    if len(body) > 0xFFFF:
        raise EncodeError("frame exceeds 65535 bytes")
    return struct.pack(">H", len(body)) + body


def frame_length(buf: bytes) -> int:
    """Total size of the frame at the head of ``buf`` (prefix included)."""
    if len(buf) < 2:
        raise IncompleteFrame(2, len(buf))
    total = 2 + struct.unpack_from(">H", buf)[0]
    if len(buf) < total:
        raise IncompleteFrame(total, len(buf))
    return total


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes, pos: int):
        self.buf = buf
        self.pos = pos

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if end > len(self.buf):
            raise MalformedFrame("item runs past end of frame")
        out = self.buf[self.pos : end]
        self.pos = end
        return out


def _decode_body(body: bytes) -> ProtocolMessage:
    if len(body) < HEADER.size:
        raise MalformedFrame("frame shorter than header")
    magic, version, kind_code, seq, count = HEADER.unpack_from(body)
    if magic != MAGIC:
        raise MalformedFrame(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedFrame(f"unsupported version {version}")
    try:
        kind = MessageKind(kind_code)
    except ValueError:
        raise MalformedFrame(f"unknown kind 0x{kind_code:02X}") from None
    r = _Reader(body, HEADER.size)
    items = []
    for _ in range(count):
        if kind.is_request:
            transport, db, hi, lo, length = ITEM.unpack(r.take(ITEM.size))
            if transport not in (TRANSPORT_BIT, TRANSPORT_BYTE):
                raise MalformedFrame(f"unknown transport 0x{transport:02X}")
            addr = (hi << 16) | lo
            bit = transport == TRANSPORT_BIT
            data = r.take(length) if kind is MessageKind.WRITE_REQUEST else b""
            try:
                items.append(AddressItem(db, addr >> 3, length, addr & 7, bit, data))
            except ValueError as exc:
                raise MalformedFrame(f"invalid address item: {exc}") from None
        else:
            code = r.take(1)[0]
            if code not in ReturnCode._value2member_map_:
                raise MalformedFrame(f"unknown return code 0x{code:02X}")
            if kind is MessageKind.READ_RESPONSE:
                (length,) = struct.unpack(">H", r.take(2))
                items.append(ResultItem(ReturnCode(code), r.take(length)))
            else:
                items.append(ResultItem(ReturnCode(code)))
    if r.pos != len(body):
        raise MalformedFrame("trailing bytes inside frame")
    return ProtocolMessage(kind, seq, tuple(items))


def decode_pdu(data: bytes) -> ProtocolMessage:
    data = bytes(data)
    total = frame_length(data)
    if total != len(data):
        raise MalformedFrame(f"{len(data) - total} bytes after frame")
    return _decode_body(data[2:])


def split_frame(buf: bytes) -> tuple[ProtocolMessage, bytes]:
    """Decode the first frame in ``buf``; return it and the remainder."""
    buf = bytes(buf)
    total = frame_length(buf)
    return _decode_body(buf[2:total]), buf[total:]


def iter_frames(buf: bytes) -> Iterator[ProtocolMessage]:
    """Decode every complete frame in ``buf``; trailing partial data raises."""
    buf = bytes(buf)
    while buf:
        msg, buf = split_frame(buf)
        yield msg


def describe_frame(data: bytes) -> str:
    """Human-readable dump of a single frame."""
    msg = decode_pdu(data)
    lines = [f"{msg.kind.name} seq={msg.sequence} items={len(msg.items)} ({len(data)} bytes)"]
    for i, it in enumerate(msg.items, 1):
        if isinstance(it, AddressItem):
            where = f"DB{it.db_number}.DBX{it.start_byte}.{it.start_bit}"
            line = f"  [{i}] {'BIT ' if it.bit else ''}{where} len={it.length_bytes}"
            if it.data:
                line += f" data={it.data.hex()}"
        else:
            line = f"  [{i}] {it.code.name}"
            if it.data:
                line += f" data={it.data.hex()}"
        lines.append(line)
    return "\n".join(lines)

"""Simulated PLC with PUT/GET function-block instance data blocks.

Instance DB layout shared by PUT and GET::

    0      REQ (bit 0)           1      unused
    2-3    connection id         4      flags (bit 0 NDR/DONE, bit 1 ERROR)
    5      unused                6-7    status word
    8-47   ADDR_1..ADDR_4        48-87  RD_1..RD_4 (GET) / SD_1..SD_4 (PUT)
    88-    work area, zeroed

Times are integer microseconds of simulated clock.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .codec import (
    POINTER_SIZE,
    UNUSED,
    AddressItem,
    AnyPointer,
    AreaError,
    FrameError,
    InvalidPointer,
    MessageKind,
    ProtocolMessage,
    ResultItem,
    ReturnCode,
    decode_any_pointer,
    decode_pdu,
    encode_any_pointer,
    encode_pdu,
    protocol_error_response,
)

log = logging.getLogger(__name__)

GET_DB_SIZE = 600
PUT_DB_SIZE = 616

REQ_OFFSET = 0
UNUSED_OFFSETS = (1, 5)
CONN_ID_OFFSET = 2
FLAGS_OFFSET = 4
STATUS_OFFSET = 6
HEADER_SIZE = 8
ADDR_BASE = 8
LOCAL_BASE = 48
WORK_BASE = 88
SLOTS = (1, 2, 3, 4)

FLAG_NDR = 0x01
FLAG_ERROR = 0x02


def addr_offset(slot: int) -> int:
    return ADDR_BASE + POINTER_SIZE * (slot - 1)


def local_offset(slot: int) -> int:
    """Offset of RD_slot (GET) or SD_slot (PUT)."""
    return LOCAL_BASE + POINTER_SIZE * (slot - 1)


class FbKind(str, enum.Enum):
    GET = "GET"
    PUT = "PUT"


class Status(enum.IntEnum):
    OK = 0x0000
    ILL_FORMED_SLOT = 0x8001
    LENGTH_MISMATCH = 0x8002
    LOCAL_ACCESS = 0x8003
    UNSUPPORTED_POINTER = 0x8004
    CHANNEL_UNREACHABLE = 0x8005
    UNKNOWN_CONNECTION = 0x8006
    PROTOCOL_ERROR = 0x8007
    # Peer return codes are reported as REMOTE_ERROR | code.
    REMOTE_ERROR = 0x8100


def remote_status(code: ReturnCode) -> int:
    return Status.REMOTE_ERROR | int(code)


def status_return_code(status: int) -> Optional[ReturnCode]:
    """Peer return code carried by a STATUS word, if any."""
    if status & 0xFF00 == Status.REMOTE_ERROR:
        try:
            return ReturnCode(status & 0xFF)
        except ValueError:
            return None
    return None


class DataBlock:
    def __init__(self, number: int, size_bytes: int, contents: bytes | None = None):
        if not 1 <= number <= 0xFFFF:
            raise ValueError(f"DB number out of range: {number}")
        if size_bytes < 1:
            raise ValueError("DB size must be at least 1 byte")
        self.number = number
        self.size_bytes = size_bytes
        self.contents = bytearray(size_bytes)
        if contents is not None:
            if len(contents) > size_bytes:
                raise ValueError("initial contents larger than DB")
            self.contents[: len(contents)] = contents

    def __repr__(self) -> str:
        return f"DataBlock(DB{self.number}, {self.size_bytes} bytes)"


@dataclass
class FbInstanceConfig:
    kind: FbKind
    instance_db: int
    conn_id: int
    trigger_interval: int
    # slot -> (remote ADDR pointer, local RD/SD pointer)
    slots: dict = field(default_factory=dict)
    enabled: bool = True

    def __post_init__(self) -> None:
        self.kind = FbKind(self.kind)
        if self.trigger_interval <= 0:
            raise ValueError("trigger_interval must be positive")
        if not 0 <= self.conn_id <= 0xFFFF:
            raise ValueError("conn_id must fit a word")
        for slot in self.slots:
            if slot not in SLOTS:
                raise ValueError(f"slot must be 1-4, got {slot}")


@dataclass
class PendingExchange:
    """A request handed to the transport; filled in when the response lands."""

    done: bool = False
    response: Optional[bytes] = None
    error: Optional[str] = None  # "unreachable" | "unknown-connection"
    complete_at: int = 0


class Transport(Protocol):
    def submit(self, plc_id: str, conn_id: int, frame: bytes, now: int) -> PendingExchange: ...


@dataclass(frozen=True)
class TransferEvent:
    plc_id: str
    instance_db: int
    kind: FbKind
    phase: str  # "start" | "complete"
    time: int
    status: int = 0
    slots: tuple = ()  # ((slot, status), ...)

    def to_record(self) -> dict:
        return {
            "t_us": self.time,
            "event": "transfer",
            "phase": self.phase,
            "plc": self.plc_id,
            "db": self.instance_db,
            "fb": self.kind.value,
            "status": self.status,
            "slots": [list(s) for s in self.slots],
        }


@dataclass
class _SlotPlan:
    slot: int
    remote: Optional[AnyPointer] = None
    local: Optional[AnyPointer] = None
    nbytes: int = 0
    status: int = Status.OK
    item_index: Optional[int] = None


@dataclass
class _Transfer:
    fb: FbInstanceConfig
    started: int
    plans: list
    pending: PendingExchange
    sequence: int


class PlcInstance:
    def __init__(
        self,
        plc_id: str,
        scan_interval: int = 10_000,
        *,
        phase: int = 0,
        connection_table: dict | None = None,
        get_db_size: int = GET_DB_SIZE,
        put_db_size: int = PUT_DB_SIZE,
    ):
        if scan_interval <= 0:
            raise ValueError("scan_interval must be positive")
        self.plc_id = plc_id
        self.scan_interval = scan_interval
        self.phase = phase % scan_interval
        self.connection_table: dict[int, str] = dict(connection_table or {})
        self.get_db_size = get_db_size
        self.put_db_size = put_db_size
        self.data_blocks: dict[int, DataBlock] = {}
        self.fb_instances: list[FbInstanceConfig] = []
        self.transport: Optional[Transport] = None
        self.up = True
        self._inflight: dict[int, _Transfer] = {}
        self._last_start: dict[int, int] = {}
        self._sequence = 0

    def __repr__(self) -> str:
        return f"PlcInstance({self.plc_id!r}, dbs={sorted(self.data_blocks)})"

    # -- configuration -----------------------------------------------------

    def instance_size(self, kind: FbKind) -> int:
        return self.get_db_size if FbKind(kind) is FbKind.GET else self.put_db_size

    def add_data_block(self, number: int, size_bytes: int, contents: bytes | None = None) -> DataBlock:
        if number in self.data_blocks:
            raise ValueError(f"{self.plc_id}: DB{number} already exists")
        db = DataBlock(number, size_bytes, contents)
        self.data_blocks[number] = db
        return db

    def add_fb(self, fb: FbInstanceConfig) -> DataBlock:
        """Register an FB instance, creating its instance DB with the kind-correct size."""
        size = self.instance_size(fb.kind)
        if any(f.instance_db == fb.instance_db for f in self.fb_instances):
            raise ValueError(f"{self.plc_id}: DB{fb.instance_db} already backs an FB")
        db = self.data_blocks.get(fb.instance_db)
        if db is None:
            db = self.add_data_block(fb.instance_db, size)
        elif db.size_bytes != size:
            raise ValueError(
                f"{self.plc_id}: DB{fb.instance_db} is {db.size_bytes} bytes, {fb.kind.value} needs {size}"
            )
        mem = db.contents
        struct.pack_into(">H", mem, CONN_ID_OFFSET, fb.conn_id)
        for slot, (remote, local) in fb.slots.items():
            mem[addr_offset(slot) : addr_offset(slot) + POINTER_SIZE] = encode_any_pointer(remote)
            mem[local_offset(slot) : local_offset(slot) + POINTER_SIZE] = encode_any_pointer(local)
        self.fb_instances.append(fb)
        self._last_start[fb.instance_db] = 0
        return db

    def fb_for_db(self, number: int) -> FbInstanceConfig:
        for fb in self.fb_instances:
            if fb.instance_db == number:
                return fb
        raise KeyError(f"{self.plc_id}: DB{number} is not an FB instance")

    # -- memory access -----------------------------------------------------

    def _locate(self, item: AddressItem, length: int) -> DataBlock:
        db = self.data_blocks.get(item.db_number)
        if db is None:
            raise AreaError(ReturnCode.OBJECT_DOES_NOT_EXIST, f"{self.plc_id}: DB{item.db_number}")
        if item.start_byte + length > db.size_bytes:
            raise AreaError(
                ReturnCode.ADDRESS_OUT_OF_RANGE,
                f"{self.plc_id}: DB{item.db_number} byte {item.start_byte}+{length} > {db.size_bytes}",
            )
        return db

    def read_area(self, item: AddressItem) -> bytes:
        db = self._locate(item, 1 if item.bit else item.length_bytes)
        if item.bit:
            return bytes([(db.contents[item.start_byte] >> item.start_bit) & 1])
        return bytes(db.contents[item.start_byte : item.start_byte + item.length_bytes])

    def write_area(self, item: AddressItem, data: bytes) -> None:
        length = 1 if item.bit else item.length_bytes
        if len(data) != length:
            raise ValueError(f"data length {len(data)} != item length {length}")
        db = self._locate(item, length)
        if item.bit:
            mask = 1 << item.start_bit
            if data[0] & 1:
                db.contents[item.start_byte] |= mask
            else:
                db.contents[item.start_byte] &= ~mask & 0xFF
        else:
            db.contents[item.start_byte : item.start_byte + length] = data

    def read_pointer(self, p: AnyPointer) -> bytes:
        return self.read_area(AddressItem.for_pointer(p))

    def write_pointer(self, p: AnyPointer, data: bytes) -> None:
        self.write_area(AddressItem.for_pointer(p, data), data)

    # -- request server ----------------------------------------------------

    def serve_request(self, msg: ProtocolMessage) -> ProtocolMessage:
        if not msg.kind.is_request:
            return protocol_error_response()
        results = []
        for item in msg.items:
            try:
                if msg.kind is MessageKind.READ_REQUEST:
                    results.append(ResultItem(ReturnCode.SUCCESS, self.read_area(item)))
                else:
                    self.write_area(item, item.data)
                    results.append(ResultItem(ReturnCode.SUCCESS))
            except AreaError as exc:
                results.append(ResultItem(exc.code))
        return ProtocolMessage(msg.kind.response_kind, msg.sequence, tuple(results))

    def handle_frame(self, frame: bytes) -> bytes:
        try:
            msg = decode_pdu(frame)
        except FrameError as exc:
            log.debug("%s: malformed frame: %s", self.plc_id, exc)
            return encode_pdu(protocol_error_response())
        return encode_pdu(self.serve_request(msg))

    # -- scan loop ---------------------------------------------------------

    def busy(self, instance_db: int) -> bool:
        return instance_db in self._inflight

    def next_due(self) -> Optional[int]:
        """Earliest time at which an idle, enabled FB becomes due."""
        due = [
            self._last_start[fb.instance_db] + fb.trigger_interval
            for fb in self.fb_instances
            if fb.enabled and fb.instance_db not in self._inflight
        ]
        return min(due) if due else None

    def pending_completions(self) -> list[int]:
        return [t.pending.complete_at for t in self._inflight.values() if t.pending.done]

    def next_boundary(self, t: int) -> int:
        """First scan boundary at or after ``t``."""
        k = -(-(t - self.phase) // self.scan_interval)
        return self.phase + max(k, 0) * self.scan_interval

    def scan_cycle(self, now: int) -> list[TransferEvent]:
        events = []
        for fb in self.fb_instances:
            t = self._inflight.get(fb.instance_db)
            if t is not None and t.pending.done and t.pending.complete_at <= now:
                events.append(self._finish(t, now))
        if not self.up:
            return events
        for fb in self.fb_instances:
            if (
                fb.enabled
                and fb.instance_db not in self._inflight
                and now - self._last_start[fb.instance_db] >= fb.trigger_interval
            ):
                events.append(self.execute_transfer(fb, now))
        return events

    def _next_sequence(self) -> int:
        self._sequence = (self._sequence + 1) % 0xFFFF
        return self._sequence

    def _plan_slot(self, mem: bytearray, slot: int) -> Optional[_SlotPlan]:
        a = addr_offset(slot)
        remote = decode_any_pointer(mem[a : a + POINTER_SIZE])
        if remote is UNUSED:
            return None
        plan = _SlotPlan(slot)
        lo = local_offset(slot)
        local = decode_any_pointer(mem[lo : lo + POINTER_SIZE])
        if isinstance(remote, InvalidPointer) or not isinstance(local, AnyPointer):
            plan.status = Status.ILL_FORMED_SLOT
            return plan
        if remote.is_bit != local.is_bit:
            plan.status = Status.ILL_FORMED_SLOT
            return plan
        if (remote.is_bit and remote.count != 1) or (local.is_bit and local.count != 1):
            plan.status = Status.UNSUPPORTED_POINTER
            return plan
        plan.remote, plan.local = remote, local
        plan.nbytes = min(remote.total_bytes, local.total_bytes)
        if remote.total_bytes != local.total_bytes:
            plan.status = Status.LENGTH_MISMATCH
        return plan

    def _slot_item(self, fb: FbInstanceConfig, plan: _SlotPlan) -> AddressItem:
        p = plan.remote
        if fb.kind is FbKind.GET:
            if p.is_bit:
                return AddressItem(p.db_number, p.byte_offset, 1, p.bit_offset, True)
            return AddressItem(p.db_number, p.byte_offset, plan.nbytes)
        src = plan.local
        if src.is_bit:
            payload = self.read_area(AddressItem(src.db_number, src.byte_offset, 1, src.bit_offset, True))
            return AddressItem(p.db_number, p.byte_offset, 1, p.bit_offset, True, payload)
        payload = self.read_area(AddressItem(src.db_number, src.byte_offset, plan.nbytes))
        return AddressItem(p.db_number, p.byte_offset, plan.nbytes, data=payload)

    def execute_transfer(self, fb: FbInstanceConfig, now: int) -> TransferEvent:
        """Raise REQ and issue the FB's request; completion happens in a later scan."""
        mem = self.data_blocks[fb.instance_db].contents
        mem[REQ_OFFSET] |= 0x01
        self._last_start[fb.instance_db] = now
        plans = [p for p in (self._plan_slot(mem, s) for s in SLOTS) if p is not None]
        items = []
        for plan in plans:
            if plan.remote is None:
                continue
            try:
                item = self._slot_item(fb, plan)
            except AreaError:
                plan.status = Status.LOCAL_ACCESS
                continue
            plan.item_index = len(items)
            items.append(item)
        seq = self._next_sequence()
        if not items:
            pending = PendingExchange(done=True, complete_at=now)
        elif self.transport is None:
            pending = PendingExchange(done=True, error="unreachable", complete_at=now)
        else:
            kind = MessageKind.READ_REQUEST if fb.kind is FbKind.GET else MessageKind.WRITE_REQUEST
            frame = encode_pdu(ProtocolMessage(kind, seq, tuple(items)))
            pending = self.transport.submit(self.plc_id, fb.conn_id, frame, now)
        self._inflight[fb.instance_db] = _Transfer(fb, now, plans, pending, seq)
        return TransferEvent(self.plc_id, fb.instance_db, fb.kind, "start", now)

    def _finish(self, t: _Transfer, now: int) -> TransferEvent:
        fb, plans, pending = t.fb, t.plans, t.pending
        active = [p for p in plans if p.item_index is not None]
        if pending.error is not None:
            code = (
                Status.UNKNOWN_CONNECTION
                if pending.error == "unknown-connection"
                else Status.CHANNEL_UNREACHABLE
            )
            for p in active:
                p.status = code
        elif active:
            self._apply_response(fb, t, active)
        failed = [p.status for p in plans if p.status != Status.OK]
        mem = self.data_blocks[fb.instance_db].contents
        status = failed[0] if failed else Status.OK
        mem[FLAGS_OFFSET] = FLAG_ERROR if failed else FLAG_NDR
        struct.pack_into(">H", mem, STATUS_OFFSET, status)
        mem[REQ_OFFSET] &= 0xFE
        del self._inflight[fb.instance_db]
        return TransferEvent(
            self.plc_id,
            fb.instance_db,
            fb.kind,
            "complete",
            now,
            int(status),
            tuple((p.slot, int(p.status)) for p in plans),
        )

    def _apply_response(self, fb: FbInstanceConfig, t: _Transfer, active: list) -> None:
        try:
            resp = decode_pdu(t.pending.response or b"")
        except FrameError:
            resp = None
        expected = MessageKind.READ_RESPONSE if fb.kind is FbKind.GET else MessageKind.WRITE_RESPONSE
        if (
            resp is None
            or resp.kind is not expected
            or resp.sequence != t.sequence
            or len(resp.items) != len(active)
        ):
            for p in active:
                p.status = Status.PROTOCOL_ERROR
            return
        for p in active:
            res = resp.items[p.item_index]
            if not res.ok:
                p.status = remote_status(res.code)
                continue
            if fb.kind is FbKind.PUT:
                continue
            dst = p.local
            try:
                if dst.is_bit:
                    item = AddressItem(dst.db_number, dst.byte_offset, 1, dst.bit_offset, True)
                    self.write_area(item, res.data[:1] or b"\x00")
                else:
                    n = min(p.nbytes, len(res.data))
                    self.write_area(AddressItem(dst.db_number, dst.byte_offset, n), res.data[:n])
            except (AreaError, ValueError):
                p.status = Status.LOCAL_ACCESS

    # -- harness helpers ---------------------------------------------------

    def req(self, instance_db: int) -> int:
        return self.data_blocks[instance_db].contents[REQ_OFFSET] & 1

    def status(self, instance_db: int) -> int:
        return struct.unpack_from(">H", self.data_blocks[instance_db].contents, STATUS_OFFSET)[0]

    def flags(self, instance_db: int) -> int:
        return self.data_blocks[instance_db].contents[FLAGS_OFFSET]


class DirectTransport:
    """Zero-infrastructure transport: peers are served in-process with a fixed delay.

    Handy for exercising one PLC's FBs without a fabric.
    """

    def __init__(self, peers: dict[int, PlcInstance], delay: int = 1_000):
        self.peers = peers
        self.delay = delay

    def submit(self, plc_id: str, conn_id: int, frame: bytes, now: int) -> PendingExchange:
        peer = self.peers.get(conn_id)
        if peer is None:
            return PendingExchange(True, None, "unknown-connection", now)
        if not peer.up:
            return PendingExchange(True, None, "unreachable", now + 2 * self.delay)
        return PendingExchange(True, peer.handle_frame(frame), None, now + 2 * self.delay)

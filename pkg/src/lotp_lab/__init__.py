"""Simulated PLC fleet with a read/write-only lateral movement toolkit."""

from .attack import (
    AttackSession,
    Hop,
    PivotChain,
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
from .codec import AnyPointer, ProtocolMessage, decode_pdu, encode_pdu, parse_pointer_literal
from .fabric import Simulation, load_topology
from .plc import PlcInstance
from .runner import RunReport, load_playbook, run_fleet, run_playbook, run_scenario

__version__ = "0.1.0"

__all__ = [
    "AnyPointer",
    "AttackSession",
    "Hop",
    "PivotChain",
    "PlcInstance",
    "ProtocolMessage",
    "RunReport",
    "Simulation",
    "await_execution",
    "collect_result",
    "configure_slot",
    "decode_pdu",
    "encode_pdu",
    "fingerprint_db",
    "load_playbook",
    "load_topology",
    "parse_pointer_literal",
    "probe_db_size",
    "read_slot_usage",
    "remote_read",
    "remote_write",
    "reset_slot",
    "run_fleet",
    "run_playbook",
    "run_scenario",
]

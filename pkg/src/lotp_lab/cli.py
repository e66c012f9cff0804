"""``lotp-lab`` command line."""

from __future__ import annotations

import json
import signal
import sys
import threading
from pathlib import Path

import click

from .codec import FrameError, describe_frame
from .fabric import TopologyError
from .runner import PlaybookError, RunReport, UsageError, prepare_playbook, run_fleet, scenario_files

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

_existing = click.Path(exists=True, dir_okay=False, path_type=Path)


def _load_error(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_USAGE)


def _finish(runner, report: RunReport, log: Path | None, report_path: Path | None) -> None:
    if log is not None:
        runner.write_event_log(log)
    if report_path is not None:
        report_path.write_text(report.to_json() + "\n")
    click.echo(report.to_text())
    sys.exit(report.exit_code)


def _play(topology: Path, playbook: Path, seed: int, log, report) -> None:
    try:
        runner = prepare_playbook(topology, playbook, seed)
    except (TopologyError, PlaybookError, UsageError) as exc:
        _load_error(exc)
    _finish(runner, runner.run(), log, report)


@click.group()
def main() -> None:
    """Simulated PLC fleet and living-off-the-plant lateral movement toolkit."""


@main.group()
def fleet() -> None:
    """Run a PLC fleet."""


@fleet.command("run")
@click.option("--topology", required=True, type=_existing)
@click.option("--mode", type=click.Choice(["virtual", "realtime"]), default="virtual", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--duration", type=float, default=None,
              help="Seconds to run (virtual default 10; realtime runs until interrupted).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port-base", type=int, default=0, help="First TCP port for attacker channels (0: ephemeral).")
@click.option("--log", type=click.Path(dir_okay=False, path_type=Path), default=None)
def fleet_run(topology, mode, seed, duration, host, port_base, log) -> None:
    """Load TOPOLOGY and run its scan loops."""
    try:
        handle = run_fleet(topology, mode, seed=seed, host=host, port_base=port_base)
    except TopologyError as exc:
        _load_error(exc)
    except OSError as exc:
        click.echo(f"error: cannot bind attacker listener: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    click.echo(f"fleet {handle.topology.name}: {len(handle.plcs)} PLCs ({', '.join(handle.plcs)}), "
               f"{len(handle.channels)} channels")
    if mode == "virtual":
        handle.advance(10.0 if duration is None else duration)
        click.echo(f"ran {handle.sim.now / 1e6:.3f}s virtual, {handle.transfers()} FB transfers completed")
    else:
        for ch, (h, p) in handle.runner.addresses.items():
            click.echo(f"  {ch}: listening on {h}:{p}")
        stop = threading.Event()
        signal.signal(signal.SIGINT, lambda *_: stop.set())
        signal.signal(signal.SIGTERM, lambda *_: stop.set())
        stop.wait(duration)
        handle.stop()
        click.echo(f"stopped after {handle.sim.now / 1e6:.3f}s, {handle.transfers()} FB transfers completed")
    if log is not None:
        with open(log, "w") as fh:
            for rec in handle.sim.event_log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


@main.group()
def attack() -> None:
    """Attack playbooks."""


@attack.command("play")
@click.option("--topology", required=True, type=_existing)
@click.option("--playbook", required=True, type=_existing)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--log", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the JSON-lines event log here.")
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the JSON run report here.")
def attack_play(topology, playbook, seed, log, report) -> None:
    """Run PLAYBOOK against a simulated TOPOLOGY."""
    _play(topology, playbook, seed, log, report)


@main.command("scenario")
@click.argument("n", type=click.IntRange(1, 4))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--log", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--report", type=click.Path(dir_okay=False, path_type=Path), default=None)
def scenario(n, seed, log, report) -> None:
    """Run bundled threat scenario N (1-4)."""
    topology, playbook = scenario_files(n)
    _play(topology, playbook, seed, log, report)


@main.group()
def codec() -> None:
    """Wire-format utilities."""


@codec.command("decode")
@click.argument("hex_frame")
def codec_decode(hex_frame) -> None:
    """Pretty-print a hex-encoded frame."""
    try:
        raw = bytes.fromhex(hex_frame.replace(" ", "").replace(":", ""))
    except ValueError:
        raise click.BadParameter("not a hex string", param_hint="HEX_FRAME")
    try:
        click.echo(describe_frame(raw))
    except FrameError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FAILED)


if __name__ == "__main__":
    main()

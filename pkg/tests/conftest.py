import pytest

from lotp_lab.attack import AttackSession
from lotp_lab.fabric import Simulation, build_topology, load_topology
from lotp_lab.runner import prepare_playbook, scenario_files

_acceptance: dict = {}


@pytest.fixture(scope="session")
def scenario_runs():
    """Each bundled scenario run once: {n: (runner, report)}."""
    runs = {}
    for n in (1, 2, 3, 4):
        runner = prepare_playbook(*scenario_files(n), seed=0)
        runs[n] = (runner, runner.run())
    return runs


@pytest.fixture
def scenario_sim():
    def make(n: int, seed: int = 0) -> Simulation:
        return Simulation(load_topology(scenario_files(n)[0], seed=seed))
    return make


@pytest.fixture
def fleet():
    """Build a simulation from a topology dict and attach a session to PLC1."""
    def make(data: dict, seed: int = 0, entry: str = "PLC1", **kw):
        sim = Simulation(build_topology(data, seed=seed))
        return sim, AttackSession.attach(sim, entry, **kw)
    return make


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.failed or report.skipped:
        detail = dict(report.user_properties).get("detail", "")
        prev = _acceptance.get(name)
        if prev is None or prev[0] == "PASS":
            _acceptance[name] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance, key=lambda n: int(n.split("_")[2])):
        verdict, detail = _acceptance[name]
        terminalreporter.write_line(f"{verdict}  {name}  {detail}")

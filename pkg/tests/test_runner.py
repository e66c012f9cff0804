import json

import pytest
from click.testing import CliRunner

from lotp_lab.cli import main
from lotp_lab.runner import (
    PlaybookError,
    UsageError,
    parse_playbook,
    run_playbook,
    run_scenario,
    scenario_files,
)

HEAD = "name: t\nsteps:\n"


def book(*steps: str) -> str:
    return HEAD + "".join(f"  - {s}\n" for s in steps)


class TestValidation:
    def test_configure_needs_fingerprint(self):
        text = book(
            "{op: fingerprint_range, first: 1, last: 50}",
            '{op: configure, db: 100, remote: "P#DB1.DBX0.0 BYTE 1", local: "P#DB100.DBX96.0 BYTE 1"}',
        )
        with pytest.raises(PlaybookError) as info:
            parse_playbook(text)
        assert "DB100" in str(info.value) and info.value.line == 4

    def test_fingerprint_is_per_path(self):
        text = book(
            "{op: fingerprint_range, first: 100, last: 101}",
            "{op: read_usage, db: 100, via: [{plc: PLC1, get: 100, put: 101}]}",
        )
        with pytest.raises(PlaybookError, match="via PLC1"):
            parse_playbook(text)

    def test_chain_hops_need_fingerprints(self):
        chain = "[{plc: PLC1, get: 100, put: 101}, {plc: PLC2, get: 100, put: 101}]"
        text = book("{op: fingerprint_range, first: 100, last: 101}",
                    f'{{op: remote_read, chain: {chain}, pointer: "P#DB1.DBX0.0 BYTE 1", as: x}}')
        with pytest.raises(PlaybookError, match="via PLC1"):
            parse_playbook(text)

    def test_undefined_variable(self):
        with pytest.raises(PlaybookError, match="not defined"):
            parse_playbook(book('{op: assert_equals, var: marker, expected: "5A"}'))

    def test_unknown_op(self):
        with pytest.raises(PlaybookError, match="unknown op"):
            parse_playbook(book("{op: stop_cpu}"))

    def test_auto_reset_needs_configure(self):
        with pytest.raises(PlaybookError, match="auto"):
            parse_playbook(book("{op: fingerprint_range, first: 100, last: 100}", "{op: reset, db: 100}"))

    def test_unquoted_hex_rejected(self):
        text = book('{op: collect, local: "P#DB1.DBX0.0 BYTE 1", as: m}', "{op: assert_equals, var: m, expected: 77}")
        with pytest.raises(PlaybookError, match="quoted hex"):
            parse_playbook(text)

    def test_bad_pointer_reports_step(self):
        with pytest.raises(PlaybookError) as info:
            parse_playbook(book('{op: collect, local: "P#DB1.DBX0", as: m}'))
        assert info.value.path == "steps[0].local"

    def test_not_a_playbook(self):
        with pytest.raises(PlaybookError):
            parse_playbook("- just a list\n")

    def test_bundled_playbooks_validate(self):
        for n in (1, 2, 3, 4):
            pb = parse_playbook(scenario_files(n)[1].read_text())
            assert pb.steps[0].op == "probe" and pb.steps[0].args["expect"] == "unreachable"


class TestRuns:
    def test_failed_step_skips_dependents(self, tmp_path):
        topo = scenario_files(1)[0]
        path = tmp_path / "pb.yaml"
        path.write_text(book(
            "{op: fingerprint_range, first: 100, last: 101}",
            '{op: configure, db: 100, remote: "P#DB1.DBX0.0 BYTE 1", local: "P#DB100.DBX96.0 BYTE 1"}',
            "{op: await, db: 100, timeout: 0.01}",
            '{op: collect, local: "P#DB100.DBX96.0 BYTE 1", as: m}',
            '{op: assert_equals, var: m, expected: "5A"}',
            "{op: reset, db: 100}",
        ))
        report = run_playbook(topo, path)
        assert [s.status for s in report.steps] == ["ok", "ok", "failed", "skipped", "skipped", "ok"]
        assert report.exit_code == 1
        assert report.assertions == [{"step": 5, "passed": False, "detail": "depends on a failed step"}]
        assert report.restoration == []

    def test_unexpected_reachability_fails(self, tmp_path):
        path = tmp_path / "pb.yaml"
        path.write_text(book("{op: probe, plc: PLC1, db: 1, expect: unreachable}"))
        report = run_playbook(scenario_files(1)[0], path)
        assert not report.passed and report.steps[0].status == "failed"

    def test_configure_on_non_fb_fails(self, tmp_path):
        path = tmp_path / "pb.yaml"
        path.write_text(book(
            "{op: fingerprint_range, first: 1, last: 1}",
            '{op: configure, db: 1, remote: "P#DB1.DBX0.0 BYTE 1", local: "P#DB1.DBX9.0 BYTE 1"}',
        ))
        report = run_playbook(scenario_files(1)[0], path)
        assert report.steps[1].status == "failed" and "not a GET/PUT" in report.steps[1].detail

    def test_report_deterministic(self, tmp_path):
        a = run_scenario(2, report_path=tmp_path / "a.json")
        b = run_scenario(2, report_path=tmp_path / "b.json")
        assert a.to_json() == b.to_json()
        assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()

    def test_scenario2_marker(self, scenario_runs):
        _, report = scenario_runs[2]
        assert report.passed
        assert report.step("collect").result == "5a"

    def test_scenario3_negative_step(self, scenario_runs):
        _, report = scenario_runs[3]
        assert report.steps[0].op == "probe" and report.steps[0].status == "ok"
        assert report.assertions[0]["passed"]

    def test_scenario4(self, scenario_runs):
        runner, report = scenario_runs[4]
        assert report.passed
        assert report.step("remote_read").result == "77"
        assert runner.sim.snapshot("PLC3", 3, 4, 2) == b"\xbe\xef"

    def test_bad_scenario_number(self):
        with pytest.raises(UsageError):
            run_scenario(9)


class TestCli:
    def test_scenario(self, tmp_path):
        log, rep = tmp_path / "log.jsonl", tmp_path / "r.json"
        res = CliRunner().invoke(main, ["scenario", "1", "--log", str(log), "--report", str(rep)])
        assert res.exit_code == 0, res.output
        assert "PASSED" in res.output
        records = [json.loads(line) for line in log.read_text().splitlines()]
        assert any(r["event"] == "exchange" for r in records)
        assert json.loads(rep.read_text())["passed"] is True

    def test_scenario_out_of_range(self):
        assert CliRunner().invoke(main, ["scenario", "9"]).exit_code == 2

    def test_attack_play(self):
        topo, pb = scenario_files(3)
        res = CliRunner().invoke(main, ["attack", "play", "--topology", str(topo), "--playbook", str(pb), "--seed", "3"])
        assert res.exit_code == 0, res.output

    def test_assertion_failure_exit_1(self, tmp_path):
        path = tmp_path / "pb.yaml"
        path.write_text(book('{op: assert_equals, oracle: {plc: PLC2, pointer: "P#DB1.DBX0.0 BYTE 1"}, expected: "00"}'))
        res = CliRunner().invoke(main, ["attack", "play", "--topology", str(scenario_files(1)[0]), "--playbook", str(path)])
        assert res.exit_code == 1 and "FAIL" in res.output

    def test_invalid_playbook_exit_2(self, tmp_path):
        path = tmp_path / "pb.yaml"
        path.write_text(book("{op: reset, db: 100}"))
        res = CliRunner().invoke(main, ["attack", "play", "--topology", str(scenario_files(1)[0]), "--playbook", str(path)])
        assert res.exit_code == 2 and "line 3" in res.output

    def test_missing_topology(self, tmp_path):
        res = CliRunner().invoke(main, ["fleet", "run", "--topology", str(tmp_path / "none.yaml")])
        assert res.exit_code == 2

    def test_bad_topology(self, tmp_path):
        path = tmp_path / "t.yaml"
        path.write_text("plcs:\n  - id: PLC1\n    connections: {2: ghost}\n")
        res = CliRunner().invoke(main, ["fleet", "run", "--topology", str(path)])
        assert res.exit_code == 2 and "ghost" in res.output

    def test_fleet_run(self, tmp_path):
        log = tmp_path / "f.jsonl"
        res = CliRunner().invoke(main, ["fleet", "run", "--topology", str(scenario_files(4)[0]), "--duration", "2", "--log", str(log)])
        assert res.exit_code == 0
        assert "3 PLCs" in res.output and "3 channels" in res.output
        assert log.read_text().count("\n") > 0

    def test_fleet_run_realtime(self):
        res = CliRunner().invoke(
            main, ["fleet", "run", "--topology", str(scenario_files(1)[0]), "--mode", "realtime", "--duration", "0.2"]
        )
        assert res.exit_code == 0 and "listening on 127.0.0.1:" in res.output

    def test_codec_decode(self):
        res = CliRunner().invoke(main, ["codec", "decode", "000f 4c50 01 01 0001 01 02 0063 000000 0001"])
        assert res.exit_code == 0 and "DB99.DBX0.0" in res.output

    def test_codec_decode_errors(self):
        assert CliRunner().invoke(main, ["codec", "decode", "zz"]).exit_code == 2
        res = CliRunner().invoke(main, ["codec", "decode", "000f4c50"])
        assert res.exit_code == 1 and "error" in res.output

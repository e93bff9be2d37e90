"""Command-line contract: validate/run/replay and the exit-code protocol."""

import json

from bridgesim import cli, presets


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


class TestValidate:
    def test_reference_scenario_passes(self, tmp_path, capsys):
        path = write(tmp_path, "ok.json", presets.happy_path())
        assert cli.main(["validate", path]) == 0
        assert "ok" in capsys.readouterr().out

    def test_broken_genesis_names_the_field(self, tmp_path, capsys):
        data = presets.happy_path()
        del data["side_chains"][0]["genesis"]["Wit_Addr_List"]
        path = write(tmp_path, "missing.json", data)
        assert cli.main(["validate", path]) == 1
        assert "Wit_Addr_List" in capsys.readouterr().err

    def test_reserve_sum_off_by_one_names_the_rule(self, tmp_path, capsys):
        data = presets.happy_path()
        data["side_chains"][0]["genesis"]["Bal_Bank"] += 1
        path = write(tmp_path, "sum.json", data)
        assert cli.main(["validate", path]) == 1
        err = capsys.readouterr().err
        assert "Bal_Resv + Bal_Bank" in err

    def test_bare_genesis_file(self, tmp_path, capsys):
        genesis = presets.happy_path()["side_chains"][0]["genesis"]
        path = write(tmp_path, "genesis.json", genesis)
        assert cli.main(["validate", path]) == 0
        del genesis["SC_Inter"]
        path = write(tmp_path, "genesis-broken.json", genesis)
        assert cli.main(["validate", path]) == 1
        assert "SC_Inter" in capsys.readouterr().err

    def test_unreadable_file(self, tmp_path):
        assert cli.main(["validate", str(tmp_path / "absent.json")]) == 1

    def test_validate_never_writes_or_runs(self, tmp_path):
        path = write(tmp_path, "ok.json", presets.happy_path())
        before = sorted(p.name for p in tmp_path.iterdir())
        cli.main(["validate", path])
        assert sorted(p.name for p in tmp_path.iterdir()) == before


class TestRun:
    def test_happy_path_exits_zero_and_writes_artifacts(self, tmp_path, capsys):
        path = write(tmp_path, "ok.json", presets.happy_path())
        trace = tmp_path / "run.trace"
        assert cli.main(["run", path, "--trace-out", str(trace)]) == 0
        out = capsys.readouterr().out
        assert "all invariants held" in out
        assert "== summary (json) ==" in out
        assert trace.exists() and trace.read_text().count("\n") > 5

    def test_invalid_input_exits_one(self, tmp_path):
        data = presets.happy_path()
        data["mode"] = "nonsense"
        path = write(tmp_path, "bad.json", data)
        assert cli.main(["run", path]) == 1

    def test_invariant_failure_exits_two(self, tmp_path):
        path = write(tmp_path, "deep.json", presets.deep_reorg_negative_control())
        assert cli.main(["run", path]) == 2

    def test_byzantine_revert_is_a_correct_outcome(self, tmp_path, capsys):
        data = presets.byzantine_registration(behavior="byzantine_reject_all",
                                              n_byzantine=2)
        path = write(tmp_path, "byz.json", data)
        assert cli.main(["run", path]) == 0
        out = capsys.readouterr().out
        assert "registered: False" in out

    def test_threshold_override_demonstrates_the_bound(self, tmp_path):
        path = write(tmp_path, "mis.json", presets.misconfigured_quorum())
        assert cli.main(["run", path]) == 0
        assert cli.main(["run", path, "--override-threshold", "2"]) == 2

    def test_seed_flag_overrides_file(self, tmp_path, capsys):
        path = write(tmp_path, "ok.json", presets.lossy_network(seed=1))
        t1 = tmp_path / "a.trace"
        t2 = tmp_path / "b.trace"
        assert cli.main(["run", path, "--seed", "5", "--trace-out", str(t1)]) == 0
        assert cli.main(["run", path, "--seed", "6", "--trace-out", str(t2)]) == 0
        assert t1.read_text() != t2.read_text()


class TestReplay:
    def record(self, tmp_path, data, name="fixture"):
        scenario_path = write(tmp_path, f"{name}.json", data)
        trace_path = tmp_path / f"{name}.trace"
        code = cli.main(["run", scenario_path, "--trace-out", str(trace_path)])
        assert code in (0, 2)
        return trace_path

    def test_fresh_trace_replays_identically(self, tmp_path):
        trace = self.record(tmp_path, presets.happy_path())
        assert cli.main(["replay", str(trace)]) == 0

    def test_flipped_byte_diverges(self, tmp_path, capsys):
        trace = self.record(tmp_path, presets.happy_path())
        text = trace.read_text()
        assert '"amount":990' in text
        trace.write_text(text.replace('"amount":990', '"amount":991', 1))
        assert cli.main(["replay", str(trace)]) == 3
        assert "DIVERGED" in capsys.readouterr().err

    def test_mode_difference_fixture_diverges(self, tmp_path):
        # Record under the conservation gate, then claim the strict gate in
        # the header: semantics differ on the second drawdown, so replay must
        # surface the divergence.
        data = presets.registered_with_transfers(deposits=[200, 150], withdrawals=[])
        trace = self.record(tmp_path, data)
        lines = trace.read_text().splitlines()
        header = json.loads(lines[0])
        assert header["payload"]["scenario"]["mode"] == "conservation"
        header["payload"]["scenario"]["mode"] = "strict"
        lines[0] = json.dumps(header, sort_keys=True, separators=(",", ":"))
        trace.write_text("\n".join(lines) + "\n")
        assert cli.main(["replay", str(trace)]) == 3

    def test_empty_trace_is_invalid_input(self, tmp_path):
        path = tmp_path / "empty.trace"
        path.write_text("")
        assert cli.main(["replay", str(path)]) == 1

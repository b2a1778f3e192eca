from __future__ import annotations

import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from pondc.addressing import derive_address_plan, plan_to_csv
from pondc.cli import main
from pondc.config import JitterModel
from pondc.topo import save_scenario


def _rows(path: Path) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(path.read_text(encoding="utf-8"))))


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv("SIM_SEED", raising=False)


@pytest.fixture(scope="module")
def zero_jitter_ref(ref8, tmp_path_factory):
    path = tmp_path_factory.mktemp("scn") / "ref_zero.json"
    save_scenario(ref8.with_jitter(JitterModel.none()), path)
    return path


class TestValidate:
    def test_valid_builtin(self, capsys):
        assert main(["validate", "builtin:ref8"]) == 0
        assert capsys.readouterr().out == ""

    def test_missing_file(self, tmp_path):
        assert main(["validate", str(tmp_path / "none.json")]) == 2

    def test_malformed_file(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert main(["validate", str(bad)]) == 2

    def test_invalid_topology(self, ref8, tmp_path):
        from pondc.topo import scenario_to_dict

        doc = scenario_to_dict(ref8)
        doc["links"] = [lk for lk in doc["links"] if lk["id"] != "CORE3-OLT"]
        path = tmp_path / "cut.json"
        path.write_text(json.dumps(doc))
        assert main(["validate", str(path)]) == 1

    def test_overlapping_plan(self, cell3, tmp_path, capsys):
        from pondc.topo import ScenarioConfig

        scn = tmp_path / "cell.json"
        save_scenario(ScenarioConfig(cell3), scn)
        text = plan_to_csv(derive_address_plan(cell3), cell3)
        # Renumber rack R2 into the upper half of R1's /24.
        for i, nid in enumerate(["R2G", "R2S2", "R2S3"], start=1):
            text = text.replace(f"{nid},10.0.2.0/24,10.0.2.{i},", f"{nid},10.0.1.128/25,10.0.1.{128 + i},")
        text = text.replace(",10.0.2.1\n", ",10.0.1.129\n")
        plan = tmp_path / "plan.csv"
        plan.write_text(text)
        assert main(["validate", str(scn), "--plan", str(plan)]) == 1
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 1 and "Overlap" in lines[0]


class TestTraceroute:
    def test_single_probe(self, tmp_path):
        out = tmp_path / "t"
        code = main(["traceroute", "builtin:ref8", "--iterations", "1", "--probes", "1", "--out", str(out)])
        assert code == 0
        assert len(_rows(out / "probes.csv")) == 8
        assert len(_rows(out / "aggregate.csv")) == 8
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "traceroute" and manifest["seed"] == 2019
        assert sorted(Path(p).name for p in manifest["outputs"]) == ["aggregate.csv", "probes.csv"]

    def test_defaults_give_eight_hops(self, tmp_path):
        out = tmp_path / "t"
        assert main(["traceroute", "builtin:ref8", "--out", str(out)]) == 0
        agg = _rows(out / "aggregate.csv")
        assert len(agg) == 8 and {r["samples"] for r in agg} == {"1500"}

    def test_seed_determinism(self, tmp_path):
        blobs = []
        for run in ("a", "b", "c"):
            out = tmp_path / run
            seed = "99" if run != "c" else "100"
            argv = ["traceroute", "builtin:ref8", "--iterations", "2", "--probes", "5", "--seed", seed]
            assert main([*argv, "--out", str(out)]) == 0
            blobs.append((out / "probes.csv").read_bytes())
        assert blobs[0] == blobs[1] != blobs[2]
        assert b"\r" not in blobs[0]

    def test_env_seed_only_without_flag(self, tmp_path, monkeypatch):
        argv = ["traceroute", "builtin:ref8", "--iterations", "1", "--probes", "3"]
        monkeypatch.setenv("SIM_SEED", "42")
        assert main([*argv, "--out", str(tmp_path / "env")]) == 0
        assert main([*argv, "--seed", "7", "--out", str(tmp_path / "flag")]) == 0
        monkeypatch.delenv("SIM_SEED")
        assert main([*argv, "--seed", "42", "--out", str(tmp_path / "explicit")]) == 0
        env = (tmp_path / "env" / "probes.csv").read_bytes()
        assert env == (tmp_path / "explicit" / "probes.csv").read_bytes()
        assert json.loads((tmp_path / "flag" / "manifest.json").read_text())["seed"] == 7

    def test_bad_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SIM_SEED", "abc")
        assert main(["traceroute", "builtin:ref8", "--out", str(tmp_path)]) == 2

    def test_unknown_endpoint(self, tmp_path):
        assert main(["traceroute", "builtin:ref8", "--to", "NOPE", "--out", str(tmp_path)]) == 1

    def test_manifest_replays(self, tmp_path):
        out = tmp_path / "orig"
        assert main(["traceroute", "builtin:prior5", "--iterations", "2", "--probes", "4", "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        argv = manifest["argv"]
        argv[argv.index("--out") + 1] = str(tmp_path / "replay")
        assert main(argv) == 0
        for name in ("probes.csv", "aggregate.csv"):
            assert (out / name).read_bytes() == (tmp_path / "replay" / name).read_bytes()


class TestFig:
    def test_figure_6_series(self, tmp_path):
        out = tmp_path / "f6"
        assert main(["fig", "builtin:ref8", "--figure", "6", "--out", str(out)]) == 0
        rows = _rows(out / "fig6.csv")
        assert len({r["iteration"] for r in rows}) == 10
        assert len(rows) == 10 * 8

    def test_figure_7_pattern(self, zero_jitter_ref, tmp_path):
        out = tmp_path / "f7"
        assert main(["fig", str(zero_jitter_ref), "--figure", "7", "--out", str(out)]) == 0
        inc = [(r["node_id"], float(r["increment_us"])) for r in _rows(out / "fig7.csv")]
        assert len(inc) == 8
        big = [n for n, d in inc if abs(d - 900) <= 1]
        assert big == ["OLT"]
        assert all(abs(d - 200) <= 1 for n, d in inc if n != "OLT")

    def test_unknown_figure(self, tmp_path):
        assert main(["fig", "builtin:ref8", "--figure", "9", "--out", str(tmp_path)]) == 1


class TestCompare:
    def test_builtin_pair(self, tmp_path, capsys):
        out = tmp_path / "c"
        assert main(["compare", "--out", str(out)]) == 0
        summary = {r["metric"]: r["value"] for r in _rows(out / "compare_summary.csv")}
        assert float(summary["max_shared_delta_us"]) < 1.0
        assert float(summary["e2e_delta_us"]) == pytest.approx(float(summary["added_hops_sum_us"]))
        assert "shared_match: yes" in capsys.readouterr().out

    def test_identity(self, tmp_path, zero_jitter_ref):
        out = tmp_path / "c"
        argv = ["compare", "--baseline", str(zero_jitter_ref), "--variant", str(zero_jitter_ref)]
        assert main([*argv, "--out", str(out)]) == 0
        rows = _rows(out / "compare.csv")
        assert len(rows) == 8
        assert {float(r["delta_us"]) for r in rows} == {0.0}

    def test_no_common_prefix(self, tmp_path, cell3):
        from pondc.topo import ScenarioConfig

        scn = tmp_path / "cell.json"
        save_scenario(ScenarioConfig(cell3), scn)
        assert main(["compare", "--baseline", str(scn), "--out", str(tmp_path / "c")]) == 1


class TestExportAndPing:
    def test_export(self, tmp_path):
        out = tmp_path / "e"
        assert main(["export", "builtin:prior5", "--out", str(out)]) == 0
        assert main(["validate", str(out / "scenario.json")]) == 0
        assert main(["validate", str(out / "scenario.json"), "--plan", str(out / "plan.csv")]) == 0
        assert _rows(out / "routes.csv")[0].keys() == {"src", "dst", "hop_index", "node_id", "link_id"}
        assert (out / "manifest.json").exists()

    def test_ping(self, capsys):
        assert main(["ping", "builtin:ref8", "--count", "3"]) == 0
        assert "loss 0.000" in capsys.readouterr().out


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["traceroute"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["fig", "builtin:ref8", "--figure", "x", "--out", "o"])
    assert info.value.code == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pondc.cli", "validate", str(tmp_path / "missing.json")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert "cannot load scenario" in proc.stderr

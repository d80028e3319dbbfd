import json

import numpy as np
import pytest
import yaml

from boed import cli, configio
from boed.configio import (ConfigError, TraceRecord, apply_overrides,
                           parse_config, read_trace, write_trace)


BASE = {
    "seed": 7,
    "model": {"kind": "death", "n_obs": 1},
    "estimator": {"kind": "abcde", "bank_size": 400},
    "search": {"initial": 12,
               "stages": [{"iterations": 2, "retain": 5, "spawn": 2,
                           "scale": 0.1}]},
}


class TestParseConfig:
    def test_round_trip_dict(self):
        cfg = parse_config(dict(BASE))
        assert cfg.seed == 7
        assert cfg.model["kind"] == "death"
        assert cfg.workers == 1

    def test_missing_seed_rejected(self):
        raw = {k: v for k, v in BASE.items() if k != "seed"}
        with pytest.raises(ConfigError, match="seed"):
            parse_config(raw)

    def test_unknown_model_rejected(self):
        raw = dict(BASE, model={"kind": "bingo"})
        with pytest.raises(ConfigError, match="model.kind"):
            parse_config(raw)

    def test_unknown_top_level_key_rejected(self):
        raw = dict(BASE, tuning={})
        with pytest.raises(ConfigError, match="tuning"):
            parse_config(raw)

    def test_incomplete_stage_rejected(self):
        raw = dict(BASE)
        raw["search"] = {"stages": [{"iterations": 2, "retain": 5}]}
        with pytest.raises(ConfigError, match="spawn"):
            parse_config(raw)

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump(BASE))
        assert parse_config(path).seed == 7


class TestOverrides:
    def test_dotted_paths_with_types(self):
        raw = dict(BASE)
        apply_overrides(raw, ["seed=99", "estimator.bank_size=1000",
                              "model.population=10"])
        assert raw["seed"] == 99
        assert raw["estimator"]["bank_size"] == 1000
        assert raw["model"]["population"] == 10

    def test_malformed_override_rejected(self):
        with pytest.raises(ConfigError):
            apply_overrides(dict(BASE), ["seed:99"])


class TestTraceRoundTrip:
    def test_records_survive_io(self, tmp_path):
        path = tmp_path / "trace.csv"
        records = [
            TraceRecord(generation=0, design_id="init-0", parent_id="",
                        values=np.array([1.234567890123, 2.0]),
                        utility=0.137, b_outer=400, b_inner=1,
                        seconds=0.01, accepted=True, ok=True),
            TraceRecord(generation=1, design_id="g1-0", parent_id="init-0",
                        values=np.array([1.3, 2.1]),
                        utility=float("nan"), b_outer=0, b_inner=0,
                        seconds=0.0, accepted=False, ok=False),
        ]
        write_trace(path, records)
        back = read_trace(path)
        assert len(back) == 2
        assert back[0].design_id == "init-0"
        # repr round-trip keeps values bit-exact
        assert back[0].values[0] == records[0].values[0]
        assert back[0].utility == 0.137
        assert np.isnan(back[1].utility)
        assert back[1].accepted is False and back[1].ok is False

    def test_version_check(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text("other-format\n")
        with pytest.raises(ValueError, match="version"):
            read_trace(path)


class TestCli:
    def write_config(self, tmp_path, raw):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump(raw))
        return str(path)

    def test_insh_smoke(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, BASE)
        out = tmp_path / "out"
        rc = cli.main(["insh", "--config", cfg, "--out", str(out)])
        assert rc == 0
        result = json.loads((out / "result.json").read_text())
        assert result["command"] == "insh"
        assert 0.05 <= result["best"]["values"][0] <= 10.0
        trace = read_trace(out / "trace.csv")
        assert len(trace) == result["evaluations"]
        assert (out / "convergence.csv").exists()

    def test_grid_smoke(self, tmp_path):
        raw = dict(BASE, grid={"spacing": 1.0})
        cfg = self.write_config(tmp_path, raw)
        out = tmp_path / "out"
        rc = cli.main(["grid", "--config", cfg, "--out", str(out)])
        assert rc == 0
        result = json.loads((out / "result.json").read_text())
        assert result["evaluations"] == 10

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = self.write_config(tmp_path, BASE)
        outs = []
        for seed, tag in ((7, "a"), (7, "b"), (8, "c")):
            out = tmp_path / tag
            rc = cli.main(["insh", "--config", cfg, "--seed", str(seed),
                           "--out", str(out)])
            assert rc == 0
            outs.append(json.loads((out / "result.json").read_text()))
        assert outs[0]["best"] == outs[1]["best"]
        assert outs[0]["best"] != outs[2]["best"]

    def test_bad_config_exits_2(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, {"model": {"kind": "death"}})
        assert cli.main(["insh", "--config", cfg]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, tmp_path):
        assert cli.main(["insh", "--config", str(tmp_path / "nope.yaml")]) == 2

    def test_runtime_failure_exits_3(self, tmp_path, capsys):
        # Valid config whose search cannot run: initial population too small
        # to be scored against an impossible retain size is fine, so instead
        # point the estimator at an impossible bank size.
        raw = dict(BASE)
        raw["estimator"] = {"kind": "abcde", "bank_size": -5}
        cfg = self.write_config(tmp_path, raw)
        rc = cli.main(["insh", "--config", cfg, "--out",
                       str(tmp_path / "out")])
        assert rc == 3
        assert "runtime failure" in capsys.readouterr().err

    def test_mcmc_smoke(self, tmp_path):
        raw = dict(BASE, mcmc={"chain_length": 200, "burn_in": 50,
                               "proposal_scale": 1.0})
        raw["estimator"] = {"kind": "abcde", "bank_size": 200}
        cfg = self.write_config(tmp_path, raw)
        out = tmp_path / "out"
        rc = cli.main(["mcmc", "--config", cfg, "--out", str(out)])
        assert rc == 0
        result = json.loads((out / "result.json").read_text())
        assert 0.05 <= result["mode"][0] <= 10.0
        chain = np.loadtxt(out / "chain.csv", delimiter=",", skiprows=1)
        assert chain.shape == (150,)

    def test_windows_after_insh(self, tmp_path):
        raw = dict(BASE,
                   windows={"top_k": 5, "n_bootstrap": 4},
                   evaluate={"b_outer": 200, "b_inner": 200, "repeats": 2})
        cfg = self.write_config(tmp_path, raw)
        out = tmp_path / "out"
        assert cli.main(["insh", "--config", cfg, "--out", str(out)]) == 0
        assert cli.main(["windows", "--config", cfg, "--out", str(out)]) == 0
        result = json.loads((out / "result.json").read_text())
        assert len(result["bootstrap_designs"]) == 4
        assert result["efficiency"] > 0

    def test_evaluate_and_compare(self, tmp_path):
        raw = dict(BASE,
                   evaluate={"b_outer": 200, "b_inner": 200, "repeats": 3,
                             "designs": {"early": [1.0], "late": [6.0]}},
                   compare={"designs": {"early": [1.0], "late": [6.0]}})
        cfg = self.write_config(tmp_path, raw)
        out = tmp_path / "out"
        assert cli.main(["evaluate", "--config", cfg, "--out", str(out)]) == 0
        result = json.loads((out / "result.json").read_text())
        assert set(result["summary"]) == {"early", "late"}
        # The early observation time is far more informative than the late one.
        assert result["summary"]["early"]["mean"] > result["summary"]["late"]["mean"]
        assert cli.main(["compare", "--config", cfg, "--out", str(out)]) == 0

    def test_evaluate_empty_designs_exits_2(self, tmp_path):
        cfg = self.write_config(tmp_path, dict(BASE, evaluate={}))
        assert cli.main(["evaluate", "--config", cfg, "--out",
                         str(tmp_path / "out")]) == 2

    def test_override_flag(self, tmp_path):
        cfg = self.write_config(tmp_path, BASE)
        out = tmp_path / "out"
        rc = cli.main(["insh", "--config", cfg, "--out", str(out),
                       "--override", "search.initial=6"])
        assert rc == 0
        result = json.loads((out / "result.json").read_text())
        assert result["config"]["search"]["initial"] == 6

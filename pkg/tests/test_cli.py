import json

import numpy as np
import pytest

from nmbloch.cli import RunConfig, main
from nmbloch.errors import ConfigurationError

BASE = {
    "mode": "bloch",
    "kernel": {"type": "ou", "Gamma": 1.0, "gamma": 0.2},
    "omega": 1.0,
    "order": 10,
    "dt": 0.01,
    "t_max": 2.0,
    "stride": 10,
}


def write_config(tmp_path, overrides=None, name="run.json"):
    cfg = dict(BASE)
    if overrides:
        cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    return header, rows


class TestConfigValidation:
    def test_unknown_top_level_field(self):
        with pytest.raises(ConfigurationError, match="unknown config"):
            RunConfig.from_dict({**BASE, "tmax": 3.0})

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError, match="mode"):
            RunConfig.from_dict({**BASE, "mode": "exact"})

    def test_mc_requires_seed_and_n_traj(self):
        with pytest.raises(ConfigurationError, match="n_traj"):
            RunConfig.from_dict({**BASE, "mode": "mc"})

    def test_sweep_requires_values(self):
        with pytest.raises(ConfigurationError, match="values"):
            RunConfig.from_dict({**BASE, "mode": "sweep", "sweep": {"param": "gamma", "values": []}})

    def test_sweep_unknown_param(self):
        with pytest.raises(ConfigurationError, match="parameter"):
            RunConfig.from_dict(
                {**BASE, "mode": "sweep", "sweep": {"param": "lambda", "values": [1.0]}}
            )

    def test_kernel_spec_checked_up_front(self):
        with pytest.raises(ConfigurationError, match="kernel"):
            RunConfig.from_dict({**BASE, "kernel": {"type": "ou", "Gamma": 1.0}})


class TestMain:
    def test_bloch_run_writes_csv_and_manifest(self, tmp_path):
        cfg = write_config(tmp_path, {"output": str(tmp_path / "out")})
        assert main(["--config", str(cfg), "--quiet"]) == 0
        csv = tmp_path / "out" / "bloch.csv"
        manifest = tmp_path / "out" / "bloch.manifest.json"
        assert csv.exists() and manifest.exists()
        header, rows = read_csv(csv)
        assert header == ["t", "sx", "sy", "sz"]
        assert rows[0, 0] == 0.0 and rows[-1, 0] == 2.0
        assert rows[0, 3] == 1.0
        m = json.loads(manifest.read_text())
        assert m["artifact_version"]
        assert m["config"]["order"] == 10
        assert "max_imag" in m["diagnostics"]

    def test_byte_identical_reruns(self, tmp_path):
        cfg1 = write_config(tmp_path, {"output": str(tmp_path / "a")})
        cfg2 = write_config(tmp_path, {"output": str(tmp_path / "b")}, name="run2.json")
        assert main(["--config", str(cfg1), "--quiet"]) == 0
        assert main(["--config", str(cfg2), "--quiet"]) == 0
        assert (tmp_path / "a" / "bloch.csv").read_bytes() == (tmp_path / "b" / "bloch.csv").read_bytes()

    def test_mc_run_has_se_columns_and_is_deterministic(self, tmp_path):
        over = {"mode": "mc", "n_traj": 32, "seed": 11, "noise_dt": 0.1,
                "t_max": 1.0, "stride": 1, "output": str(tmp_path / "mc1")}
        cfg = write_config(tmp_path, over)
        assert main(["--config", str(cfg), "--quiet"]) == 0
        header, rows = read_csv(tmp_path / "mc1" / "mc.csv")
        assert header == ["t", "sx", "sy", "sz", "se_sx", "se_sy", "se_sz"]
        over["output"] = str(tmp_path / "mc2")
        cfg2 = write_config(tmp_path, over, name="mc2.json")
        assert main(["--config", str(cfg2), "--quiet"]) == 0
        assert (tmp_path / "mc1" / "mc.csv").read_bytes() == (tmp_path / "mc2" / "mc.csv").read_bytes()

    def test_malformed_json_exits_2_without_files(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "never"
        code = main(["--config", str(bad), "--output", str(out), "--quiet"])
        assert code == 2
        assert not out.exists()

    def test_invalid_config_exits_2(self, tmp_path):
        cfg = write_config(tmp_path, {"order": -3, "output": str(tmp_path / "x")})
        assert main(["--config", str(cfg), "--quiet"]) == 2
        assert not (tmp_path / "x").exists()

    def test_numerical_failure_exits_1(self, tmp_path):
        # hard RK4 instability: decay * order * dt far over the limit
        over = {"kernel": {"type": "ou", "Gamma": 1.0, "gamma": 50.0},
                "order": 20, "dt": 0.05, "t_max": 5.0,
                "output": str(tmp_path / "blow")}
        cfg = write_config(tmp_path, over)
        assert main(["--config", str(cfg), "--quiet"]) == 1

    def test_flag_overrides(self, tmp_path):
        cfg = write_config(tmp_path, {"output": str(tmp_path / "o1")})
        assert main(["--config", str(cfg), "--t-max", "1.0", "--order", "5",
                     "--output", str(tmp_path / "o2"), "--quiet"]) == 0
        assert not (tmp_path / "o1").exists()
        header, rows = read_csv(tmp_path / "o2" / "bloch.csv")
        assert rows[-1, 0] == 1.0
        m = json.loads((tmp_path / "o2" / "bloch.manifest.json").read_text())
        assert m["config"]["order"] == 5

    def test_roundtrip_precision(self, tmp_path):
        cfg = write_config(tmp_path, {"output": str(tmp_path / "p")})
        main(["--config", str(cfg), "--quiet"])
        from nmbloch import ExponentialKernel, SystemSpec, propagate

        ref = propagate(SystemSpec(omega=1.0, kernel=ExponentialKernel(0.1, 0.2)),
                        10, 0.01, 2.0, stride=10)
        _, rows = read_csv(tmp_path / "p" / "bloch.csv")
        assert np.array_equal(rows[:, 3], ref.sz)  # 17 significant digits round-trip


class TestThermalRouting:
    def test_thermal_zero_temperature_matches_complex_exp(self, tmp_path):
        therm = write_config(tmp_path, {
            "kernel": {"type": "thermal", "Gamma": 1.0, "gamma": 0.2, "Omega": 1.0, "T": 0.0},
            "correction": "sigma-x-freeze", "output": str(tmp_path / "th")})
        cexp = write_config(tmp_path, {
            "kernel": {"type": "complex-exp", "Gamma": 1.0, "gamma": 0.2, "Omega": 1.0},
            "correction": "sigma-x-freeze", "output": str(tmp_path / "ce")}, name="ce.json")
        assert main(["--config", str(therm), "--quiet"]) == 0
        assert main(["--config", str(cexp), "--quiet"]) == 0
        assert (tmp_path / "th" / "bloch.csv").read_bytes() == (tmp_path / "ce" / "bloch.csv").read_bytes()

    def test_thermal_finite_temperature_runs_fit_route(self, tmp_path):
        cfg = write_config(tmp_path, {
            "kernel": {"type": "thermal", "Gamma": 1.0, "gamma": 0.2, "Omega": 1.0, "T": 0.001},
            "output": str(tmp_path / "tf")})
        assert main(["--config", str(cfg), "--quiet"]) == 0
        m = json.loads((tmp_path / "tf" / "bloch.manifest.json").read_text())
        assert 0 < m["diagnostics"]["fit_residual"] < 0.05


class TestSweep:
    def test_gamma_sweep_with_hold(self, tmp_path):
        cfg = write_config(tmp_path, {
            "mode": "sweep", "order": 10, "t_max": 1.0,
            "sweep": {"param": "gamma", "values": [0.2, 0.4, 0.8], "hold": "gamma_Gamma"},
            "output": str(tmp_path / "sw")})
        assert main(["--config", str(cfg), "--quiet"]) == 0
        outdir = tmp_path / "sw"
        for v in (0.2, 0.4, 0.8):
            assert (outdir / f"gamma={v:g}.csv").exists()
            assert (outdir / f"gamma={v:g}.manifest.json").exists()
        idx = json.loads((outdir / "index.json").read_text())
        assert idx["complete"] is True
        assert [r["value"] for r in idx["runs"]] == [0.2, 0.4, 0.8]
        # hold convention: Gamma co-varies to keep gamma*Gamma fixed
        m = json.loads((outdir / "gamma=0.8.manifest.json").read_text())
        assert m["config"]["kernel"]["Gamma"] == pytest.approx(0.25)

    def test_order_sweep(self, tmp_path):
        cfg = write_config(tmp_path, {
            "mode": "sweep", "t_max": 1.0,
            "sweep": {"param": "N", "values": [0, 3, 10]},
            "output": str(tmp_path / "sn")})
        assert main(["--config", str(cfg), "--quiet"]) == 0
        idx = json.loads((tmp_path / "sn" / "index.json").read_text())
        assert len(idx["runs"]) == 3

    def test_failing_entry_aborts_with_partial_index(self, tmp_path):
        cfg = write_config(tmp_path, {
            "mode": "sweep", "order": 20, "dt": 0.05, "t_max": 5.0,
            "sweep": {"param": "gamma", "values": [0.2, 50.0, 0.4]},
            "output": str(tmp_path / "sf")})
        assert main(["--config", str(cfg), "--quiet"]) == 1
        idx = json.loads((tmp_path / "sf" / "index.json").read_text())
        assert idx["complete"] is False
        assert len(idx["runs"]) == 1


class TestCompare:
    def test_compare_writes_methods_and_deltas(self, tmp_path):
        cfg = write_config(tmp_path, {
            "mode": "compare", "order": 10, "dt": 0.02, "t_max": 2.0, "stride": 5,
            "oracle": {"modes": 24, "cutoff": 2, "step": 0.1},
            "output": str(tmp_path / "cmp")})
        assert main(["--config", str(cfg), "--quiet"]) == 0
        outdir = tmp_path / "cmp"
        for name in ("bloch.csv", "oracle.csv", "delta_oracle.csv"):
            assert (outdir / name).exists()
        m = json.loads((outdir / "delta_oracle.manifest.json").read_text())
        assert "sup_norms" in m and "sup_dsz" in m["sup_norms"]
        # matched parameters: methods agree lightly even on this small case
        assert m["sup_norms"]["sup_dsz"] < 0.05

import io
import json
import math
import os

import jsonschema
import pytest
from pydantic import ValidationError

from fracslow import ConfigurationError
from fracslow.cli import resolve_threads, run
from fracslow.config import config_hash, format_errors, parse_config
from fracslow.io import atomic_write, csv_text, output_schema, render_json

LIN = {"kind": "linear_1d", "a": -1, "f_amp": 1, "eps": 0.01, "sigma": 0.1, "hurst": 0.7}
CLIMATE = {"kind": "climate_full", "sigma1": 0.01, "sigma2": 0, "eps": 0.01, "hurst": 0.7,
           "mu": 1.0, "eta_sq": 7.5}

CONFIGS = {
    "sample": {"grid": {"dt": 0.25, "n": 4}, "method": "circulant", "hurst": 0.7, "m": 2},
    "fou": {"a": -1, "f_amp": 1, "eps": 0.01, "sigma": 0.1, "hurst": 0.7, "times": [0.1, 0.2]},
    "zeta": {"a": -1, "f_amp": 1, "hurst": 0.7},
    "lyapunov": {"a_matrix": [[-1, 0.3], [0, -2]], "hurst": 0.7},
    "bounds": {"formula": "variant1", "alpha_t": 1, "eps": 0.01, "h": 0.6, "sigma": 0.1},
    "simulate": {"system": LIN, "grid": {"dt": 0.001, "n": 20}, "x0": 0, "h": 3},
    "mc": {"system": LIN, "grid": {"dt": 0.001, "n": 50}, "x0": 0, "replicas": 300,
           "h_levels": [0.3, 0.4], "bounds": ["variant1", "md_symmetric"], "chunk": 64},
    "climate": {"system": CLIMATE, "grid": {"dt": 0.001, "n": 100}, "x0": 1, "y0": 0.5,
                "h": 0.2},
}


def doc(command, seed=5, **extra):
    return {"command": command, "parameters": CONFIGS[command], "seed": seed, **extra}


def invoke(args, cwd):
    out, err = io.StringIO(), io.StringIO()
    old = os.getcwd()
    os.chdir(cwd)
    try:
        code = run(args, out, err)
    finally:
        os.chdir(old)
    return code, out.getvalue(), err.getvalue()


def write_config(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


class TestConfig:
    def test_missing_sigma_named(self):
        d = doc("fou")
        d["parameters"] = {k: v for k, v in d["parameters"].items() if k != "sigma"}
        with pytest.raises(ValidationError) as info:
            parse_config(json.dumps(d))
        assert "parameters.sigma" in format_errors(info.value)

    def test_unknown_key(self):
        d = doc("zeta")
        d["parameters"] = {**d["parameters"], "colour": 1}
        with pytest.raises(ValidationError, match="colour"):
            parse_config(json.dumps(d))

    @pytest.mark.parametrize("params,msg", [
        ({"a": "-1", "f_amp": 1, "hurst": 0.7}, "a"),
        ({"a": -1, "f_amp": 1, "hurst": 0.5}, "brownian_limit"),
        ({"a": 1, "f_amp": 1, "hurst": 0.7}, "a"),
        ({"a": -1, "f_amp": 1, "hurst": 1.0}, "hurst"),
    ])
    def test_strict_values(self, params, msg):
        with pytest.raises(ValidationError, match=msg):
            parse_config(json.dumps({"command": "zeta", "parameters": params}))

    def test_brownian_flag(self):
        run_cfg = parse_config(json.dumps({"command": "zeta", "parameters": {
            "a": -1, "f_amp": 1, "hurst": 0.5, "brownian_limit": True}}))
        assert run_cfg.parameters.brownian_limit

    def test_integer_field_rejects_float(self):
        d = doc("sample")
        d["parameters"] = {**d["parameters"], "grid": {"dt": 0.1, "n": 3.0}}
        with pytest.raises(ValidationError):
            parse_config(json.dumps(d))

    def test_hash_ignores_key_order_and_path(self):
        a = doc("mc", output={"path": "a.json", "format": "json"})
        b = json.loads(json.dumps(a))
        b["parameters"] = dict(reversed(list(b["parameters"].items())))
        b["output"]["path"] = "elsewhere/b.json"
        ha = config_hash(parse_config(json.dumps(a)))
        hb = config_hash(parse_config(json.dumps(b, sort_keys=True)))
        assert ha == hb and len(ha) == 64

    def test_hash_tracks_content(self):
        a = config_hash(parse_config(json.dumps(doc("zeta"))))
        d = doc("zeta")
        d["parameters"] = {**d["parameters"], "hurst": 0.71}
        assert a != config_hash(parse_config(json.dumps(d)))


class TestIo:
    def test_csv_dialect(self):
        text = csv_text(("a", "b", "c"), [(0.1, True, 3)])
        assert text == "a,b,c\n0.1,1,3\n"

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        p = tmp_path / "sub" / "x.txt"
        atomic_write(p, "hello\n")
        atomic_write(p, "again\n")
        assert p.read_text() == "again\n"
        assert os.listdir(p.parent) == ["x.txt"]

    def test_render_json_rejects_nan(self):
        from fracslow.io import ZetaOut

        with pytest.raises(ValueError):
            render_json(ZetaOut(config_hash="x", zeta=math.nan, hurst_factor=1.0))


class TestCommands:
    @pytest.mark.parametrize("command", sorted(CONFIGS))
    def test_json_validates_against_schema(self, tmp_path, command):
        cfg = write_config(tmp_path, doc(command))
        code, out, err = invoke([command, "--config", cfg, "--out", "r.json"], tmp_path)
        assert code == 0, err
        data = json.loads((tmp_path / "r.json").read_text())
        jsonschema.validate(data, output_schema(command))
        assert data["config_hash"] in out
        assert data["seed"] == 5

    @pytest.mark.parametrize("command", sorted(set(CONFIGS) - {"climate"}))
    def test_csv_is_numeric_with_header(self, tmp_path, command):
        cfg = write_config(tmp_path, doc(command))
        code, _, err = invoke([command, "--config", cfg, "--out", "r.csv"], tmp_path)
        assert code == 0, err
        raw = (tmp_path / "r.csv").read_bytes()
        assert b"\r\n" not in raw and b'"' not in raw
        lines = raw.decode().splitlines()
        assert len(lines) >= 2
        width = len(lines[0].split(","))
        assert all(len(ln.split(",")) == width for ln in lines)

    def test_zeta_value(self, tmp_path):
        cfg = write_config(tmp_path, doc("zeta"))
        invoke(["zeta", "--config", cfg, "--out", "z.json"], tmp_path)
        data = json.loads((tmp_path / "z.json").read_text())
        assert data["zeta"] == pytest.approx(0.6210847, rel=1e-7)

    def test_bounds_sweep(self, tmp_path):
        d = doc("bounds")
        d["parameters"] = {**d["parameters"], "h": [0.4, 0.6], "t": 0.5}
        cfg = write_config(tmp_path, d)
        invoke(["bounds", "--config", cfg, "--out", "b.csv"], tmp_path)
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert lines[0] == "h,sigma,eps,t,value,vacuous"
        assert lines[1].endswith(",1") and lines[2].endswith(",0")

    def test_climate_bundle(self, tmp_path):
        cfg = write_config(tmp_path, doc("climate"))
        code, out, _ = invoke(["climate", "--config", cfg, "--out", "fig.csv"], tmp_path)
        assert code == 0
        for part in ("trajectory", "deterministic", "critical_manifold", "band"):
            assert (tmp_path / f"fig_{part}.csv").exists()
        band = (tmp_path / "fig_band.csv").read_text().splitlines()
        assert band[0] == "t,lower,upper"
        lo, hi = map(float, band[1].split(",")[1:])
        half = 0.2 * math.sqrt(0.7 * math.gamma(1.4))
        assert lo == pytest.approx(1 - half) and hi == pytest.approx(1 + half)

    def test_climate_sigma_zero_matches_deterministic(self, tmp_path):
        d = doc("climate")
        d["parameters"] = {**d["parameters"], "system": {**CLIMATE, "sigma1": 0}}
        cfg = write_config(tmp_path, d)
        invoke(["climate", "--config", cfg, "--out", "c.csv"], tmp_path)
        a = (tmp_path / "c_trajectory.csv").read_text()
        b = (tmp_path / "c_deterministic.csv").read_text()
        assert a == b

    def test_climate_reduced_periodic(self, tmp_path):
        system = {"kind": "climate_reduced", "sigma2": "periodic", "eps": 0.01, "hurst": 0.6,
                  "eta_sq": 7.5, "g_slow": [1.0, 0.0, -1.0]}
        d = {"command": "climate", "seed": 3, "parameters": {
            "system": system, "grid": {"dt": 0.005, "n": 400}, "x0": 0.2, "y0": 0.3, "h": 3}}
        cfg = write_config(tmp_path, d)
        code, _, err = invoke(["climate", "--config", cfg, "--out", "r.csv"], tmp_path)
        assert code == 0, err
        assert (tmp_path / "r_band.csv").exists()


class TestExitCodes:
    def test_validation_error_exit_2(self, tmp_path):
        d = doc("bounds")
        d["parameters"] = {**d["parameters"], "sigma": "big"}
        cfg = write_config(tmp_path, d)
        code, _, err = invoke(["bounds", "--config", cfg], tmp_path)
        assert code == 2 and "parameters.sigma" in err

    def test_missing_runtime_input_exit_2(self, tmp_path):
        d = doc("bounds")
        d["parameters"] = {k: v for k, v in d["parameters"].items() if k != "sigma"}
        cfg = write_config(tmp_path, d)
        code, _, err = invoke(["bounds", "--config", cfg], tmp_path)
        assert code == 2 and "sigma" in err

    def test_numerical_error_exit_1(self, tmp_path):
        d = doc("bounds")
        d["parameters"] = {"formula": "nonlinear_variant1", "alpha_t": 1, "eps": 0.01, "h": 5.0,
                           "sigma": 0.1, "big_m": 1.0, "a_low": 1.0, "zeta_plus": 1.0,
                           "zeta_minus": 1.0}
        cfg = write_config(tmp_path, d)
        code, _, err = invoke(["bounds", "--config", cfg], tmp_path)
        assert code == 1 and "HTooLargeError" in err

    def test_command_mismatch(self, tmp_path):
        cfg = write_config(tmp_path, doc("zeta"))
        code, _, err = invoke(["fou", "--config", cfg], tmp_path)
        assert code == 2 and "command" in err

    def test_missing_file(self, tmp_path):
        code, _, _ = invoke(["zeta", "--config", "nope.json"], tmp_path)
        assert code == 2

    def test_inline_config_and_default_path(self, tmp_path):
        code, out, _ = invoke(["zeta", "--config", json.dumps(doc("zeta"))], tmp_path)
        assert code == 0 and (tmp_path / "fracslow_zeta.json").exists()

    def test_schema_flag(self, tmp_path):
        code, out, _ = invoke(["mc", "--schema"], tmp_path)
        assert code == 0 and json.loads(out)["title"] == "McOut"


class TestSeedsAndThreads:
    def test_fresh_seed_recorded(self, tmp_path):
        d = doc("sample")
        d.pop("seed")
        cfg = write_config(tmp_path, d)
        code, out, _ = invoke(["sample", "--config", cfg, "--out", "s.json"], tmp_path)
        seed = json.loads((tmp_path / "s.json").read_text())["seed"]
        assert isinstance(seed, int) and f"seed={seed}" in out

    def test_cli_seed_overrides(self, tmp_path):
        cfg = write_config(tmp_path, doc("sample"))
        invoke(["sample", "--config", cfg, "--out", "a.json", "--seed", "9"], tmp_path)
        assert json.loads((tmp_path / "a.json").read_text())["seed"] == 9

    def test_env_threads_only_without_flag(self):
        env = {"FRACSLOW_THREADS": "6"}
        assert resolve_threads(None, env) == 6
        assert resolve_threads(2, env) == 2
        assert resolve_threads(None, {}) == 1
        with pytest.raises(ConfigurationError):
            resolve_threads(None, {"FRACSLOW_THREADS": "many"})

    @pytest.mark.parametrize("command", ["mc", "simulate"])
    def test_byte_identical_across_threads(self, tmp_path, command, monkeypatch):
        cfg = write_config(tmp_path, doc(command))
        outs = []
        for threads in ("1", "8"):
            monkeypatch.setenv("FRACSLOW_THREADS", threads)
            for fmt in ("json", "csv"):
                name = f"{threads}.{fmt}"
                assert invoke([command, "--config", cfg, "--out", name], tmp_path)[0] == 0
            outs.append(((tmp_path / f"{threads}.json").read_bytes(),
                         (tmp_path / f"{threads}.csv").read_bytes()))
        assert outs[0] == outs[1]

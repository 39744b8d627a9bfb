"""Configuration parsing, output files and the command-line contract."""

import csv
import json

import pytest

from platesim.cli_io import (
    DEFAULTS,
    ConfigViolations,
    RunRecord,
    fmt,
    main,
    parse_config,
    run,
    to_json,
    write_outputs,
)

SIMULATE = {
    "kind": "simulate",
    "seed": 3,
    "discretization": {"N": 8, "dt": 0.01},
    "damping": {"base": {"key": "constant", "params": {"c0": 1.0}}},
    "experiment": {"t1": 2.0, "record_every": 10},
}

ATTRACTOR = {
    "kind": "attractor",
    "seed": 4,
    "discretization": {"N": 8, "dt": 0.01},
    "damping": {"base": {"key": "sin_t", "params": {"c0": 1.0, "c1": 0.5}}, "alpha0": 0.5, "alpha1": 1.5},
    "nonlinearity": {"key": "cubic", "params": {"kappa": 1.0}},
    "experiment": {"m": 12, "radius": 2.0, "T_back": 2.0, "invariance_lag": 1.0},
}


def write_config(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return p


def invoke(tmp_path, obj, kind=None, out="out", extra=()):
    cfg = write_config(tmp_path, obj)
    kind = kind or obj["kind"]
    return main([kind, "--config", str(cfg), "--out", str(tmp_path / out), *extra])


class TestParse:
    def test_defaults(self):
        cfg = parse_config(json.dumps({"kind": "simulate", "seed": 1}))
        assert cfg.N == DEFAULTS["N"] == 16
        assert cfg.dt == DEFAULTS["dt"] == 0.01
        assert cfg.lam == 1.0 and cfg.nu == 0.25

    def test_negative_lambda(self):
        with pytest.raises(ConfigViolations) as info:
            parse_config(json.dumps({"kind": "simulate", "seed": 1, "lambda": -1}))
        assert "lambda" in info.value.fields()
        assert "range" in info.value.kinds()

    def test_unknown_damping_key(self):
        with pytest.raises(ConfigViolations) as info:
            parse_config(json.dumps({"kind": "simulate", "seed": 1, "damping": {"base": {"key": "wavy"}}}))
        assert info.value.kinds() == {"unknown-catalog-entry"}

    def test_syntax_error_has_position(self):
        with pytest.raises(ConfigViolations) as info:
            parse_config('{"kind": "simulate",\n  "seed": }')
        (v,) = info.value.items
        assert v.kind == "syntax" and "line 2" in v.message

    def test_all_violations_collected(self):
        bad = {"kind": "simulate", "lambda": 0, "discretization": {"N": 0, "dt": -1}, "colour": "red"}
        with pytest.raises(ConfigViolations) as info:
            parse_config(json.dumps(bad))
        assert {"lambda", "N", "dt", "seed", "colour"} <= info.value.fields()

    def test_seed_override(self):
        cfg = parse_config(json.dumps({"kind": "simulate"}), seed=99)
        assert cfg.seed == 99

    def test_kind_conflict(self):
        with pytest.raises(ConfigViolations):
            parse_config(json.dumps({"kind": "simulate", "seed": 1}), kind="attractor")

    def test_dealiasing_violation(self):
        text = json.dumps({"kind": "simulate", "seed": 1, "discretization": {"N": 8, "M": 10},
                           "nonlinearity": "neg_cubic"})
        with pytest.raises(ConfigViolations) as info:
            parse_config(text)
        assert "discretization.M" in info.value.fields()


class TestSerialisation:
    @pytest.mark.parametrize("x", [0.1, 1 / 3, 2.0**-1074, 1.7976931348623157e308, -0.0])
    def test_round_trip(self, x):
        assert float(fmt(x)) == x

    def test_json_sorted_keys(self):
        assert to_json({"b": 1, "a": 0.5}) == '{\n  "a": 0.5,\n  "b": 1\n}'

    def test_empty_record(self, tmp_path):
        written = write_outputs(RunRecord(config={}), tmp_path)
        assert sorted(p.name for p in written) == ["config.json", "summary.json"]
        assert sorted(p.name for p in tmp_path.iterdir()) == ["config.json", "summary.json"]


class TestRun:
    def test_simulate_homogeneous(self, tmp_path):
        assert invoke(tmp_path, SIMULATE) == 0
        out = tmp_path / "out"
        with (out / "trajectory.csv").open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "norm_X0", "norm_half_u", "norm_L2_v", "W", "calW"]
        assert len(rows) == 1 + 21
        certs = json.loads((out / "certificates.json").read_text())
        assert certs["homogeneous_decay"]["passed"]

    def test_attractor_section_rows(self, tmp_path):
        assert invoke(tmp_path, ATTRACTOR) == 0
        out = tmp_path / "out"
        sections = sorted(out.glob("attractor_section_*.csv"))
        assert sections
        for p in sections:
            with p.open() as fh:
                rows = list(csv.reader(fh))
            assert rows[0][0] == "point_id"
            assert len(rows) - 1 == 12
        with next(out.glob("convergence_*.csv")).open() as fh:
            assert next(csv.reader(fh)) == ["n", "tau", "dist_forward", "dist_backward"]

    def test_upper_semi_single_eps(self, tmp_path):
        obj = dict(ATTRACTOR, kind="upper-semi",
                   damping=dict(ATTRACTOR["damping"], perturbation={"key": "sin_x"}, eps_list=[0.0]),
                   experiment={"m": 10, "radius": 2.0, "T_back": 2.0})
        rec = run(parse_config(json.dumps(obj)))
        table = rec.tables["semicontinuity.csv"]
        assert table.header == ["eps", "damping_gap_sup", "hausdorff_eps_to_0", "hausdorff_0_to_eps",
                                "cloud_resolution", "gronwall_bound", "max_traj_deviation"]
        assert len(table.rows) == 1
        assert table.rows[0][2] == 0.0

    def test_misdeclared_alpha0(self, tmp_path, capsys):
        obj = {"kind": "validate-coeffs", "seed": 1,
               "damping": {"base": {"key": "constant", "params": {"c0": 1.0}}, "alpha0": 3.0, "alpha1": 3.0}}
        assert invoke(tmp_path, obj) == 2
        assert "FAIL" in capsys.readouterr().out
        certs = json.loads((tmp_path / "out" / "certificates.json").read_text())
        failed = [k for k, c in certs.items() if not c["passed"]]
        assert failed and all("damping" in k for k in failed)

    def test_config_error_writes_nothing(self, tmp_path, capsys):
        assert invoke(tmp_path, {"kind": "simulate", "seed": 1, "lambda": -1}) == 1
        assert not (tmp_path / "out").exists()
        assert "lambda" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1

    def test_byte_identical_reruns(self, tmp_path):
        assert invoke(tmp_path, ATTRACTOR, out="a") == 0
        assert invoke(tmp_path, ATTRACTOR, out="b", extra=("--threads", "3")) == 0
        a = {p.name: p.read_bytes() for p in (tmp_path / "a").iterdir()}
        b = {p.name: p.read_bytes() for p in (tmp_path / "b").iterdir()}
        assert a == b

    def test_thread_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("PLATESIM_THREADS", "2")
        assert invoke(tmp_path, SIMULATE, out="env") == 0
        monkeypatch.delenv("PLATESIM_THREADS")
        assert invoke(tmp_path, SIMULATE, out="plain") == 0
        assert (tmp_path / "env" / "trajectory.csv").read_bytes() == (tmp_path / "plain" / "trajectory.csv").read_bytes()

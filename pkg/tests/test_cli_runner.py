import json
import subprocess
import sys

import pytest

from fracpath import acceptance as acc
from fracpath import cli_runner as cli
from fracpath.cli_runner import (EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_TOLERANCE, ConfigError,
                                 parse_config)

RL_SMALL = """
[experiment]
id = rl-check
seed = 5

[params]
n_paths = 4
max_jumps = 8
n_eval = 4
"""


def write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def csv_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

class TestParse:
    def test_minimal_defaults(self):
        cfg = parse_config("[experiment]\nid = tv-profile\n")
        assert cfg.seed == 0 and cfg.replicas == 10_000
        assert cfg.params == {} and cfg.out_dir == "out"

    def test_typed_values(self):
        cfg = parse_config("[experiment]\nid = hedge-rate\nreplicas = 500\n"
                           "[params]\nn_list = 4, 8, 16, 32, 64\nmc_n = 16\n[output]\ndir = res\n")
        assert cfg.params["n_list"] == [4, 8, 16, 32, 64]
        assert cfg.replicas == 500 and cfg.replicas_explicit and cfg.out_dir == "res"

    def test_theta_range_names_key(self):
        with pytest.raises(ConfigError, match=r"\[params\]\.theta"):
            parse_config("[experiment]\nid = net-check\n[params]\ntheta = 1.5\n")

    def test_short_n_list(self):
        with pytest.raises(ConfigError, match=r"\[params\]\.n_list.*at least 5"):
            parse_config("[experiment]\nid = hedge-rate\n[params]\nn_list = 4, 8\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("[experiment]\nid = gkw\nseed = 1\nseed = 2\n")

    @pytest.mark.parametrize("text,path", [
        ("[experiment]\nid = gkw\nfoo = 1\n", r"\[experiment\]\.foo"),
        ("[experiment]\nid = gkw\n[params]\nwidth = 2\n", r"\[params\]\.width"),
        ("[experiment]\nseed = 1\n", r"\[experiment\]\.id"),
        ("[experiment]\nid = gkw\nseed = abc\n", r"\[experiment\]\.seed"),
        ("[experiment]\nid = gkw\n[params]\nerr_replicas = 1.5\n", r"\[params\]\.err_replicas"),
        ("[experiment]\nid = nope\n", r"\[experiment\]\.id"),
        ("[experiment]\nid = gkw\n[extra]\nx = 1\n", r"\[extra\]"),
        ("[experiment]\nid = osc-rate\n[params]\nd_min = 0.1\nd_max = 0.01\n", r"d_min"),
    ])
    def test_errors_name_key_path(self, text, path):
        with pytest.raises(ConfigError, match=path):
            parse_config(text)

    def test_every_criterion_has_an_id(self):
        for cid in acc.CRITERIA:
            assert cli.EXPERIMENTS[f"acceptance-{cid}"] == cid
        assert set(cli.EXPERIMENTS.values()) >= set(range(1, 11))


# ---------------------------------------------------------------------------
# Entry point and exit codes
# ---------------------------------------------------------------------------

class TestMain:
    def test_config_error_exit(self, tmp_path, capsys):
        cfg = write(tmp_path, "[experiment]\nid = net-check\n[params]\ntheta = 1.5\n")
        assert cli.main(["net-check", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
        assert "[params].theta" in capsys.readouterr().err

    def test_subcommand_mismatch(self, tmp_path):
        cfg = write(tmp_path, RL_SMALL)
        assert cli.main(["gkw", "--config", cfg]) == EXIT_CONFIG

    def test_rl_check_report(self, tmp_path):
        out = tmp_path / "o"
        assert cli.main(["rl-check", "--config", write(tmp_path, RL_SMALL), "--out", str(out)]) == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert rep["exit_code"] == 0 and rep["passed"]
        names = [r["name"] for r in rep["criteria"]["C1"]["results"]]
        assert any("dev" in n for n in names)
        assert rep["config"]["seed"] == 5
        assert all(k.startswith("C1.") for k in rep["verdicts"])

    def test_deterministic_csv(self, tmp_path):
        cfg = write(tmp_path, RL_SMALL)
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["rl-check", "--config", cfg, "--out", str(a)]) == EXIT_OK
        assert cli.main(["rl-check", "--config", cfg, "--out", str(b)]) == EXIT_OK
        ca, cb = csv_bytes(a), csv_bytes(b)
        assert ca and ca == cb
        for data in ca.values():
            assert b"\r" not in data
            data.decode("ascii")

    def test_seed_precedence(self, tmp_path, monkeypatch):
        cfg = write(tmp_path, RL_SMALL)

        def seed_of(args):
            out = tmp_path / f"s{len(list(tmp_path.iterdir()))}"
            cli.main(["rl-check", "--config", cfg, "--out", str(out)] + args)
            return json.loads((out / "report.json").read_text())["config"]["seed"]

        monkeypatch.delenv("FRACPATH_SEED", raising=False)
        assert seed_of([]) == 5
        monkeypatch.setenv("FRACPATH_SEED", "17")
        assert seed_of([]) == 17
        assert seed_of(["--seed", "3"]) == 3

    def test_bad_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FRACPATH_SEED", "x")
        assert cli.main(["rl-check", "--config", write(tmp_path, RL_SMALL)]) == EXIT_CONFIG

    def test_numeric_error_exit(self, tmp_path, monkeypatch):
        def boom(cid, **kw):
            raise ArithmeticError("overflow in test")
        monkeypatch.setattr(acc, "run_criterion", boom)
        out = tmp_path / "o"
        assert cli.main(["tv-profile", "--out", str(out)]) == EXIT_NUMERIC
        rep = json.loads((out / "report.json").read_text())
        assert "overflow" in rep["error"]

    def test_tolerance_exit(self, tmp_path, monkeypatch):
        def failing(cid, **kw):
            r = acc.CriterionResult(cid, "stub", budget=10.0)
            r.checks.append(acc.Check("x", 2.0, "<=", 1.0))
            return r
        monkeypatch.setattr(acc, "run_criterion", failing)
        out = tmp_path / "o"
        assert cli.main(["tv-profile", "--out", str(out)]) == EXIT_TOLERANCE
        rep = json.loads((out / "report.json").read_text())
        assert rep["verdicts"] == {"C7.x": False, "C7.runtime": True}

    def test_acceptance_only(self, tmp_path, monkeypatch):
        seen = []

        def stub(cid, **kw):
            seen.append(cid)
            return acc.CriterionResult(cid, "stub", budget=10.0)
        monkeypatch.setattr(acc, "run_criterion", stub)
        assert cli.main(["acceptance", "--only", "2,7", "--out", str(tmp_path / "o")]) == EXIT_OK
        assert seen == [2, 7]
        assert cli.main(["acceptance", "--only", "12", "--out", str(tmp_path / "o")]) == EXIT_CONFIG

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "fracpath.cli_runner", "net-check", "--config",
                               write(tmp_path, "[experiment]\nid = net-check\n[params]\ntheta = 0\n")],
                              capture_output=True, text=True)
        assert proc.returncode == EXIT_CONFIG
        assert "[params].theta" in proc.stderr

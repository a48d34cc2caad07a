"""CLI: config parsing, validation, CSV emission, determinism."""

import pytest

from statvol import cli


def write_config(tmp_path, name="run.cfg", **overrides):
    base = {
        "model": "heston",
        "s0": 50.0,
        "r": 0.05,
        "rho": 0.5,
        "k": 2.0,
        "theta": 0.01,
        "sigma_v": 0.1,
        "strikes": "44,50,56",
        "maturity": 1.0,
        "n_iters": 2000,
        "seed": 2024,
        "parity": "on",
        "replications": 1,
        "threads": 1,
    }
    base.update(overrides)
    lines = [f"{k} = {v}" for k, v in base.items()]
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


class TestConfigParsing:
    def test_roundtrip_and_comments(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("# comment\nmodel = heston\nstrikes = 44, 50 , 56\n"
                     "parity = off  # trailing comment\nn_iters=123\n")
        cfg = cli.load_config(p)
        assert cfg.model == "heston"
        assert cfg.strikes == (44.0, 50.0, 56.0)
        assert cfg.parity is False
        assert cfg.n_iters == 123

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("modle = heston\n")
        with pytest.raises(cli.ConfigError, match="unknown key"):
            cli.load_config(p)

    def test_bad_value_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("n_iters = many\n")
        with pytest.raises(cli.ConfigError, match="bad value"):
            cli.load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(cli.ConfigError):
            cli.load_config(tmp_path / "absent.cfg")


class TestExitCodes:
    def test_config_error_exit_2(self, tmp_path):
        cfg = write_config(tmp_path, model="garch")
        rc = cli.main(["price-asian", "--config", str(cfg), "--out",
                       str(tmp_path / "o.csv")])
        assert rc == 2

    def test_field_validation_names_field(self, tmp_path, capsys):
        cfg = write_config(tmp_path, replications=0)
        rc = cli.main(["price-asian", "--config", str(cfg)])
        assert rc == 2
        assert "replications" in capsys.readouterr().err

    def test_ok_exit_0(self, tmp_path):
        cfg = write_config(tmp_path, n_iters=500)
        rc = cli.main(["price-asian", "--config", str(cfg), "--out",
                       str(tmp_path / "o.csv")])
        assert rc == 0

    def test_numerical_failure_exit_3(self, tmp_path, capsys):
        # gamma_1 * mu > 1: the variance contraction overshoots below zero
        # and the per-step validity check trips
        cfg = write_config(tmp_path, model="bns", rho=-1.0, mu=5.0,
                           strikes="50", n_iters=2000)
        rc = cli.main(["price-asian", "--config", str(cfg), "--out",
                       str(tmp_path / "o.csv")])
        assert rc == 3
        assert "numerical failure" in capsys.readouterr().err


class TestPriceAsianCommand:
    def test_row_per_strike(self, tmp_path):
        cfg = write_config(tmp_path, n_iters=500)
        out = tmp_path / "o.csv"
        assert cli.main(["price-asian", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "strike,estimate,std_error,n,seed"
        assert len(lines) == 4
        assert lines[1].startswith("44,")

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path, n_iters=800, replications=3)
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert cli.main(["price-asian", "--config", str(cfg), "--out", str(out1)]) == 0
        assert cli.main(["price-asian", "--config", str(cfg), "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_thread_count_does_not_change_bytes(self, tmp_path):
        cfg = write_config(tmp_path, n_iters=800, replications=3)
        outs = []
        for threads in (1, 4):
            out = tmp_path / f"t{threads}.csv"
            rc = cli.main(["price-asian", "--config", str(cfg), "--out", str(out),
                           "--threads", str(threads)])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_flag_overrides(self, tmp_path):
        cfg = write_config(tmp_path, n_iters=500, seed=1)
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.main(["price-asian", "--config", str(cfg), "--out", str(out1)])
        cli.main(["price-asian", "--config", str(cfg), "--out", str(out2),
                  "--seed", "2"])
        assert out1.read_bytes() != out2.read_bytes()

    def test_bns_model_runs(self, tmp_path):
        cfg = write_config(tmp_path, model="bns", rho=-1.0, n_iters=500,
                           truncation_power=2.0)
        out = tmp_path / "o.csv"
        assert cli.main(["price-asian", "--config", str(cfg), "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 4


class TestVolSurfaceCommand:
    def test_grid_cardinality_and_flags(self, tmp_path):
        cfg = write_config(tmp_path, n_iters=4000,
                           strikes=",".join(str(k) for k in range(44, 57)),
                           maturities="0.1")
        out = tmp_path / "s.csv"
        assert cli.main(["vol-surface", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "strike,maturity,price,implied_vol,status"
        assert len(lines) == 14
        for line in lines[1:]:
            status = line.split(",")[-1]
            assert status in ("ok", "band_violation")

    def test_single_point_composes_with_inversion(self, tmp_path):
        cfg = write_config(tmp_path, n_iters=4000, strikes="50", maturity=1.0)
        out = tmp_path / "s.csv"
        assert cli.main(["vol-surface", "--config", str(cfg), "--out", str(out)]) == 0
        row = out.read_text().splitlines()[1].split(",")
        assert row[-1] == "ok"
        iv = float(row[3])
        assert 0.0 < iv < 1.0


class TestStationaryStatsCommand:
    def test_histogram_mass_and_checkpoints(self, tmp_path):
        cfg = write_config(tmp_path, n_iters=1000, hist_lo=0.0, hist_hi=0.05)
        out = tmp_path / "m.csv"
        assert cli.main(["stationary-stats", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        moments = [l for l in lines[1:] if l.startswith("moment")]
        hist = [l for l in lines[1:] if l.startswith("histogram")]
        # n_iters = 1000 is a power of ten: floor(log10 n) + 1 checkpoints
        assert len(moments) == 4
        mass = sum(float(l.split(",")[-1]) for l in hist)
        assert mass == pytest.approx(1.0, abs=1e-12)
        final_mean = float(moments[-1].split(",")[2])
        assert 0.005 < final_mean < 0.02


class TestCheckScheduleCommand:
    def test_three_conditions_reported(self, tmp_path):
        cfg = write_config(tmp_path, scan_max=20000)
        out = tmp_path / "d.csv"
        assert cli.main(["check-schedule", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 4
        verdicts = [l.split(",")[1] for l in lines[1:]]
        assert verdicts == ["pass", "pass", "pass"]


class TestOracleCommand:
    def test_rows_and_heston_only(self, tmp_path):
        cfg = write_config(tmp_path, strikes="50", oracle_paths=400,
                           oracle_fine_step=1e-3)
        out = tmp_path / "o.csv"
        assert cli.main(["oracle", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "strike,estimate,std_error,n_paths,seed"
        assert len(lines) == 2
        bad = write_config(tmp_path, name="bns.cfg", model="bns", rho=-1.0)
        assert cli.main(["oracle", "--config", str(bad), "--out", str(out)]) == 2

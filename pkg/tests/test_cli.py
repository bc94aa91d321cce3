import numpy as np

from stmimo.cli import cli_main

DESK_ESTIMATE = ["estimate", "--desk", "--noiseless", "--method", "proposed",
                 "--seed", "3"]


def write_desk_config(path, experiment="rmse", trials=2, snr="0,10",
                      methods="esprit,parafac_small"):
    path.write_text(
        "m = 4\nn = 4\nq = 32\n"
        f"experiment = {experiment}\n"
        f"trials = {trials}\n"
        f"snr_db = {snr}\n"
        f"methods = {methods}\n"
        "als_max_iters = 200\nals_restarts = 2\n"
    )


class TestEstimate:
    def test_noiseless_reference_pairs(self, capsys):
        assert cli_main(DESK_ESTIMATE) == 0
        out = capsys.readouterr().out.strip().splitlines()
        assert out[0] == "dod_deg,doa_deg"
        pairs = [tuple(float(x) for x in line.split(",")) for line in out[1:]]
        np.testing.assert_allclose(pairs, [(-30, -15), (25, 20)], atol=1e-3)

    def test_requires_single_method(self, capsys):
        code = cli_main(["estimate", "--desk", "--method", "esprit,proposed"])
        assert code == 1

    def test_baseline_method(self, capsys):
        code = cli_main(["estimate", "--desk", "--noiseless", "--method",
                         "esprit", "--seed", "3"])
        assert code == 0
        out = capsys.readouterr().out.strip().splitlines()
        pairs = [tuple(float(x) for x in line.split(",")) for line in out[1:]]
        np.testing.assert_allclose(pairs, [(-30, -15), (25, 20)], atol=1e-3)


class TestBenchmark:
    def test_deterministic_across_runs_and_workers(self, tmp_path, monkeypatch):
        cfg = tmp_path / "exp.cfg"
        write_desk_config(cfg)
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        monkeypatch.setenv("STMIMO_THREADS", "1")
        assert cli_main(["benchmark", "--config", str(cfg), "--seed", "7",
                         "--out", str(out1)]) == 0
        monkeypatch.setenv("STMIMO_THREADS", "4")
        assert cli_main(["benchmark", "--config", str(cfg), "--seed", "7",
                         "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_missing_config_exits_1(self, tmp_path, capsys):
        code = cli_main(["benchmark", "--config", str(tmp_path / "nope.cfg"),
                         "--out", str(tmp_path / "o.csv")])
        assert code == 1

    def test_config_required(self, tmp_path):
        assert cli_main(["benchmark", "--out", str(tmp_path / "o.csv")]) == 1

    def test_resolution_experiment(self, tmp_path):
        cfg = tmp_path / "res.cfg"
        write_desk_config(cfg, experiment="resolution", methods="esprit",
                          snr="10", trials=2)
        out = tmp_path / "r.csv"
        assert cli_main(["benchmark", "--config", str(cfg), "--out", str(out)]) == 0
        text = out.read_text()
        assert "resolution_probability" in text

    def test_out_path_from_config(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cfg = tmp_path / "exp.cfg"
        write_desk_config(cfg, methods="esprit", snr="10", trials=2)
        cfg.write_text(cfg.read_text() + "out = from_config.csv\n")
        assert cli_main(["benchmark", "--config", str(cfg)]) == 0
        assert (tmp_path / "from_config.csv").exists()


class TestSimulate:
    def test_tensor_dump(self, tmp_path):
        out = tmp_path / "scene.npy"
        code = cli_main(["simulate", "--desk", "--noiseless", "--seed", "1",
                         "--out", str(out)])
        assert code == 0
        tensor = np.load(out)
        assert tensor.shape == (4, 4, 32)

    def test_range_doppler_csv(self, tmp_path):
        out = tmp_path / "scene.npy"
        rd = tmp_path / "rd.csv"
        code = cli_main(["simulate", "--desk", "--noiseless", "--seed", "1",
                         "--out", str(out), "--rd-csv", str(rd)])
        assert code == 0
        rows = rd.read_text().strip().splitlines()
        assert len(rows) == 32  # Doppler bins
        assert len(rows[0].split(",")) >= 400  # range cells

    def test_requires_out(self):
        assert cli_main(["simulate", "--desk"]) == 1


class TestUsage:
    def test_unknown_flag(self, capsys):
        assert cli_main(["estimate", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_subcommand(self, capsys):
        assert cli_main(["frobnicate"]) == 1

    def test_no_subcommand(self, capsys):
        assert cli_main([]) == 1

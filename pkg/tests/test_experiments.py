import numpy as np
import pytest

from stmimo.decomposition import AlsOptions
from stmimo.experiments import (
    DESK_RADAR,
    ExperimentConfig,
    ResultRow,
    ResultTable,
    config_from_mapping,
    config_to_kv,
    emit_csv,
    load_config,
    match_to_truth,
    parse_kv_text,
    run_resolution_sweep,
    run_rmse_sweep,
)

FAST_ALS = AlsOptions(max_iters=200, restarts=2)


def desk_config(**kwargs):
    defaults = dict(radar=DESK_RADAR, snr_grid=(10.0,), trials=3, seed=5, als=FAST_ALS)
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


class TestConfigValidation:
    def test_trials_positive(self):
        with pytest.raises(ValueError):
            desk_config(trials=0)

    def test_methods_known(self):
        with pytest.raises(ValueError):
            desk_config(methods=("music",))

    def test_snr_grid_non_empty(self):
        with pytest.raises(ValueError):
            desk_config(snr_grid=())

    def test_scene_alignment(self):
        with pytest.raises(ValueError):
            desk_config(dod_deg=(1.0, 2.0), doa_deg=(1.0,), doppler=(0.0, 0.0))


class TestMatching:
    def test_identity(self):
        dod = np.array([0.1, 0.2])
        doa = np.array([0.3, 0.4])
        got_dod, got_doa = match_to_truth(dod, doa, dod, doa)
        np.testing.assert_array_equal(got_dod, dod)
        np.testing.assert_array_equal(got_doa, doa)

    def test_swapped_estimates_fixed(self):
        dod_true = np.array([0.1, 0.2])
        doa_true = np.array([0.3, 0.4])
        got_dod, got_doa = match_to_truth(dod_true[::-1], doa_true[::-1],
                                          dod_true, doa_true)
        np.testing.assert_allclose(got_dod, dod_true)
        np.testing.assert_allclose(got_doa, doa_true)


class TestRmseSweep:
    def test_noiseless_proposed_exact(self):
        cfg = desk_config(methods=("proposed",), noiseless=True, trials=2)
        table = run_rmse_sweep(cfg)
        assert table.value("proposed", 10.0, "rmse_combined_deg") <= 1e-3
        assert table.value("proposed", 10.0, "failed_trials") == 0

    def test_deterministic(self):
        cfg = desk_config(methods=("esprit", "parafac_small"))
        t1 = run_rmse_sweep(cfg)
        t2 = run_rmse_sweep(cfg)
        assert t1.rows == t2.rows

    def test_row_structure(self):
        cfg = desk_config(methods=("esprit",), snr_grid=(0.0, 10.0))
        table = run_rmse_sweep(cfg)
        metrics = {(r.method, r.snr_db, r.metric) for r in table.rows}
        assert len(metrics) == len(table.rows)  # one row per (method, snr, metric)
        for snr in (0.0, 10.0):
            for metric in ("rmse_dod_deg", "rmse_doa_deg", "rmse_combined_deg",
                           "failed_trials"):
                assert ("esprit", snr, metric) in metrics

    def test_combined_is_root_mean_of_halves(self):
        cfg = desk_config(methods=("esprit",))
        table = run_rmse_sweep(cfg)
        d = table.value("esprit", 10.0, "rmse_dod_deg")
        a = table.value("esprit", 10.0, "rmse_doa_deg")
        c = table.value("esprit", 10.0, "rmse_combined_deg")
        assert c == pytest.approx(np.sqrt((d**2 + a**2) / 2.0))


class TestFailureAccounting:
    def test_structural_failures_counted_and_excluded(self):
        from stmimo.scene import RadarConfig

        # one retained pulse per channel: esprit cannot form a K=2 subspace
        tiny = RadarConfig(m=4, n=4, q=4, fa_hz=1e3, t_s=1e-5, bandwidth_hz=1e6)
        cfg = desk_config(radar=tiny, methods=("esprit",), trials=4)
        table = run_rmse_sweep(cfg)
        assert table.value("esprit", 10.0, "failed_trials") == 4
        assert np.isnan(table.value("esprit", 10.0, "rmse_combined_deg"))


class TestResolutionSweep:
    def test_noiseless_probability_one(self):
        cfg = desk_config(methods=("proposed",), noiseless=True, trials=2,
                          experiment="resolution")
        table = run_resolution_sweep(cfg)
        assert table.value("proposed", 10.0, "resolution_probability") == 1.0

    def test_requires_two_targets(self):
        cfg = desk_config(dod_deg=(5.0,), doa_deg=(3.0,), doppler=(0.01,))
        with pytest.raises(ValueError):
            run_resolution_sweep(cfg)


class TestThreadDeterminism:
    def test_worker_count_does_not_change_results(self, monkeypatch):
        cfg = desk_config(methods=("esprit", "parafac_small"), snr_grid=(5.0, 15.0))
        monkeypatch.setenv("STMIMO_THREADS", "1")
        t1 = run_rmse_sweep(cfg)
        monkeypatch.setenv("STMIMO_THREADS", "4")
        t4 = run_rmse_sweep(cfg)
        assert t1.rows == t4.rows


class TestCsv:
    def _table(self):
        rows = [
            ResultRow("esprit", -10.0, "rmse_combined_deg", 1.23456789012, 5, 7),
            ResultRow("esprit", 0.0, "rmse_combined_deg", 0.5, 5, 7),
            ResultRow("proposed", -10.0, "rmse_combined_deg", 0.25, 5, 7),
        ]
        return ResultTable(rows=rows)

    def test_header_only_for_empty_table(self, tmp_path):
        path = tmp_path / "empty.csv"
        emit_csv(ResultTable(rows=[]), path)
        assert path.read_text() == "method,snr_db,metric,value,trials,seed\n"

    def test_row_count(self, tmp_path):
        path = tmp_path / "t.csv"
        emit_csv(self._table(), path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4

    def test_reemit_identical(self, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(self._table(), p1)
        emit_csv(self._table(), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_sidecar_metadata(self, tmp_path):
        path = tmp_path / "t.csv"
        cfg = desk_config()
        emit_csv(self._table(), path, cfg)
        meta = (tmp_path / "t.csv.meta").read_text()
        assert "m = 4" in meta and "seed = 5" in meta

    def test_nine_significant_digits(self, tmp_path):
        path = tmp_path / "t.csv"
        emit_csv(self._table(), path)
        assert "1.23456789" in path.read_text()


class TestConfigFormat:
    def test_parse_kv_roundtrip(self):
        cfg = desk_config(methods=("proposed", "esprit"))
        parsed = config_from_mapping(parse_kv_text(config_to_kv(cfg)))
        assert parsed.radar == cfg.radar
        assert parsed.methods == cfg.methods
        assert parsed.snr_grid == cfg.snr_grid
        assert parsed.seed == cfg.seed

    def test_comments_and_blanks(self):
        mapping = parse_kv_text("# comment\n\nseed = 3  # trailing\n")
        assert mapping == {"seed": "3"}

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            config_from_mapping({"snr": "1"})

    def test_malformed_line(self):
        with pytest.raises(ValueError):
            parse_kv_text("this is not a pair")

    def test_load_config_file(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(
            "m = 4\nn = 4\nq = 32\ntrials = 9\nsnr_db = -5,5\n"
            "methods = esprit\nexperiment = resolution\n"
        )
        cfg = load_config(path)
        assert cfg.radar.m == 4 and cfg.trials == 9
        assert cfg.snr_grid == (-5.0, 5.0)
        assert cfg.experiment == "resolution"

import numpy as np
import pytest

from stmimo.decomposition import AlsOptions
from stmimo.estimators import (
    AngleEstimator,
    angles_from_stacked_factor,
    baseline_esprit,
    baseline_parafac_small,
    build_receive_augmented,
    build_transmit_augmented,
    estimate_proposed,
    pair_angles,
    uniqueness_check,
)
from stmimo.frontend import direct_synthesis, direct_synthesis_decimated
from stmimo.scene import RadarConfig, TargetScene, build_mask, steering_matrix
from stmimo.tensor_ops import cp_construct, hadamard

DESK = RadarConfig(m=4, n=4, q=32)


def reference_scene(rcs=(1 + 0.5j, -0.7 + 0.2j)):
    return TargetScene(dod=np.deg2rad([-30, 25]), doa=np.deg2rad([-15, 20]),
                       doppler=[0.02, -0.05], rcs=rcs)


class TestAugmentation:
    def test_minimal_transmit_case(self):
        cfg = RadarConfig(m=2, n=3, q=4, fa_hz=1e3, t_s=1e-5, bandwidth_hz=1e6)
        scene = TargetScene(dod=[0.2], doa=[0.1], doppler=[0.05], rcs=[1.0])
        y = direct_synthesis(scene, cfg)
        y_a, d_a = build_transmit_augmented(y, build_mask(cfg))
        assert y_a.shape == (2, 3, 4)
        np.testing.assert_allclose(y_a[0], y[0])
        np.testing.assert_allclose(y_a[1], y[1])

    def test_shapes(self):
        cfg = RadarConfig(m=8, n=10, q=80)
        scene = reference_scene()
        y = direct_synthesis(scene, cfg)
        mask = build_mask(cfg)
        y_a, d_a = build_transmit_augmented(y, mask)
        assert y_a.shape == (14, 10, 80) and d_a.tensor.shape == (14, 10, 80)
        assert d_a.w.shape == (14, 80)
        y_b, d_b = build_receive_augmented(y, mask)
        assert y_b.shape == (8, 18, 80) and d_b.tensor.shape == (8, 18, 80)

    def test_halves_satisfy_masked_models(self):
        # noiseless: both stacked halves obey the CP model with the shifted
        # steering submatrices and their submasks
        cfg = DESK
        scene = reference_scene()
        y = direct_synthesis(scene, cfg)
        mask = build_mask(cfg)
        y_a, d_a = build_transmit_augmented(y, mask)
        a = steering_matrix(scene.dod, cfg.m)
        b = steering_matrix(scene.doa, cfg.n)
        q = np.arange(1, cfg.q + 1)
        c = scene.rcs[None, :] * np.exp(2j * np.pi * np.outer(q, scene.doppler))
        a0 = np.vstack([a[:-1], a[1:]])
        np.testing.assert_allclose(
            y_a, hadamard(cp_construct(a0, b, c), d_a.tensor), atol=1e-12
        )

    def test_receive_mask_independent_of_mode2(self):
        cfg = DESK
        y = direct_synthesis(reference_scene(), cfg)
        _, d_b = build_receive_augmented(y, build_mask(cfg))
        spread = np.abs(d_b.tensor - d_b.tensor[:, :1, :]).max()
        assert spread <= 1e-12

    def test_m_too_small(self):
        cfg = RadarConfig(m=1, n=3, q=4, fa_hz=1e3, t_s=1e-5, bandwidth_hz=1e6)
        y = np.ones((1, 3, 4), dtype=complex)
        with pytest.raises(ValueError):
            build_transmit_augmented(y, build_mask(cfg))


class TestAnglesFromStackedFactor:
    def test_broadside(self):
        a = steering_matrix([0.0], 5)
        f0 = np.vstack([a[:-1], a[1:]])
        np.testing.assert_allclose(angles_from_stacked_factor(f0), [0.0], atol=1e-12)

    def test_exact_two_angles(self):
        angles = np.deg2rad([-30.0, 25.0])
        a = steering_matrix(angles, 8)
        f0 = np.vstack([a[:-1], a[1:]])
        got = np.degrees(angles_from_stacked_factor(f0))
        np.testing.assert_allclose(got, [-30.0, 25.0], atol=1e-9)

    def test_permutation_scaling_invariance(self):
        rng = np.random.default_rng(0)
        angles = np.deg2rad([-40.0, 10.0, 35.0])
        a = steering_matrix(angles, 7)
        f0 = np.vstack([a[:-1], a[1:]])
        ref = angles_from_stacked_factor(f0)
        for _ in range(25):
            perm = rng.permutation(3)
            scales = np.diag(rng.standard_normal(3) + 1j * rng.standard_normal(3))
            got = angles_from_stacked_factor(f0[:, perm] @ scales)
            np.testing.assert_allclose(got, ref, atol=np.deg2rad(1e-9))

    def test_underdetermined_rejected(self):
        with pytest.raises(ValueError):
            angles_from_stacked_factor(np.ones((4, 3), dtype=complex))

    def test_rotation_residual_noiseless(self):
        angles = np.deg2rad([-30.0, 25.0])
        a = steering_matrix(angles, 8)
        f1, f2 = a[:-1], a[1:]
        from stmimo.linalg import pinv

        gamma = pinv(f1) @ f2
        assert np.linalg.norm(f2 - f1 @ gamma) <= 1e-8 * np.linalg.norm(f2)


class TestPairAngles:
    def test_single_target(self):
        c = np.ones((5, 1), dtype=complex)
        dod, doa, order, amb = pair_angles([0.1], c, [0.2], c)
        assert doa[0] == 0.2 and not amb

    def test_distinct_doppler_pairing(self):
        q = np.arange(32)
        c_tx = np.stack([np.exp(2j * np.pi * 0.02 * q),
                         np.exp(-2j * np.pi * 0.05 * q)], axis=1)
        # receive run found the same signatures in swapped column order
        c_rx = c_tx[:, ::-1] * np.array([2.0j, -0.5])
        dod, doa, order, amb = pair_angles([-0.5, 0.4], c_tx, [0.3, -0.2], c_rx)
        np.testing.assert_allclose(doa, [-0.2, 0.3])
        np.testing.assert_array_equal(order, [1, 0])
        assert not amb

    def test_identical_signatures_flagged(self):
        c = np.ones((16, 2), dtype=complex)
        *_, amb = pair_angles([0.1, 0.2], c, [0.3, 0.4], c)
        assert amb


class TestUniquenessCheck:
    def test_reference_case(self):
        rep = uniqueness_check(8, 10, 80, 2)
        assert rep.satisfied

    def test_boundary_mn(self):
        # the looser restatement admits ranks up to K = MN when Q >= MN
        rep = uniqueness_check(8, 10, 80, 80)
        assert rep.within_pairwise_bound
        assert rep.pairwise_bound == 80
        assert not uniqueness_check(8, 10, 80, 81).within_pairwise_bound

    def test_tiny_false(self):
        assert not uniqueness_check(2, 2, 2, 3).satisfied

    def test_max_rank_scan(self):
        rep = uniqueness_check(8, 10, 80, 2)
        assert rep.max_rank == 16  # 8 + 10 + K >= 2K + 2 up to K = 16

    def test_brute_force_grid(self):
        for m in range(1, 7):
            for n in range(1, 7):
                for q in range(1, 7):
                    for k in range(1, 7):
                        expected = min(m, k) + min(n, k) + min(q, k) >= 2 * k + 2
                        assert uniqueness_check(m, n, q, k).satisfied == expected


class TestEstimateProposed:
    def test_reference_scene_noiseless(self):
        scene = reference_scene()
        y = direct_synthesis(scene, DESK)
        res = estimate_proposed(y, build_mask(DESK), 2, AlsOptions(seed=0))
        np.testing.assert_allclose(np.degrees(res.dod), [-30, 25], atol=1e-3)
        np.testing.assert_allclose(np.degrees(res.doa), [-15, 20], atol=1e-3)

    def test_single_target(self):
        scene = TargetScene(dod=[0.3], doa=[-0.4], doppler=[0.03], rcs=[1 - 0.5j])
        y = direct_synthesis(scene, DESK)
        res = estimate_proposed(y, build_mask(DESK), 1, AlsOptions(seed=1))
        assert len(res.pairs) == 1
        assert abs(np.degrees(res.dod[0]) - np.degrees(0.3)) < 1e-3

    def test_diagnostics_present(self):
        scene = reference_scene()
        y = direct_synthesis(scene, DESK, 10.0, 3)
        res = estimate_proposed(y, build_mask(DESK), 2, AlsOptions(seed=2))
        assert {"tx", "rx"} <= set(res.diagnostics)
        assert res.elapsed_s > 0

    def test_rotation_eigenvalues_aligned_with_pairs(self):
        # gamma_rx must follow the pairing permutation and the dod sort
        scene = reference_scene()
        y = direct_synthesis(scene, DESK)
        res = estimate_proposed(y, build_mask(DESK), 2, AlsOptions(seed=5))
        from_dod = np.arcsin(-np.angle(res.gamma_tx) / np.pi)
        from_doa = np.arcsin(-np.angle(res.gamma_rx) / np.pi)
        np.testing.assert_allclose(from_dod, res.dod, atol=1e-9)
        np.testing.assert_allclose(from_doa, res.doa, atol=1e-9)

    def test_mask_required_shape(self):
        y = direct_synthesis(reference_scene(), DESK)
        with pytest.raises(ValueError):
            estimate_proposed(y, np.ones((2, 2, 2), dtype=complex), 2)


class TestBaselines:
    def test_parafac_small_noiseless(self):
        scene = reference_scene()
        ys = direct_synthesis_decimated(scene, DESK)
        res = baseline_parafac_small(ys, 2, AlsOptions(seed=4))
        np.testing.assert_allclose(np.degrees(res.dod), [-30, 25], atol=1e-3)
        np.testing.assert_allclose(np.degrees(res.doa), [-15, 20], atol=1e-3)

    def test_parafac_small_zero_doppler_constant_c(self):
        scene = TargetScene(dod=[0.3], doa=[-0.1], doppler=[0.0], rcs=[1.0])
        ys = direct_synthesis_decimated(scene, DESK)
        from stmimo.decomposition import als_standard

        fs = als_standard(ys, 1, AlsOptions(seed=5))
        spread = np.abs(fs.c - fs.c[0]).max()
        assert spread <= 1e-6 * np.abs(fs.c).max()

    def test_esprit_noiseless(self):
        scene = reference_scene()
        ys = direct_synthesis_decimated(scene, DESK)
        res = baseline_esprit(ys, 2)
        np.testing.assert_allclose(np.degrees(res.dod), [-30, 25], atol=1e-3)
        np.testing.assert_allclose(np.degrees(res.doa), [-15, 20], atol=1e-3)

    def test_esprit_single_target_scalar_rotations(self):
        scene = TargetScene(dod=[-0.2], doa=[0.5], doppler=[0.02], rcs=[2.0])
        ys = direct_synthesis_decimated(scene, DESK)
        res = baseline_esprit(ys, 1)
        assert res.gamma_tx.shape == (1,)
        assert abs(np.degrees(res.dod[0] - scene.dod[0])) < 1e-6

    def test_esprit_snapshot_guard(self):
        cfg = RadarConfig(m=4, n=4, q=4, fa_hz=1e3, t_s=1e-5, bandwidth_hz=1e6)
        ys = direct_synthesis_decimated(reference_scene(), cfg)
        with pytest.raises(ValueError):
            baseline_esprit(ys, 2)  # only one retained pulse

    def test_esprit_k_bound(self):
        ys = np.ones((2, 2, 4), dtype=complex)
        with pytest.raises(ValueError):
            baseline_esprit(ys, 4)


class TestWarningsAndFlags:
    def test_uniqueness_warning_for_multi_target(self):
        # a single retained pulse: min(M,K)+min(N,K)+1 < 2K+2 for K=2
        cfg = RadarConfig(m=4, n=4, q=4, fa_hz=1e3, t_s=1e-5, bandwidth_hz=1e6)
        ys = direct_synthesis_decimated(reference_scene(), cfg)  # 4 x 4 x 1
        with pytest.warns(RuntimeWarning, match="identifiability"):
            baseline_parafac_small(ys, 2, AlsOptions(seed=0, max_iters=5, restarts=1))

    def test_non_convergence_flagged(self):
        scene = reference_scene()
        y = direct_synthesis(scene, DESK, -30.0, 7)  # noise dominated
        res = estimate_proposed(y, build_mask(DESK), 2,
                                AlsOptions(seed=0, max_iters=2, restarts=1))
        assert any(f.startswith("non_convergence") for f in res.flags)

    def test_als_options_validated(self):
        with pytest.raises(ValueError):
            AlsOptions(max_iters=0)
        with pytest.raises(ValueError):
            AlsOptions(rel_tol=0.0)
        with pytest.raises(ValueError):
            AlsOptions(init="qr")


class TestAngleEstimatorClass:
    def test_proposed_requires_mask(self):
        y = direct_synthesis(reference_scene(), DESK)
        with pytest.raises(ValueError):
            AngleEstimator(n_targets=2, method="proposed").fit(y)

    def test_fit_sets_attributes(self):
        scene = reference_scene()
        y = direct_synthesis(scene, DESK)
        est = AngleEstimator(n_targets=2, method="proposed", random_state=0)
        est.fit(y, mask=build_mask(DESK))
        np.testing.assert_allclose(np.degrees(est.dod_), [-30, 25], atol=1e-3)
        assert len(est.pairs_) == 2

    def test_methods_dispatch(self):
        ys = direct_synthesis_decimated(reference_scene(), DESK)
        for method in ("parafac_small", "esprit"):
            est = AngleEstimator(n_targets=2, method=method, random_state=0).fit(ys)
            np.testing.assert_allclose(np.degrees(est.doa_), [-15, 20], atol=1e-3)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            AngleEstimator(method="music").fit(np.ones((2, 2, 2), dtype=complex))

    def test_get_params_roundtrip(self):
        est = AngleEstimator(n_targets=2, method="esprit", max_iter=99)
        assert est.get_params()["max_iter"] == 99

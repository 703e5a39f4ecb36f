import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixnoise import (
    AnchorShortageError,
    ConfigurationError,
    DivergenceError,
    ShapeError,
)
from mixnoise.clusterkit import AnchorRow, kmeans
from mixnoise.netcore import TrainConfig
from mixnoise.robusttrain import RobustConfig, train_robust
from mixnoise.transition import (
    AnchorConfig,
    ExtendedTransitionMatrix,
    TransitionBundle,
    estimate_cluster_dependent,
    estimate_extended,
    estimate_row,
    fine_clustering,
    l1_error,
    load_bundle,
    noisy_posterior,
    revise,
    save_bundle,
)

from conftest import OraclePosteriorModel, mixture_case, oracle_fine_clusters, quick_warmup

T3 = np.array([[0.8, 0.2], [0.3, 0.7], [0.5, 0.5]])


def random_stochastic(rng, rows, cols):
    m = rng.random((rows, cols)) + 1e-3
    return m / m.sum(axis=1, keepdims=True)


class TestExtendedTransitionMatrix:
    def test_shape_enforced(self):
        with pytest.raises(ShapeError):
            ExtendedTransitionMatrix(np.full((2, 2), 0.5), c=2)

    def test_row_sums_enforced(self):
        bad = np.array([[0.9, 0.2], [0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(ConfigurationError):
            ExtendedTransitionMatrix(bad, c=2)

    def test_negative_entries_rejected(self):
        bad = np.array([[1.2, -0.2], [0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(ConfigurationError):
            ExtendedTransitionMatrix(bad, c=2)


class TestNoisyPosterior:
    def test_reference_vector(self):
        out = noisy_posterior(T3, np.array([0.5, 0.3, 0.2]))
        assert out == pytest.approx([0.59, 0.41], abs=1e-12)

    def test_pure_anchor(self):
        T = np.vstack([np.eye(2), [0.5, 0.5]])
        out = noisy_posterior(T, np.array([1.0, 0.0, 0.0]))
        assert out == pytest.approx([1.0, 0.0], abs=0)

    def test_basis_vectors_read_rows_exactly(self):
        rng = np.random.default_rng(0)
        T = random_stochastic(rng, 4, 3)
        for i in range(4):
            e = np.zeros(4)
            e[i] = 1.0
            assert np.array_equal(noisy_posterior(T, e), T[i])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            noisy_posterior(T3, np.array([0.5, 0.5]))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_stochasticity_closure(self, seed):
        rng = np.random.default_rng(seed)
        c = int(rng.integers(2, 6))
        T = random_stochastic(rng, c + 1, c)
        g = rng.dirichlet(np.ones(c + 1))
        out = noisy_posterior(T, g)
        assert abs(out.sum() - 1.0) < 1e-12
        assert np.all(out >= -1e-15)


class TestEstimateRow:
    def test_single_anchor_reads_off(self):
        row = estimate_row(AnchorRow(np.array([3]), np.array([[0.75, 0.25]])))
        assert row == pytest.approx([0.75, 0.25], abs=1e-15)

    def test_mean_of_two(self):
        row = estimate_row(AnchorRow(np.array([1, 2]), np.array([[0.8, 0.2], [0.6, 0.4]])))
        assert row == pytest.approx([0.7, 0.3], abs=1e-12)

    def test_renormalization_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            c = int(rng.integers(2, 6))
            posts = rng.dirichlet(np.ones(c), size=3) * (1 + rng.uniform(-1e-6, 1e-6))
            row = estimate_row(AnchorRow(np.arange(3), posts))
            assert row.sum() == pytest.approx(1.0, abs=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(AnchorShortageError):
            estimate_row(AnchorRow(np.array([], dtype=int), np.zeros((0, 2))))


class TestL1Error:
    def test_single_row(self):
        assert l1_error(np.array([[0.7, 0.3]]), np.array([[0.8, 0.2]])) == pytest.approx(0.2)

    def test_identical(self):
        assert l1_error(T3, T3.copy()) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l1_error(T3, np.zeros((2, 2)))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_metric_properties_and_bound(self, seed):
        rng = np.random.default_rng(seed)
        c = int(rng.integers(2, 5))
        a = random_stochastic(rng, c + 1, c)
        b = random_stochastic(rng, c + 1, c)
        m = random_stochastic(rng, c + 1, c)
        assert l1_error(a, b) == pytest.approx(l1_error(b, a), abs=1e-15)
        assert l1_error(a, a) == 0.0
        assert l1_error(a, b) <= l1_error(a, m) + l1_error(m, b) + 1e-12
        assert l1_error(a, b) <= 2.0 * (c + 1)


class TestOracleEstimation:
    def test_oracle_substitution_is_exact(self):
        case = mixture_case(c=4, d=3, n=3000, seed=5, tau=0.4, rho=0.25, separation=12.0)
        oracle = OraclePosteriorModel(case["spec"], case["truth"].entries)
        fine = oracle_fine_clusters(case["noisy"])
        est = estimate_extended(oracle, case["noisy"], fine, AnchorConfig(m=5, percentile=100.0))
        assert np.abs(est.entries - case["truth"].entries).max() <= 1e-12

    def test_estimated_origin_and_stochasticity(self):
        case = mixture_case(c=3, d=4, n=3000, seed=6, tau=0.4, rho=0.25)
        oracle = OraclePosteriorModel(case["spec"], case["truth"].entries)
        fine = oracle_fine_clusters(case["noisy"])
        est = estimate_extended(oracle, case["noisy"], fine, AnchorConfig())
        assert est.origin == "estimated"
        assert np.abs(est.entries.sum(axis=1) - 1.0).max() < 1e-9


class TestClusterDependent:
    def test_k1_bit_equal_to_global(self):
        case = mixture_case(c=3, d=4, n=4000, seed=7, tau=0.4, rho=0.25)
        warmup = quick_warmup(case["noisy"], seed=7, epochs=15)
        cfg = AnchorConfig(seed=7)
        fine, _ = fine_clustering(warmup, case["noisy"], cfg)
        glob = estimate_extended(warmup, case["noisy"], fine, cfg)
        bundle = estimate_cluster_dependent(warmup, case["noisy"], 1, cfg)
        assert bundle.k == 1
        assert np.array_equal(bundle.matrices[0].entries, glob.entries)

    def test_k_exceeding_n_rejected(self):
        case = mixture_case(c=2, d=2, n=400, seed=8, tau=0.2, rho=0.5)
        warmup = quick_warmup(case["noisy"], seed=8, epochs=3)
        with pytest.raises(ConfigurationError):
            estimate_cluster_dependent(warmup, case["noisy"], 10 ** 6, AnchorConfig(seed=8))

    def test_meta_fallback_flagged(self):
        # oracle model; coarse clustering on features guarantees the far-away
        # meta blob lands inside a single coarse cluster, the other falls back
        case = mixture_case(c=2, d=2, n=3000, seed=9, tau=0.4, rho=0.5, separation=8.0)
        oracle = OraclePosteriorModel(case["spec"], case["truth"].entries)
        cfg = AnchorConfig(seed=9, fine_space="features", coarse_space="features")
        bundle = estimate_cluster_dependent(oracle, case["noisy"], 2, cfg)
        flags = [m.fallback_rows for m in bundle.matrices]
        assert any("meta" in f for f in flags)
        fell = [m for m in bundle.matrices if "meta" in m.fallback_rows]
        kept = [m for m in bundle.matrices if "meta" not in m.fallback_rows]
        assert fell and kept
        fine, _ = fine_clustering(oracle, case["noisy"], cfg)
        glob = estimate_extended(oracle, case["noisy"], fine, cfg)
        for m in fell:
            assert np.array_equal(m.meta_row, glob.meta_row)

    def test_all_matrices_row_stochastic(self):
        case = mixture_case(c=3, d=4, n=4000, seed=10, tau=0.4, rho=0.25)
        warmup = quick_warmup(case["noisy"], seed=10, epochs=10)
        bundle = estimate_cluster_dependent(warmup, case["noisy"], 3, AnchorConfig(seed=10))
        for m in bundle.matrices:
            assert np.abs(m.entries.sum(axis=1) - 1.0).max() < 1e-9
            assert m.cluster_id is not None


def perturbed_bundle(case, warmup, seed):
    T0 = case["truth"].entries.copy()
    T0[0, 0] += 0.1
    T0[0] /= T0[0].sum()
    reps = warmup.representations(case["noisy"].features[case["noisy"].indices("train")])
    coarse = kmeans(reps, 1, seed=seed, restarts=1)
    mat = ExtendedTransitionMatrix(T0, c=case["noisy"].c, origin="estimated", cluster_id=0)
    return TransitionBundle([mat], coarse)


class TestRevise:
    def test_zero_steps_is_identity(self):
        case = mixture_case(c=3, d=4, n=1500, seed=11, tau=0.4, rho=0.25)
        warmup = quick_warmup(case["noisy"], seed=11, epochs=5)
        bundle = perturbed_bundle(case, warmup, 11)
        cfg = RobustConfig(
            objective="reweighted", bundle=bundle,
            train=TrainConfig(epochs=1, seed=11), revise_epochs=0,
        )
        params, _ = train_robust(case["noisy"], cfg, warmup=warmup)
        out = revise(bundle, case["noisy"], cfg, params=params, warmup=warmup)
        assert np.array_equal(out.matrices[0].entries, bundle.matrices[0].entries)

    def test_rows_stochastic_after_revision(self):
        case = mixture_case(c=3, d=4, n=1500, seed=12, tau=0.4, rho=0.25)
        warmup = quick_warmup(case["noisy"], seed=12, epochs=5)
        bundle = perturbed_bundle(case, warmup, 12)
        cfg = RobustConfig(
            objective="reweighted", bundle=bundle,
            train=TrainConfig(epochs=2, seed=12), revise_epochs=3,
            revise_lr=0.05, revise_clf_lr=1e-3,
        )
        params, _ = train_robust(case["noisy"], cfg, warmup=warmup)
        out = revise(bundle, case["noisy"], cfg, params=params, warmup=warmup)
        assert out.matrices[0].origin == "revised"
        assert np.abs(out.matrices[0].entries.sum(axis=1) - 1.0).max() < 1e-9
        assert out.matrices[0].entries.min() >= 0.0

    def test_divergence_carries_last_stable_bundle(self, monkeypatch):
        case = mixture_case(c=3, d=4, n=1500, seed=13, tau=0.4, rho=0.25)
        warmup = quick_warmup(case["noisy"], seed=13, epochs=5)
        bundle = perturbed_bundle(case, warmup, 13)
        cfg = RobustConfig(
            objective="reweighted", bundle=bundle,
            train=TrainConfig(epochs=1, seed=13), revise_epochs=3,
            revise_lr=0.05, revise_clf_lr=1e-3,
        )
        params, _ = train_robust(case["noisy"], cfg, warmup=warmup)

        import mixnoise.netcore as nc

        real = nc.batch_backward

        def nan_backward(*args, **kwargs):
            _, grads, nfl = real(*args, **kwargs)
            return float("nan"), grads, nfl

        monkeypatch.setattr(nc, "batch_backward", nan_backward)
        with pytest.raises(DivergenceError) as err:
            revise(bundle, case["noisy"], cfg, params=params, warmup=warmup)
        assert isinstance(err.value.payload, TransitionBundle)

    def test_missing_params_rejected(self):
        case = mixture_case(c=3, d=4, n=1500, seed=14, tau=0.4, rho=0.25)
        warmup = quick_warmup(case["noisy"], seed=14, epochs=3)
        bundle = perturbed_bundle(case, warmup, 14)
        cfg = RobustConfig(objective="reweighted", bundle=bundle, train=TrainConfig(seed=14))
        with pytest.raises(ConfigurationError):
            revise(bundle, case["noisy"], cfg)


class TestBundleIO:
    def test_roundtrip(self, tmp_path):
        case = mixture_case(c=3, d=4, n=2000, seed=15, tau=0.4, rho=0.25)
        warmup = quick_warmup(case["noisy"], seed=15, epochs=5)
        bundle = estimate_cluster_dependent(warmup, case["noisy"], 2, AnchorConfig(seed=15))
        save_bundle(bundle, tmp_path / "transition.json")
        back = load_bundle(tmp_path / "transition.json")
        assert back.k == bundle.k
        assert back.space == bundle.space
        for a, b in zip(back.matrices, bundle.matrices):
            assert np.array_equal(a.entries, b.entries)
            assert a.origin == b.origin
            assert a.cluster_id == b.cluster_id
            assert a.fallback_rows == b.fallback_rows
        assert np.array_equal(back.cluster_model.centroids, bundle.cluster_model.centroids)

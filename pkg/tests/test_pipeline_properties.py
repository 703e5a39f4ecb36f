"""Cross-module properties that exercise the estimation/training pipeline
end to end at moderate scale."""

import numpy as np

from mixnoise import (
    MixtureSpec,
    NoiseSpec,
    generate_mixture,
    inject_mixed_noise,
    true_extended_matrix,
)
from mixnoise.clusterkit import detect_closed_anchors, kmeans
from mixnoise.netcore import TrainConfig, train_warmup
from mixnoise.robusttrain import RobustConfig, predict_batch, train_robust
from mixnoise.synthdata import default_means, generate_reservoir
from mixnoise.transition import (
    AnchorConfig,
    ExtendedTransitionMatrix,
    TransitionBundle,
    estimate_extended,
    fine_clustering,
)
from mixnoise.evalstats import accuracy

from conftest import mixture_case, oracle_fine_clusters, quick_warmup


class ExactMixtureOracle:
    """True noisy posterior of the sampled generative process.

    Population weights follow the injection rates: closed class k carries
    (1 - tau*rho)/c of the mass, each open population tau*rho/p.  The noisy
    posterior is the matching mix of true-matrix rows.
    """

    def __init__(self, spec: MixtureSpec, noise: NoiseSpec, truth: np.ndarray):
        self.spec = spec
        self.truth = truth
        open_mass = noise.tau * noise.rho
        self.weights = np.concatenate([
            np.full(spec.c, (1.0 - open_mass) / spec.c),
            np.full(spec.p, open_mass / spec.p),
        ])

    def clean_posteriors(self, X: np.ndarray) -> np.ndarray:
        """P(Y | x) over c+1 classes (open populations pooled into meta)."""
        X = np.atleast_2d(X)
        d2 = ((X[:, None, :] - self.spec.means[None, :, :]) ** 2).sum(axis=2)
        sig2 = self.spec.covariance_scale ** 2
        log_w = np.log(self.weights) - 0.5 * d2 / sig2 - 0.5 * self.spec.d * np.log(sig2)
        log_w -= log_w.max(axis=1, keepdims=True)
        p = np.exp(log_w)
        p /= p.sum(axis=1, keepdims=True)
        pooled = np.empty((X.shape[0], self.spec.c + 1))
        pooled[:, : self.spec.c] = p[:, : self.spec.c]
        pooled[:, self.spec.c] = p[:, self.spec.c:].sum(axis=1)
        return pooled

    def posteriors(self, X: np.ndarray) -> np.ndarray:
        return self.clean_posteriors(X) @ self.truth

    def representations(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=np.float64))


def test_meta_cluster_recovers_open_set_instances():
    # c=3, tau*rho=0.1, well-separated data: the smallest of the c+1 clusters
    # captures at least 90% of the true open-set instances, 5 seeds
    for seed in (1, 2, 3, 4, 5):
        case = mixture_case(c=3, d=4, n=10_000, seed=seed, tau=0.4, rho=0.25)
        noisy = case["noisy"]
        warmup = quick_warmup(noisy, seed=seed, epochs=15)
        cfg = AnchorConfig(seed=seed)
        fine, _ = fine_clustering(warmup, noisy, cfg)
        tr = noisy.indices("train")
        is_meta = noisy.clean_labels[tr] == noisy.meta_label
        captured = (fine.assignment[is_meta] == fine.meta_cluster).mean()
        assert captured >= 0.90, f"seed {seed}: captured {captured:.3f}"


def test_clean_data_estimation_near_identity():
    # tau=0: the estimated top block lands within 0.02 of the identity,
    # n=1e4, 5 seeds
    for seed in (1, 2, 3, 4, 5):
        spec = MixtureSpec(c=3, d=4, means=default_means(3, 4, separation=6.0),
                           covariance_scale=1.0)
        data = generate_mixture(spec, 10_000, seed=seed)
        warmup = quick_warmup(data, seed=seed, epochs=25, weight_decay=0.05)
        # no meta instances exist; estimate rows from the oracle-style class
        # clusters so the fine clustering stays well-posed at tau=0
        fine = oracle_fine_clusters(data)
        closed = detect_closed_anchors(warmup, data, fine, percentile=97.0, m=5)
        for i in range(3):
            row = closed.rows[i].posteriors.mean(axis=0)
            target = np.eye(3)[i]
            assert np.abs(row - target).max() <= 0.02, f"seed {seed} class {i}"


def test_reweighted_risk_consistency_at_scale():
    # with the true matrix fixed and n=1e5, the reweighted minimizer reaches
    # test accuracy within one point of a clean-trained model
    seed = 0
    spec = MixtureSpec(c=3, d=4, means=default_means(3, 4, separation=6.0),
                       covariance_scale=1.0)
    data = generate_mixture(spec, 100_000, seed=seed)
    reservoir = generate_reservoir(spec, 60_000, seed=seed + 1)
    noise = NoiseSpec(tau=0.4, rho=0.25, seed=seed)
    noisy = inject_mixed_noise(data, noise, reservoir)
    truth = true_extended_matrix(noise, 3)
    warm_cfg = TrainConfig(learning_rate=0.01, epochs=8, batch_size=512,
                           weight_decay=1e-4, seed=seed)
    warmup = train_warmup(noisy, warm_cfg)
    reps = warmup.representations(noisy.features[noisy.indices("train")][:4000])
    coarse = kmeans(reps, 1, seed=seed, restarts=1)
    bundle = TransitionBundle(
        [ExtendedTransitionMatrix(truth.entries.copy(), c=3, origin="true", cluster_id=0)],
        coarse,
    )
    train_cfg = TrainConfig(learning_rate=0.01, epochs=10, batch_size=512,
                            weight_decay=1e-4, seed=seed)
    test_idx = noisy.indices("test")
    robust, _ = train_robust(
        noisy,
        RobustConfig(objective="reweighted", bundle=bundle, train=train_cfg, warm_start=True),
        warmup=warmup,
    )
    acc_robust = accuracy(predict_batch(robust, noisy.features[test_idx]),
                          noisy.clean_labels[test_idx])
    clean = data.copy()
    clean.noisy_labels = data.clean_labels.copy()
    baseline, _ = train_robust(clean, RobustConfig(objective="ce", train=train_cfg))
    acc_clean = accuracy(predict_batch(baseline, data.features[test_idx]),
                         data.clean_labels[test_idx])
    assert abs(acc_clean - acc_robust) <= 0.01


def test_true_posterior_oracle_anchors_are_pure():
    # ranking the exact noisy posterior at percentile 100 returns anchor
    # points whose clean class posterior is at least 0.999 (separation >= 6s)
    case = mixture_case(c=3, d=4, n=8000, seed=9, tau=0.4, rho=0.25, separation=6.0)
    oracle = ExactMixtureOracle(case["spec"], case["noise"], case["truth"].entries)
    fine = oracle_fine_clusters(case["noisy"])
    anchors = detect_closed_anchors(oracle, case["noisy"], fine, percentile=100.0, m=1)
    for i in range(3):
        x = case["noisy"].features[anchors.rows[i].indices]
        clean_post = oracle.clean_posteriors(x)[0]
        assert clean_post[i] >= 0.999


def test_oracle_estimation_with_exact_posteriors_is_tight():
    # even through the exact (non-constant) posterior, anchor estimation at a
    # high percentile stays within 1e-3 of the truth per entry
    case = mixture_case(c=3, d=4, n=8000, seed=10, tau=0.4, rho=0.25, separation=8.0)
    oracle = ExactMixtureOracle(case["spec"], case["noise"], case["truth"].entries)
    fine = oracle_fine_clusters(case["noisy"])
    est = estimate_extended(oracle, case["noisy"], fine, AnchorConfig(m=5, percentile=100.0))
    assert np.abs(est.entries - case["truth"].entries).max() < 1e-3

"""Shared fixture builders for the test suite.

Everything here is seeded; two calls with the same arguments produce
bit-identical objects.
"""

import numpy as np

from mixnoise import (
    MixtureSpec,
    NoiseSpec,
    RegionSpec,
    generate_mixture,
    inject_mixed_noise,
    inject_region_noise,
    true_extended_matrix,
    true_region_matrices,
)
from mixnoise.clusterkit import ClusterModel
from mixnoise.netcore import TrainConfig, train_warmup
from mixnoise.synthdata import Dataset, assign_splits, default_means, generate_reservoir


def mixture_case(
    c=3,
    d=4,
    n=6000,
    seed=1,
    tau=0.4,
    rho=0.25,
    separation=6.0,
    sigma=1.0,
    test_fraction=0.25,
    val_fraction=0.1,
    reservoir_frac=0.5,
):
    """Clean data + reservoir + noisy copy + analytic truth for one setting."""
    spec = MixtureSpec(
        c=c, d=d,
        means=default_means(c, d, separation=separation, sigma=sigma),
        covariance_scale=sigma,
    )
    data = generate_mixture(spec, n, seed, test_fraction=test_fraction, val_fraction=val_fraction)
    reservoir = generate_reservoir(spec, int(np.ceil(reservoir_frac * n)), seed + 1)
    noise = NoiseSpec(tau=tau, rho=rho, seed=seed)
    noisy = inject_mixed_noise(data, noise, reservoir)
    truth = true_extended_matrix(noise, c)
    return {
        "spec": spec,
        "data": data,
        "reservoir": reservoir,
        "noise": noise,
        "noisy": noisy,
        "truth": truth,
    }


def quick_warmup(noisy, seed, epochs=30, weight_decay=0.01, lr=0.01, hidden=(32, 32)):
    cfg = TrainConfig(
        learning_rate=lr, epochs=epochs, batch_size=128,
        weight_decay=weight_decay, seed=seed, hidden=hidden,
    )
    return train_warmup(noisy, cfg)


def region_case(seed, n=5000, rho=0.15, diag_a=0.9, diag_b=0.6):
    """Two feature-space regions with different flip laws, both classes in
    each region, and an open-set reservoir between them.

    Region 1 occupies x < 0, region 2 x > 0; classes split on the y axis.
    """
    rng = np.random.default_rng(seed)
    blob_means = {(0, 0): (-6, -3), (0, 1): (-6, 3), (1, 0): (6, -3), (1, 1): (6, 3)}
    blob = rng.integers(4, size=n)
    region, label = blob // 2, blob % 2
    means = np.array([blob_means[(r, c)] for r, c in zip(region, label)], float)
    X = means + rng.standard_normal((n, 2))
    split = assign_splits(rng, n, 0.2, 0.1)
    data = Dataset(X, label.copy(), label.copy(), split, c=2)
    half = n // 2
    reservoir = np.vstack([
        np.array([0.0, 9.5]) + rng.standard_normal((half, 2)),
        np.array([0.0, 11.5]) + rng.standard_normal((n - half, 2)),
    ])
    A = np.array([[diag_a, 1 - diag_a], [1 - diag_a, diag_a]])
    B = np.array([[diag_b, 1 - diag_b], [1 - diag_b, diag_b]])
    spec = NoiseSpec(
        tau=0.0, rho=0.0, structure="region_dependent", seed=seed,
        regions=(RegionSpec([-6.0, 0.0], A, rho), RegionSpec([6.0, 0.0], B, rho)),
    )
    noisy = inject_region_noise(data, spec, reservoir)
    return {"data": data, "noisy": noisy, "spec": spec, "truths": true_region_matrices(spec, 2)}


class OraclePosteriorModel:
    """Analytic stand-in for the warmup model.

    The clean class of a point is read off the nearest population mean
    (open-set populations map to the meta class); the noisy posterior is
    then the exact matching row of the true extended matrix.  Raw features
    double as representations.
    """

    def __init__(self, spec: MixtureSpec, truth_entries: np.ndarray):
        self.spec = spec
        self.rows = np.asarray(truth_entries, dtype=np.float64)

    def _clean_classes(self, X: np.ndarray) -> np.ndarray:
        d2 = ((X[:, None, :] - self.spec.means[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argmin(d2, axis=1)
        return np.where(nearest >= self.spec.c, self.spec.c, nearest)

    def posteriors(self, X: np.ndarray) -> np.ndarray:
        return self.rows[self._clean_classes(np.atleast_2d(X))]

    def representations(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(X, dtype=np.float64))


def oracle_fine_clusters(noisy) -> ClusterModel:
    """A fine ClusterModel built from the true clean labels: one cluster per
    closed class plus the meta cluster, centroids at the per-cluster feature
    means."""
    tr = noisy.indices("train")
    labels = noisy.clean_labels[tr]
    c = noisy.c
    feats = noisy.features[tr]
    centroids = np.stack([
        feats[labels == j].mean(axis=0) if np.any(labels == j) else np.zeros(noisy.d)
        for j in range(c + 1)
    ])
    loss = float(((feats - centroids[labels]) ** 2).sum())
    return ClusterModel(
        centroids, labels.astype(np.int64), loss,
        meta_cluster=c, class_of_cluster={j: j for j in range(c)},
    )

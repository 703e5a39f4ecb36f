"""Synthetic Gaussian-mixture benchmarks with mixed closed-set/open-set label noise.

Labels are 0-based throughout: closed-set classes are ``0..c-1`` and the meta
class (the aggregate of every open-set population) is index ``c``.  Noisy
labels always stay inside the closed set; open-set corruption swaps an
instance's features for reservoir features, retags its clean label as meta,
and keeps the observed label unchanged.

Corruption uses exact-count sampling: on a split of size ``n`` exactly
``floor(tau*rho*n)`` instances are replaced and ``floor(tau*(1-rho)*n)``
distinct instances get a symmetric label flip, so desk-scale tests can assert
counts instead of rates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ResourceError

SPLITS = ("train", "val", "test")

_ROW_SUM_TOL = 1e-9


@dataclass
class Dataset:
    """Feature matrix plus clean/noisy labels and split tags."""

    features: np.ndarray      # (n, d) float64
    clean_labels: np.ndarray  # (n,) int64 in {0..c}; value c marks the meta class
    noisy_labels: np.ndarray  # (n,) int64 in {0..c-1}
    split: np.ndarray         # (n,) str, one of SPLITS
    c: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.clean_labels = np.asarray(self.clean_labels, dtype=np.int64)
        self.noisy_labels = np.asarray(self.noisy_labels, dtype=np.int64)
        self.split = np.asarray(self.split, dtype=str)
        n = self.features.shape[0]
        if not (self.clean_labels.shape == self.noisy_labels.shape == self.split.shape == (n,)):
            raise ConfigurationError("dataset arrays disagree on length n")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def meta_label(self) -> int:
        return self.c

    def indices(self, split: str) -> np.ndarray:
        """Dataset indices belonging to a split, ascending."""
        if split not in SPLITS:
            raise ConfigurationError(f"unknown split {split!r}")
        return np.flatnonzero(self.split == split)

    def copy(self) -> "Dataset":
        return Dataset(
            self.features.copy(),
            self.clean_labels.copy(),
            self.noisy_labels.copy(),
            self.split.copy(),
            self.c,
        )


@dataclass
class RegionSpec:
    """One feature-space region: its centroid, flip law, and open-set rate.

    ``rho`` here is the fraction of the region's train (and val) instances
    whose features get replaced from the reservoir.
    """

    centroid: np.ndarray
    flip: np.ndarray  # (c, c) row-stochastic flip matrix
    rho: float = 0.0

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=np.float64)
        self.flip = np.asarray(self.flip, dtype=np.float64)


@dataclass
class NoiseSpec:
    """Mixed-noise configuration: overall rate tau, open-set share rho."""

    tau: float
    rho: float
    structure: str = "class_dependent"  # or "region_dependent"
    regions: tuple[RegionSpec, ...] | None = None
    seed: int = 0
    # Open question resolved: replacement keeps the original label by default;
    # set True to draw a fresh uniform label for replaced instances instead.
    uniform_label_replacement: bool = False

    def validate(self, c: int | None = None) -> None:
        if not (0.0 <= self.tau <= 1.0 and 0.0 <= self.rho <= 1.0):
            raise ConfigurationError("tau and rho must lie in [0, 1]")
        if self.structure not in ("class_dependent", "region_dependent"):
            raise ConfigurationError(f"unknown noise structure {self.structure!r}")
        if self.structure == "region_dependent":
            if not self.regions:
                raise ConfigurationError("region_dependent noise needs at least one region")
            for i, reg in enumerate(self.regions):
                f = reg.flip
                if f.ndim != 2 or f.shape[0] != f.shape[1]:
                    raise ConfigurationError(f"region {i}: flip matrix must be square")
                if c is not None and f.shape[0] != c:
                    raise ConfigurationError(f"region {i}: flip matrix is {f.shape[0]}x{f.shape[1]}, expected {c}x{c}")
                if np.any(f < 0) or np.any(np.abs(f.sum(axis=1) - 1.0) > _ROW_SUM_TOL):
                    raise ConfigurationError(f"region {i}: flip matrix is not row-stochastic")
                if not (0.0 <= reg.rho <= 1.0):
                    raise ConfigurationError(f"region {i}: rho must lie in [0, 1]")


@dataclass
class MixtureSpec:
    """Layout of the Gaussian populations: c closed classes plus p open-set ones.

    ``means`` holds c+p rows; the first c are class means, the rest are the
    open-set populations that feed the replacement reservoir.
    ``covariance_scale`` is the isotropic standard deviation, scalar or one
    value per population.
    """

    c: int
    d: int
    means: np.ndarray
    covariance_scale: np.ndarray | float = 1.0
    class_priors: np.ndarray | None = None
    open_fraction_reservoir: float = 0.5

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        n_pop = self.means.shape[0]
        self.covariance_scale = np.broadcast_to(
            np.asarray(self.covariance_scale, dtype=np.float64), (n_pop,)
        ).copy()
        if self.class_priors is None:
            self.class_priors = np.full(self.c, 1.0 / self.c)
        else:
            self.class_priors = np.asarray(self.class_priors, dtype=np.float64)

    @property
    def p(self) -> int:
        """Number of open-set populations."""
        return self.means.shape[0] - self.c

    def validate(self) -> None:
        if self.c < 2:
            raise ConfigurationError("need at least two closed-set classes")
        if self.d < 1:
            raise ConfigurationError("feature dimension must be positive")
        if self.means.ndim != 2 or self.means.shape[1] != self.d:
            raise ConfigurationError("means must be a (c+p, d) matrix")
        if self.p < 1:
            raise ConfigurationError("need at least one open-set population")
        if np.any(self.covariance_scale <= 0):
            raise ConfigurationError("covariance_scale must be positive")
        if self.class_priors.shape != (self.c,) or np.any(self.class_priors < 0):
            raise ConfigurationError("class_priors must be a nonnegative length-c vector")
        if abs(self.class_priors.sum() - 1.0) > 1e-12:
            raise ConfigurationError("class_priors must sum to 1 within 1e-12")
        if not (0.0 < self.open_fraction_reservoir <= 10.0):
            raise ConfigurationError("open_fraction_reservoir must be positive")
        # pairwise-distinct means
        diff = self.means[:, None, :] - self.means[None, :, :]
        d2 = (diff ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        if d2.min() == 0.0:
            raise ConfigurationError("population means must be pairwise distinct")


def default_means(
    c: int,
    d: int,
    separation: float = 6.0,
    sigma: float = 1.0,
    open_populations: int = 2,
    open_separation: float | None = None,
) -> np.ndarray:
    """Deterministic blob layout used by the CLI and test fixtures.

    Closed classes sit on coordinate axes at radius ``separation * sigma``
    (pairwise distance >= separation*sigma*sqrt(2)); open-set populations are
    staggered 2 sigma apart along the negative diagonal, at least
    ``open_separation`` sigmas (default ``2*separation``) from every class.
    """
    if c > 2 * d:
        raise ConfigurationError("default layout supports at most 2*d classes")
    if open_separation is None:
        open_separation = 2.0 * separation
    means = np.zeros((c + open_populations, d))
    s = separation * sigma
    for i in range(c):
        axis = i % d
        sign = 1.0 if i < d else -1.0
        means[i, axis] = sign * s
    diag = np.ones(d) / np.sqrt(d)
    for j in range(open_populations):
        means[c + j] = -(open_separation * sigma + 2.0 * sigma * j) * diag
    return means


def assign_splits(rng: np.random.Generator, n: int, test_fraction: float, val_fraction: float) -> np.ndarray:
    """Random split tags: test_fraction of n, then val_fraction of the rest."""
    if not (0.0 <= test_fraction < 1.0 and 0.0 <= val_fraction < 1.0):
        raise ConfigurationError("split fractions must lie in [0, 1)")
    n_test = int(test_fraction * n)
    n_val = int(val_fraction * (n - n_test))
    split = np.empty(n, dtype="<U5")
    perm = rng.permutation(n)
    split[perm[:n_test]] = "test"
    split[perm[n_test:n_test + n_val]] = "val"
    split[perm[n_test + n_val:]] = "train"
    return split


def generate_mixture(
    spec: MixtureSpec,
    n: int,
    seed: int,
    test_fraction: float = 0.25,
    val_fraction: float = 0.1,
) -> Dataset:
    """Draw a clean dataset: class i is an isotropic Gaussian at means[i].

    The returned dataset has noisy_labels == clean_labels and no meta labels.
    Deterministic given (spec, n, seed).
    """
    spec.validate()
    if n < 10 * spec.c:
        raise ConfigurationError(f"n={n} too small; need at least {10 * spec.c}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(spec.c, size=n, p=spec.class_priors)
    sig = spec.covariance_scale[labels]
    features = spec.means[labels] + sig[:, None] * rng.standard_normal((n, spec.d))
    split = assign_splits(rng, n, test_fraction, val_fraction)
    return Dataset(features, labels, labels.copy(), split, spec.c)


def generate_reservoir(spec: MixtureSpec, size: int, seed: int) -> np.ndarray:
    """Sample ``size`` open-set feature rows, uniformly across open populations."""
    spec.validate()
    if size < 0:
        raise ConfigurationError("reservoir size must be nonnegative")
    rng = np.random.default_rng(seed)
    pop = spec.c + rng.integers(spec.p, size=size)
    sig = spec.covariance_scale[pop]
    return spec.means[pop] + sig[:, None] * rng.standard_normal((size, spec.d))


def _corruption_counts(n: int, tau: float, rho: float) -> tuple[int, int]:
    n_open = int(np.floor(tau * rho * n))
    n_flip = int(np.floor(tau * (1.0 - rho) * n))
    if n_open + n_flip > n:
        raise ConfigurationError("requested corruption exceeds split size")
    return n_open, n_flip


def inject_mixed_noise(data: Dataset, spec: NoiseSpec, reservoir: np.ndarray) -> Dataset:
    """Apply exact-count mixed noise to the train and val splits.

    Open-set replacement: features come from the reservoir (sampled without
    replacement), the clean label becomes meta, the observed label is kept.
    Closed-set noise: a disjoint set of instances gets a uniform flip to one
    of the other c-1 classes.  The test split is untouched.
    """
    if spec.structure != "class_dependent":
        raise ConfigurationError("inject_mixed_noise requires class_dependent structure")
    spec.validate(data.c)
    reservoir = np.asarray(reservoir, dtype=np.float64)
    c = data.c

    split_idx = {s: data.indices(s) for s in ("train", "val")}
    for s, idx in split_idx.items():
        if np.any(data.clean_labels[idx] >= c):
            raise ConfigurationError(f"{s} split already carries meta labels")
    counts = {s: _corruption_counts(len(idx), spec.tau, spec.rho) for s, idx in split_idx.items()}
    total_open = sum(n_open for n_open, _ in counts.values())
    if reservoir.shape[0] < total_open:
        raise ResourceError(
            f"reservoir has {reservoir.shape[0]} rows; {total_open} replacements requested"
        )
    if total_open and reservoir.shape[1] != data.d:
        raise ConfigurationError("reservoir dimension does not match dataset")

    out = data.copy()
    rng = np.random.default_rng(spec.seed)
    reservoir_order = rng.permutation(reservoir.shape[0])
    cursor = 0
    for s in ("train", "val"):
        idx = split_idx[s]
        n_open, n_flip = counts[s]
        perm = idx[rng.permutation(len(idx))]
        open_idx = perm[:n_open]
        flip_idx = perm[n_open:n_open + n_flip]
        if n_open:
            out.features[open_idx] = reservoir[reservoir_order[cursor:cursor + n_open]]
            out.clean_labels[open_idx] = c
            if spec.uniform_label_replacement:
                out.noisy_labels[open_idx] = rng.integers(c, size=n_open)
            cursor += n_open
        if n_flip:
            offsets = 1 + rng.integers(c - 1, size=n_flip)
            out.noisy_labels[flip_idx] = (out.noisy_labels[flip_idx] + offsets) % c
    return out


def inject_region_noise(data: Dataset, spec: NoiseSpec, reservoir: np.ndarray | None = None) -> Dataset:
    """Region-dependent noise: each train/val instance flips by the flip matrix
    of its nearest region centroid; open-set replacement runs per region at
    that region's rho (exact counts).  Requires a reservoir when any region
    has rho > 0.
    """
    if spec.structure != "region_dependent":
        raise ConfigurationError("inject_region_noise requires region_dependent structure")
    spec.validate(data.c)
    c = data.c
    regions = spec.regions
    centroids = np.stack([r.centroid for r in regions])
    if centroids.shape[1] != data.d:
        raise ConfigurationError("region centroids do not match feature dimension")

    needs_reservoir = any(r.rho > 0 for r in regions)
    if needs_reservoir:
        if reservoir is None:
            raise ConfigurationError("regions request open-set replacement but no reservoir given")
        reservoir = np.asarray(reservoir, dtype=np.float64)

    out = data.copy()
    rng = np.random.default_rng(spec.seed)
    reservoir_order = rng.permutation(reservoir.shape[0]) if needs_reservoir else None
    cursor = 0
    for s in ("train", "val"):
        idx = data.indices(s)
        if len(idx) == 0:
            continue
        x = data.features[idx]
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        region_of = np.argmin(d2, axis=1)
        for r, reg in enumerate(regions):
            members = idx[region_of == r]
            if len(members) == 0:
                continue
            n_open = int(np.floor(reg.rho * len(members)))
            perm = members[rng.permutation(len(members))]
            open_idx = perm[:n_open]
            keep_idx = perm[n_open:]
            if n_open:
                if reservoir is None or cursor + n_open > reservoir.shape[0]:
                    raise ResourceError("reservoir too small for region replacements")
                out.features[open_idx] = reservoir[reservoir_order[cursor:cursor + n_open]]
                out.clean_labels[open_idx] = c
                cursor += n_open
            if len(keep_idx):
                rows = reg.flip[out.clean_labels[keep_idx]]
                u = rng.random(len(keep_idx))
                cum = np.cumsum(rows, axis=1)
                out.noisy_labels[keep_idx] = (u[:, None] > cum).sum(axis=1).clip(0, c - 1)
    return out


def true_extended_matrix(spec: NoiseSpec, c: int, class_priors: np.ndarray | None = None):
    """Analytic ground-truth extended matrix for class-dependent mixed noise.

    Conditioning on a closed-set clean class, the flip rate is
    tau*(1-rho)/(1-tau*rho): replacement removes tau*rho of the mass from the
    closed set, so the per-class rate is the overall flip rate renormalized.
    The meta row equals the original-label distribution of replaced instances
    (class priors; uniform by default).
    """
    from .transition import ExtendedTransitionMatrix

    if spec.structure != "class_dependent":
        raise ConfigurationError("true_extended_matrix requires class_dependent structure")
    spec.validate(c)
    if c < 2:
        raise ConfigurationError("need at least two closed-set classes")
    denom = 1.0 - spec.tau * spec.rho
    if denom <= 1e-12:
        raise ConfigurationError("tau*rho = 1 leaves no closed-set instances")
    flip = spec.tau * (1.0 - spec.rho) / denom
    entries = np.full((c + 1, c), flip / (c - 1))
    np.fill_diagonal(entries[:c], 1.0 - flip)
    if spec.uniform_label_replacement or class_priors is None:
        entries[c] = 1.0 / c
    else:
        priors = np.asarray(class_priors, dtype=np.float64)
        entries[c] = priors / priors.sum()
    return ExtendedTransitionMatrix(entries, c=c, origin="true")


def true_region_matrices(spec: NoiseSpec, c: int, region_priors: list[np.ndarray] | None = None):
    """Ground-truth extended matrix per region: the region's flip matrix on top,
    the meta row from that region's replaced-label distribution (uniform by
    default)."""
    from .transition import ExtendedTransitionMatrix

    if spec.structure != "region_dependent":
        raise ConfigurationError("true_region_matrices requires region_dependent structure")
    spec.validate(c)
    out = []
    for r, reg in enumerate(spec.regions):
        entries = np.zeros((c + 1, c))
        entries[:c] = reg.flip
        if region_priors is not None:
            pri = np.asarray(region_priors[r], dtype=np.float64)
            entries[c] = pri / pri.sum()
        else:
            entries[c] = 1.0 / c
        out.append(ExtendedTransitionMatrix(entries, c=c, origin="true", cluster_id=r))
    return out


# ---------------------------------------------------------------------------
# dataset serialization: features.csv + labels.csv + meta.json in a directory
# ---------------------------------------------------------------------------

def save_dataset(data: Dataset, directory: str | Path, spec_echo: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "features.csv", data.features, delimiter=",", fmt="%.17g")
    with open(directory / "labels.csv", "w") as fh:
        fh.write("clean,noisy,split\n")
        for cl, no, sp in zip(data.clean_labels, data.noisy_labels, data.split):
            fh.write(f"{cl},{no},{sp}\n")
    meta = {"c": data.c, "d": data.d, "n": data.n, "spec": spec_echo}
    with open(directory / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(directory: str | Path) -> Dataset:
    directory = Path(directory)
    with open(directory / "meta.json") as fh:
        meta = json.load(fh)
    features = np.loadtxt(directory / "features.csv", delimiter=",", ndmin=2)
    clean, noisy, split = [], [], []
    with open(directory / "labels.csv") as fh:
        header = fh.readline()
        if header.strip() != "clean,noisy,split":
            raise ConfigurationError(f"unexpected labels.csv header: {header.strip()!r}")
        for line in fh:
            a, b, s = line.strip().split(",")
            clean.append(int(a))
            noisy.append(int(b))
            split.append(s)
    return Dataset(features, np.array(clean), np.array(noisy), np.array(split), meta["c"])


def save_reservoir(reservoir: np.ndarray, path: str | Path) -> None:
    np.savetxt(path, np.asarray(reservoir, dtype=np.float64), delimiter=",", fmt="%.17g")


def load_reservoir(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)

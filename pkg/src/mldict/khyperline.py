"""K-hyperline clustering: least-squares fit of K lines through the origin.

Each cluster is represented by a unit-norm atom ``psi``; a sample ``y`` is
approximated by ``psi * (y @ psi)`` and pays the distortion
``||y||^2 - (y @ psi)^2``. The module also carries the two clustering
comparison measures used in stability analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    EmptySamples,
    NonUnitAtom,
    SizeMismatch,
    TooFewSamples,
    ZeroData,
)
from .numerics import POWER_MAX_ITERS, POWER_TOL, dominant_left_singular_vector, make_rng

UNIT_TOL = 1e-6
INIT_STRATEGIES = ("random-samples", "random-unit")
EMPTY_POLICIES = ("reseed-worst", "keep")


@dataclass(frozen=True)
class ClusteringConfig:
    """Parameters of one K-hyperline fit.

    ``n_init`` independent initializations are run and the lowest
    distortion is kept; ``n_init=1`` is the plain algorithm.
    """

    K: int
    max_outer_iters: int = 100
    init_strategy: str = "random-samples"
    seed: int = 0
    empty_cluster_policy: str = "reseed-worst"
    n_init: int = 1
    power_iters: int = POWER_MAX_ITERS
    power_tol: float = POWER_TOL

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"init_strategy must be one of {INIT_STRATEGIES}")
        if self.empty_cluster_policy not in EMPTY_POLICIES:
            raise ValueError(f"empty_cluster_policy must be one of {EMPTY_POLICIES}")

    def with_(self, **changes) -> "ClusteringConfig":
        params = {f: getattr(self, f) for f in self.__dataclass_fields__}
        params.update(changes)
        return ClusteringConfig(**params)


@dataclass(frozen=True)
class Clustering:
    """Result of a K-hyperline fit.

    ``atoms`` has shape ``(K, M)`` with unit-norm rows. ``history`` holds the
    total distortion after every outer iteration of the winning run.
    """

    atoms: np.ndarray
    assignments: np.ndarray
    coefficients: np.ndarray
    distortion: float
    n_iter: int = 0
    history: tuple = field(default=())

    @property
    def K(self) -> int:
        return self.atoms.shape[0]


def _check_unit(atoms: np.ndarray) -> None:
    norms = np.linalg.norm(atoms, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise NonUnitAtom(f"atom norms deviate from 1 by up to {np.max(np.abs(norms - 1)):.3g}")


def distortion(y, psi) -> float:
    """Squared distance from ``y`` to the line spanned by unit vector ``psi``."""
    y = np.asarray(y, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    _check_unit(psi)
    c = float(y @ psi)
    return max(float(y @ y) - c * c, 0.0)


def assign(data, atoms):
    """Assign every sample to the atom with the largest absolute correlation.

    Returns ``(indices, coefficients)`` where ``coefficients[i]`` is the signed
    correlation with the chosen atom. Ties go to the lowest atom index.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
    if atoms.shape[0] == 0:
        raise SizeMismatch("no atoms given")
    _check_unit(atoms)
    corr = data @ atoms.T
    idx = np.argmax(np.abs(corr), axis=1)
    coef = corr[np.arange(data.shape[0]), idx]
    return idx, coef


def total_distortion(data, indices, coefficients) -> float:
    energy = np.einsum("ij,ij->i", data, data)
    return float(np.sum(np.maximum(energy - coefficients * coefficients, 0.0)))


def _init_atoms(data, K, strategy, rng, nonzero):
    M = data.shape[1]
    if strategy == "random-unit":
        atoms = rng.standard_normal((K, M))
    else:
        pick = rng.choice(nonzero, size=K, replace=False)
        atoms = data[np.sort(pick)]
    return atoms / np.linalg.norm(atoms, axis=1, keepdims=True)


def _fit_once(data, cfg: ClusteringConfig, rng, nonzero) -> Clustering:
    K = cfg.K
    atoms = _init_atoms(data, K, cfg.init_strategy, rng, nonzero)
    energy = np.einsum("ij,ij->i", data, data)
    prev = None
    history = []
    n_iter = 0
    for n_iter in range(1, cfg.max_outer_iters + 1):
        idx, coef = assign(data, atoms)
        if prev is not None and np.array_equal(idx, prev):
            break
        prev = idx
        new_atoms = atoms.copy()
        empty = []
        for j in range(K):
            members = data[idx == j]
            if members.shape[0] == 0 or not np.any(members):
                empty.append(j)
                continue
            new_atoms[j] = dominant_left_singular_vector(
                members, init=atoms[j], max_iters=cfg.power_iters, tol=cfg.power_tol
            )
        atoms = new_atoms
        # distortion of the current assignment under the updated atoms
        c = np.einsum("ij,ij->i", data, atoms[idx])
        resid = np.maximum(energy - c * c, 0.0)
        history.append(float(resid.sum()))
        if empty and cfg.empty_cluster_policy == "reseed-worst":
            order = np.argsort(-resid, kind="stable")
            order = order[resid[order] > 0]
            for j, i in zip(empty, order):
                atoms[j] = data[i] / np.sqrt(energy[i])
    idx, coef = assign(data, atoms)
    dist = total_distortion(data, idx, coef)
    if not history or dist < history[-1]:
        history.append(dist)
    return Clustering(atoms, idx, coef, dist, n_iter, tuple(history))


def fit(data, cfg: ClusteringConfig, key=()) -> Clustering:
    """Fit K hyperlines to the rows of ``data``.

    Alternates nearest-line assignment and a power-iteration centroid update
    until the assignment vector stops changing or ``cfg.max_outer_iters`` is
    reached. Total distortion never increases between outer iterations.
    ``key`` selects an independent random stream of ``cfg.seed``; callers
    fitting many clusterings from one seed pass distinct keys.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    energy = np.einsum("ij,ij->i", data, data)
    nonzero = np.flatnonzero(energy > 0)
    if nonzero.size == 0:
        raise ZeroData("training matrix is all zeros")
    if nonzero.size < cfg.K:
        raise TooFewSamples(f"K={cfg.K} exceeds the {nonzero.size} nonzero samples")
    best = None
    for run in range(cfg.n_init):
        rng = make_rng(cfg.seed, *key, run)
        result = _fit_once(data, cfg, rng, nonzero)
        if best is None or result.distortion < best.distortion:
            best = result
    return best


def _pair_distance(psi, lam):
    # sqrt of the distortion between two unit vectors
    c = np.clip(np.abs(psi @ lam.T), 0.0, 1.0)
    return np.sqrt(np.maximum(1.0 - c * c, 0.0))


def centroid_distance(first, second) -> float:
    """Max-min distance between two sets of hyperline centroids.

    Both terms of each candidate pair are evaluated at the same ``(j, l)``
    pair, so the measure is symmetric and insensitive to atom signs.
    Accepts :class:`Clustering` objects or ``(K, M)`` atom arrays.
    """
    a = np.asarray(getattr(first, "atoms", first), dtype=np.float64)
    b = np.asarray(getattr(second, "atoms", second), dtype=np.float64)
    if a.shape != b.shape:
        raise SizeMismatch(f"atom sets differ in shape: {a.shape} vs {b.shape}")
    _check_unit(a)
    _check_unit(b)
    d_ab = _pair_distance(a, b)  # d(psi_j, lambda_l)
    d_ba = _pair_distance(b, a)  # d(lambda_j, psi_l) == d(psi_l, lambda_j)
    return float(np.max(np.min(d_ab + d_ba, axis=1)))


def empirical_l1_distance(first, second, samples) -> float:
    """Monte-Carlo L1 distance between the distortion functions of two clusterings."""
    a = np.atleast_2d(np.asarray(getattr(first, "atoms", first), dtype=np.float64))
    b = np.atleast_2d(np.asarray(getattr(second, "atoms", second), dtype=np.float64))
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0 or samples.size == 0:
        raise EmptySamples("no samples given")
    if a.shape[1] != b.shape[1] or a.shape[1] != samples.shape[1]:
        raise SizeMismatch("dimension mismatch between clusterings and samples")
    energy = np.einsum("ij,ij->i", samples, samples)
    _, ca = assign(samples, a)
    _, cb = assign(samples, b)
    ga = np.maximum(energy - ca * ca, 0.0)
    gb = np.maximum(energy - cb * cb, 0.0)
    return float(np.mean(np.abs(ga - gb)))


class KHyperlineClustering(ClusterMixin, TransformerMixin, BaseEstimator):
    """K-hyperline clustering estimator.

    Parameters
    ----------
    n_clusters : int, default=8
        Number of lines (atoms).
    max_iter : int, default=100
        Maximum number of assignment/update rounds.
    init : {"random-samples", "random-unit"}, default="random-samples"
        Atoms start either as distinct normalized samples or as random unit
        vectors.
    empty_cluster : {"reseed-worst", "keep"}, default="reseed-worst"
        What to do with an atom that lost all its samples.
    n_init : int, default=1
        Number of initializations; the lowest distortion wins.
    random_state : int, default=0
        Seed of the initialization.

    Attributes
    ----------
    components_ : ndarray of shape (n_clusters, n_features)
        Unit-norm atoms.
    labels_ : ndarray of shape (n_samples,)
    coefficients_ : ndarray of shape (n_samples,)
    distortion_ : float
    distortion_history_ : tuple of float
    n_iter_ : int
    """

    def __init__(
        self,
        n_clusters=8,
        *,
        max_iter=100,
        init="random-samples",
        empty_cluster="reseed-worst",
        n_init=1,
        random_state=0,
    ):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.init = init
        self.empty_cluster = empty_cluster
        self.n_init = n_init
        self.random_state = random_state

    def _config(self) -> ClusteringConfig:
        return ClusteringConfig(
            K=self.n_clusters,
            max_outer_iters=self.max_iter,
            init_strategy=self.init,
            seed=0 if self.random_state is None else self.random_state,
            empty_cluster_policy=self.empty_cluster,
            n_init=self.n_init,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        result = fit(X, self._config())
        self.clustering_ = result
        self.components_ = result.atoms
        self.labels_ = result.assignments
        self.coefficients_ = result.coefficients
        self.distortion_ = result.distortion
        self.distortion_history_ = result.history
        self.n_iter_ = result.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return assign(X, self.components_)[0]

    def transform(self, X):
        """1-sparse codes: column ``labels[i]`` of row ``i`` holds the coefficient."""
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        idx, coef = assign(X, self.components_)
        out = np.zeros((X.shape[0], self.n_clusters))
        out[np.arange(X.shape[0]), idx] = coef
        return out

    def score(self, X, y=None):
        """Negative total distortion of ``X``."""
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        idx, coef = assign(X, self.components_)
        return -total_distortion(X, idx, coef)


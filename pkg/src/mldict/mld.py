"""Multilevel dictionary learning.

Each level fits a K-hyperline clustering to the residuals left by the
previous levels, so every training sample receives exactly one atom per
level. Also provided: MDL-based selection of the per-level atom count and
the robust (ensemble) variant, plus sklearn-style estimators for both.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import khyperline
from .exceptions import (
    DimensionMismatch,
    EmptyTrainingSet,
    InvalidK,
    InvalidVariance,
    SubsetTooLarge,
)
from .khyperline import ClusteringConfig
from .numerics import make_rng
from .pursuit import (
    EnsembleCode,
    SparseCode,
    correlate_and_max,
    mulp_encode,
    reconstruct,
    rmld_encode,
    stacked_coefficients,
)

# spawn-key slot reserved for RMLD subset draws, distinct from clustering runs
_SUBSET_STREAM = 2**31


@dataclass(frozen=True)
class MultilevelDictionary:
    """Ordered sub-dictionaries; ``levels[l]`` has shape ``(K_l, M)``."""

    levels: tuple
    error_goal: float = 0.0

    def __post_init__(self):
        levels = tuple(np.asarray(a, dtype=np.float64) for a in self.levels)
        if not levels:
            raise ValueError("a multilevel dictionary needs at least one level")
        M = levels[0].shape[1]
        if any(a.ndim != 2 or a.shape[1] != M or a.shape[0] < 1 for a in levels):
            raise DimensionMismatch("all levels must be non-empty (K_l, M) arrays")
        object.__setattr__(self, "levels", levels)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_features(self) -> int:
        return self.levels[0].shape[1]

    @property
    def per_level_K(self) -> list:
        return [a.shape[0] for a in self.levels]

    def truncate(self, n_levels: int) -> "MultilevelDictionary":
        return MultilevelDictionary(self.levels[:n_levels], self.error_goal)

    def stacked(self) -> np.ndarray:
        """All atoms as one ``(sum K_l, M)`` array, level by level."""
        return np.vstack(self.levels)


@dataclass(frozen=True)
class RobustMultilevelDictionary:
    """``levels[l]`` is a tuple of ``D`` sub-dictionaries of shape ``(K_l, M)``."""

    levels: tuple
    subset_size: int = 0
    error_goal: float = 0.0

    def __post_init__(self):
        levels = tuple(tuple(np.asarray(a, dtype=np.float64) for a in lvl) for lvl in self.levels)
        if not levels or not levels[0]:
            raise ValueError("a robust dictionary needs at least one level and one round")
        D = len(levels[0])
        M = levels[0][0].shape[1]
        for lvl in levels:
            if len(lvl) != D:
                raise DimensionMismatch("every level must hold the same number of rounds")
            if len({a.shape for a in lvl}) != 1 or lvl[0].shape[1] != M:
                raise DimensionMismatch("sub-dictionaries of a level must share (K_l, M)")
        object.__setattr__(self, "levels", levels)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def rounds(self) -> int:
        return len(self.levels[0])

    @property
    def n_features(self) -> int:
        return self.levels[0][0].shape[1]

    @property
    def per_level_K(self) -> list:
        return [lvl[0].shape[0] for lvl in self.levels]

    def truncate(self, n_levels: int) -> "RobustMultilevelDictionary":
        return RobustMultilevelDictionary(self.levels[:n_levels], self.subset_size, self.error_goal)


@dataclass(frozen=True)
class TrainingTrace:
    """Per-level energies recorded while training.

    ``represented_energy[l]`` is the squared Frobenius norm of level ``l``'s
    approximation and ``residual_energy[l]`` that of the residual after it.
    """

    initial_energy: float
    represented_energy: tuple
    residual_energy: tuple
    active_count: tuple

    def rows(self):
        for l, (rep, res, act) in enumerate(
            zip(self.represented_energy, self.residual_energy, self.active_count), start=1
        ):
            yield {"level": l, "active": act, "represented_energy": rep, "residual_energy": res}


@dataclass(frozen=True)
class MdlConfig:
    """Settings of the MDL atom-count search.

    ``restarts`` is the minimum number of clustering initializations per
    candidate; a poor local optimum would otherwise bias the comparison.
    """

    alpha: float = 0.5
    candidate_K: tuple = (8,)
    max_levels: int = 4
    log_base: float = math.e
    restarts: int = 5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        cands = tuple(int(k) for k in self.candidate_K)
        if not cands or min(cands) < 1:
            raise ValueError("candidate_K must be a non-empty list of counts >= 1")
        object.__setattr__(self, "candidate_K", cands)
        if self.max_levels < 1:
            raise ValueError("max_levels must be >= 1")
        if self.log_base <= 0 or self.log_base == 1:
            raise ValueError("log_base must be positive and != 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass(frozen=True)
class MdlSelection:
    level_sizes: list
    dictionary: MultilevelDictionary
    codes: SparseCode
    trace: TrainingTrace
    scores: list  # one {K: score} dict per level


def _broadcast_K(per_level_K, max_levels):
    if np.isscalar(per_level_K):
        Ks = [int(per_level_K)] * max_levels
    else:
        Ks = [int(k) for k in per_level_K]
        if len(Ks) == 1:
            Ks = Ks * max_levels
        if len(Ks) < max_levels:
            raise InvalidK(f"{len(Ks)} atom counts given for {max_levels} levels")
    if any(k < 1 for k in Ks[:max_levels]):
        raise InvalidK("atom counts must be >= 1")
    return Ks[:max_levels]


def _clamp(K, available, level):
    if K > available:
        warnings.warn(
            f"level {level + 1}: {K} atoms requested but only {available} active samples;"
            " clamping",
            RuntimeWarning,
            stacklevel=3,
        )
        return available
    return K


def _validate_data(data):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] == 0:
        raise EmptyTrainingSet("training data must be a non-empty (n_samples, M) array")
    if not np.all(np.isfinite(data)):
        raise EmptyTrainingSet("training data contains NaN or Inf")
    return data


def _active(R, error_goal):
    return np.flatnonzero(np.einsum("ij,ij->i", R, R) > error_goal)


def train(data, per_level_K, max_levels, error_goal=0.0, cfg: ClusteringConfig | None = None):
    """Learn a multilevel dictionary.

    Parameters
    ----------
    data : ndarray of shape (n_samples, M)
    per_level_K : int or sequence of int
        Atoms per level; a single value is used for every level.
    max_levels : int
    error_goal : float, default=0
        Samples whose squared residual norm is at most this value stop
        taking part in training.
    cfg : ClusteringConfig, optional
        Clustering settings; its ``K`` is overridden per level.

    Returns
    -------
    dictionary : MultilevelDictionary
    codes : SparseCode
        Training codes; inactive samples get coefficient 0 at index 0.
    trace : TrainingTrace
    """
    data = _validate_data(data)
    if error_goal < 0:
        raise ValueError("error_goal must be >= 0")
    Ks = _broadcast_K(per_level_K, max_levels)
    cfg = cfg or ClusteringConfig(K=1)
    T = data.shape[0]
    R = data.copy()
    indices = np.zeros((T, max_levels), dtype=np.int64)
    coefs = np.zeros((T, max_levels))
    levels, rep, res, act_counts = [], [], [], []
    for l in range(max_levels):
        act = _active(R, error_goal)
        if act.size == 0:
            break
        K = _clamp(Ks[l], act.size, l)
        clus = khyperline.fit(R[act], cfg.with_(K=K), key=(l, 0))
        approx = clus.coefficients[:, None] * clus.atoms[clus.assignments]
        R[act] -= approx
        indices[act, l] = clus.assignments
        coefs[act, l] = clus.coefficients
        levels.append(clus.atoms)
        rep.append(float(np.sum(approx * approx)))
        res.append(float(np.sum(R * R)))
        act_counts.append(int(act.size))
    if not levels:
        raise EmptyTrainingSet("no sample has energy above the error goal")
    L = len(levels)
    trace = TrainingTrace(float(np.sum(data * data)), tuple(rep), tuple(res), tuple(act_counts))
    codes = SparseCode(indices[:, :L], coefs[:, :L], R)
    return MultilevelDictionary(tuple(levels), error_goal), codes, trace


def mdl_score(R_prev, atoms, A, K, sigma2, log_base=math.e) -> float:
    """Description length of one level's data given its sub-dictionary.

    Parameters
    ----------
    R_prev : ndarray of shape (T, M)
        Training matrix of the level (previous residuals).
    atoms : ndarray of shape (K, M)
    A : ndarray of shape (T, K)
        Coefficients, at most one nonzero per row.
    K : int
    sigma2 : float
        Residual variance under the Gaussian noise model.
    log_base : float, default=e
        Unit of the score; the whole score is divided by ``ln(log_base)``.
    """
    if sigma2 <= 0:
        raise InvalidVariance(f"sigma^2 must be positive, got {sigma2}")
    R_prev = np.atleast_2d(np.asarray(R_prev, dtype=np.float64))
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    T, M = R_prev.shape
    if np.any(np.count_nonzero(A, axis=1) > 1):
        raise ValueError("coefficient rows must be 1-sparse")
    err = R_prev - A @ np.asarray(atoms, dtype=np.float64)
    fit_term = float(np.sum(err * err)) / (2.0 * sigma2)
    model = 0.5 * T * math.log(M * T) + T * math.log(T * K) + 0.5 * K * M * math.log(M * T)
    return (fit_term + model) / math.log(log_base)


def _dense_codes(clus):
    A = np.zeros((clus.assignments.size, clus.K))
    A[np.arange(clus.assignments.size), clus.assignments] = clus.coefficients
    return A


def estimate_level_sizes(
    data, cfg: MdlConfig, clus_cfg: ClusteringConfig | None = None, error_goal=0.0
) -> MdlSelection:
    """Pick each level's atom count by minimum description length.

    Every candidate K is fitted afresh on the level's active residuals and
    scored with the variance model ``sigma_l^2 = (1 - alpha)^l E / (M T)``,
    where ``E`` is the energy of ``data`` and ``T`` its sample count. The
    best-scoring clustering supplies the residuals for the next level.
    """
    data = _validate_data(data)
    clus_cfg = clus_cfg or ClusteringConfig(K=1)
    clus_cfg = clus_cfg.with_(n_init=max(clus_cfg.n_init, cfg.restarts))
    T, M = data.shape
    E = float(np.sum(data * data))
    R = data.copy()
    L = cfg.max_levels
    indices = np.zeros((T, L), dtype=np.int64)
    coefs = np.zeros((T, L))
    levels, sizes, scores, rep, res, act_counts = [], [], [], [], [], []
    for l in range(L):
        act = _active(R, error_goal)
        if act.size == 0:
            break
        sigma2 = (1.0 - cfg.alpha) ** (l + 1) * E / (M * T)
        Rl = R[act]
        level_scores = {}
        best = None
        for K in cfg.candidate_K:
            if K > act.size:
                continue
            clus = khyperline.fit(Rl, clus_cfg.with_(K=K), key=(l, K))
            s = mdl_score(Rl, clus.atoms, _dense_codes(clus), K, sigma2, cfg.log_base)
            level_scores[K] = s
            if best is None or s < level_scores[best[0]]:
                best = (K, clus)
        if best is None:
            K = _clamp(min(cfg.candidate_K), act.size, l)
            clus = khyperline.fit(Rl, clus_cfg.with_(K=K), key=(l, K))
            best = (K, clus)
        K, clus = best
        approx = clus.coefficients[:, None] * clus.atoms[clus.assignments]
        R[act] -= approx
        indices[act, l] = clus.assignments
        coefs[act, l] = clus.coefficients
        levels.append(clus.atoms)
        sizes.append(K)
        scores.append(level_scores)
        rep.append(float(np.sum(approx * approx)))
        res.append(float(np.sum(R * R)))
        act_counts.append(int(act.size))
    if not levels:
        raise EmptyTrainingSet("no sample has energy above the error goal")
    n = len(levels)
    trace = TrainingTrace(E, tuple(rep), tuple(res), tuple(act_counts))
    return MdlSelection(
        sizes,
        MultilevelDictionary(tuple(levels), error_goal),
        SparseCode(indices[:, :n], coefs[:, :n], R),
        trace,
        scores,
    )


def train_robust(
    data,
    per_level_K,
    max_levels,
    rounds,
    subset_size,
    cfg: ClusteringConfig | None = None,
    error_goal=0.0,
):
    """Learn a robust multilevel dictionary from ``rounds`` random subsets per level.

    At each level ``rounds`` subsets of ``subset_size`` active samples are
    drawn (without replacement inside a subset, independently across
    subsets), one clustering is fitted per subset, and every active sample
    is approximated by the mean of its ``rounds`` one-sparse approximations.
    When a subset would cover all active samples they are used in order
    without sampling, so ``rounds=1, subset_size=n_samples`` reproduces
    :func:`train` exactly.

    Returns
    -------
    dictionary : RobustMultilevelDictionary
    codes : EnsembleCode
    trace : TrainingTrace
    """
    data = _validate_data(data)
    T = data.shape[0]
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    subset_size = int(subset_size)
    if subset_size < 1:
        raise ValueError("subset_size must be >= 1")
    if subset_size > T:
        raise SubsetTooLarge(f"subset_size={subset_size} exceeds the {T} training samples")
    Ks = _broadcast_K(per_level_K, max_levels)
    cfg = cfg or ClusteringConfig(K=1)
    R = data.copy()
    indices = np.zeros((T, max_levels, rounds), dtype=np.int64)
    coefs = np.zeros((T, max_levels, rounds))
    levels, rep, res, act_counts = [], [], [], []
    for l in range(max_levels):
        act = _active(R, error_goal)
        if act.size == 0:
            break
        Rl = R[act]
        size = min(subset_size, act.size)
        K = _clamp(Ks[l], size, l)
        subs = []
        for d in range(rounds):
            if size == act.size:
                sub = Rl
            else:
                rng = make_rng(cfg.seed, l, d, _SUBSET_STREAM)
                sub = Rl[np.sort(rng.choice(act.size, size=size, replace=False))]
            # a subset may hold fewer nonzero rows than K
            nz = int(np.count_nonzero(np.einsum("ij,ij->i", sub, sub) > 0))
            subs.append(khyperline.fit(sub, cfg.with_(K=min(K, nz)), key=(l, d)).atoms)
        if len({a.shape[0] for a in subs}) != 1:
            kmin = min(a.shape[0] for a in subs)
            raise InvalidK(f"level {l + 1}: some subsets support only {kmin} atoms")
        approx = None
        for d, atoms in enumerate(subs):
            idx, coef = correlate_and_max(Rl, atoms)
            part = coef[:, None] * atoms[idx]
            approx = part if approx is None else approx + part
            indices[act, l, d] = idx
            coefs[act, l, d] = coef
        approx = approx / rounds
        R[act] -= approx
        levels.append(tuple(subs))
        rep.append(float(np.sum(approx * approx)))
        res.append(float(np.sum(R * R)))
        act_counts.append(int(act.size))
    if not levels:
        raise EmptyTrainingSet("no sample has energy above the error goal")
    L = len(levels)
    trace = TrainingTrace(float(np.sum(data * data)), tuple(rep), tuple(res), tuple(act_counts))
    rdict = RobustMultilevelDictionary(tuple(levels), subset_size, error_goal)
    return rdict, EnsembleCode(indices[:, :L], coefs[:, :L], R), trace


def _clustering_config(est, K=1):
    return ClusteringConfig(
        K=K,
        max_outer_iters=est.max_iter,
        init_strategy=est.init,
        seed=0 if est.random_state is None else int(est.random_state),
        n_init=est.n_init,
    )


class _MultilevelBase(TransformerMixin, BaseEstimator):
    def encode(self, X, n_levels=None):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return self._encode(X, n_levels)

    def transform(self, X):
        """Stacked sparse codes, one column per atom."""
        code = self.encode(X)
        return stacked_coefficients(code, self.dictionary_)

    def reconstruct(self, X, n_levels=None):
        code = self.encode(X, n_levels)
        return reconstruct(code, self.dictionary_.truncate(code.levels_used))

    def score(self, X, y=None):
        """Negative mean squared approximation error per entry."""
        X = check_array(X, dtype=np.float64)
        return -float(np.mean((X - self.reconstruct(X)) ** 2))


class MultilevelDictionaryLearning(_MultilevelBase):
    """Multilevel dictionary learning estimator.

    Parameters
    ----------
    n_atoms : int, list of int or "mdl", default=8
        Atoms per level. ``"mdl"`` selects each level's count from
        ``candidate_atoms`` by minimum description length.
    n_levels : int, default=4
    error_goal : float, default=0.0
    candidate_atoms : sequence of int, optional
        Candidates for ``n_atoms="mdl"``; defaults to ``range(1, 17)``.
    alpha : float, default=0.5
        Fraction of energy each level is assumed to represent (MDL only).
    max_iter, init, n_init, random_state
        Passed to the per-level K-hyperline clustering.

    Attributes
    ----------
    dictionary_ : MultilevelDictionary
    codes_ : SparseCode
        Codes of the training samples.
    trace_ : TrainingTrace
    n_atoms_per_level_ : list of int
    mdl_scores_ : list of dict or None
    """

    def __init__(
        self,
        n_atoms=8,
        n_levels=4,
        *,
        error_goal=0.0,
        candidate_atoms=None,
        alpha=0.5,
        max_iter=100,
        init="random-samples",
        n_init=1,
        random_state=0,
    ):
        self.n_atoms = n_atoms
        self.n_levels = n_levels
        self.error_goal = error_goal
        self.candidate_atoms = candidate_atoms
        self.alpha = alpha
        self.max_iter = max_iter
        self.init = init
        self.n_init = n_init
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        cfg = _clustering_config(self)
        if isinstance(self.n_atoms, str):
            if self.n_atoms != "mdl":
                raise ValueError(f"unknown n_atoms={self.n_atoms!r}")
            cands = self.candidate_atoms or range(1, 17)
            sel = estimate_level_sizes(
                X, MdlConfig(self.alpha, tuple(cands), self.n_levels), cfg, self.error_goal
            )
            self.dictionary_, self.codes_, self.trace_ = sel.dictionary, sel.codes, sel.trace
            self.mdl_scores_ = sel.scores
        else:
            self.dictionary_, self.codes_, self.trace_ = train(
                X, self.n_atoms, self.n_levels, self.error_goal, cfg
            )
            self.mdl_scores_ = None
        self.n_atoms_per_level_ = self.dictionary_.per_level_K
        self.n_features_in_ = X.shape[1]
        return self

    def _encode(self, X, n_levels):
        return mulp_encode(X, self.dictionary_, n_levels)


class RobustMultilevelDictionaryLearning(_MultilevelBase):
    """Ensemble (robust) multilevel dictionary learning estimator.

    Parameters
    ----------
    n_atoms : int or list of int, default=8
    n_levels : int, default=4
    n_rounds : int, default=10
        Sub-dictionaries per level.
    subset_size : int or float, default=0.25
        Samples per subset; a float in (0, 1] is a fraction of the
        training set.
    error_goal, max_iter, init, n_init, random_state
        As in :class:`MultilevelDictionaryLearning`.
    """

    def __init__(
        self,
        n_atoms=8,
        n_levels=4,
        *,
        n_rounds=10,
        subset_size=0.25,
        error_goal=0.0,
        max_iter=100,
        init="random-samples",
        n_init=1,
        random_state=0,
    ):
        self.n_atoms = n_atoms
        self.n_levels = n_levels
        self.n_rounds = n_rounds
        self.subset_size = subset_size
        self.error_goal = error_goal
        self.max_iter = max_iter
        self.init = init
        self.n_init = n_init
        self.random_state = random_state

    def _resolve_subset(self, T):
        s = self.subset_size
        if isinstance(s, float):
            if not 0.0 < s <= 1.0:
                raise ValueError("a fractional subset_size must lie in (0, 1]")
            return max(1, int(round(s * T)))
        return int(s)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.dictionary_, self.codes_, self.trace_ = train_robust(
            X,
            self.n_atoms,
            self.n_levels,
            self.n_rounds,
            self._resolve_subset(X.shape[0]),
            _clustering_config(self),
            self.error_goal,
        )
        self.n_atoms_per_level_ = self.dictionary_.per_level_K
        self.n_features_in_ = X.shape[1]
        return self

    def _encode(self, X, n_levels):
        return rmld_encode(X, self.dictionary_, n_levels)

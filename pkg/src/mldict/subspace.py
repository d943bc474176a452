"""Graphs built from sparse codes, and the linear embeddings learned on them.

Samples are rows throughout. For data ``Y`` of shape ``(T, M)`` and codes
``A`` of shape ``(T, K)``, the affinity between samples ``i`` and ``j`` is
``|a_i . a_j|``. Embeddings are ``M x d`` matrices ``V``; a sample ``y`` maps
to ``y @ V``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import (
    DegenerateGraph,
    DimensionMismatch,
    EmptyCodes,
    EmptyTrainSet,
    NotPositiveDefinite,
)
from .mld import MultilevelDictionaryLearning, RobustMultilevelDictionaryLearning
from .numerics import generalized_symmetric_eig, make_rng

REGULARIZATION = 1e-8


class SingleClassWarning(UserWarning):
    """Only one class is present, so there are no between-class pairs."""


@dataclass(frozen=True)
class AffinityGraph:
    W: np.ndarray

    @property
    def degree(self) -> np.ndarray:
        return self.W.sum(axis=1)

    @property
    def laplacian(self) -> np.ndarray:
        return np.diag(self.degree) - self.W

    @property
    def n_nodes(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class Embedding:
    V: np.ndarray  # (M, d)
    eigenvalues: np.ndarray

    @property
    def dim(self) -> int:
        return self.V.shape[1]

    def transform(self, Y) -> np.ndarray:
        return np.asarray(Y, dtype=np.float64) @ self.V


def _check_codes(codes):
    A = np.asarray(codes, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
        raise EmptyCodes("codes must be a non-empty (n_samples, n_atoms) array")
    return A


def _keep_top(S, tau, allowed=None):
    """Zero all but the ``tau`` largest entries of each row (ties to the lower column)."""
    if tau < 1:
        raise ValueError("tau must be >= 1")
    T = S.shape[0]
    out = np.zeros_like(S)
    rank = np.where(allowed, S, -np.inf) if allowed is not None else S.copy()
    np.fill_diagonal(rank, -np.inf)
    for i in range(T):
        order = np.argsort(-rank[i], kind="stable")[:tau]
        order = order[np.isfinite(rank[i, order])]
        out[i, order] = S[i, order]
    return np.maximum(out, out.T)


def sparse_code_graph(codes, tau) -> AffinityGraph:
    """Affinity graph ``|A A^T|`` keeping the ``tau`` strongest neighbors per sample.

    Rows are sparsified independently and then symmetrized by elementwise
    maximum; the diagonal is always zero.
    """
    A = _check_codes(codes)
    S = np.abs(A @ A.T)
    return AffinityGraph(_keep_top(S, int(tau)))


def lde_affinities(codes, labels, tau, tau_between):
    """Within-class and between-class affinity matrices.

    Neighbors of sample ``i`` are ranked by ``|a_i . a_j|``; the ``tau``
    strongest of the same class go to ``W`` and the ``tau_between``
    strongest of other classes to ``W'``.
    """
    A = _check_codes(codes)
    labels = np.asarray(labels)
    if labels.shape != (A.shape[0],):
        raise DimensionMismatch(f"{labels.size} labels for {A.shape[0]} samples")
    S = np.abs(A @ A.T)
    same = labels[:, None] == labels[None, :]
    if np.all(same):
        warnings.warn("only one class present; between-class graph is empty", SingleClassWarning, stacklevel=2)
    W = _keep_top(S, int(tau), same)
    Wp = _keep_top(S, int(tau_between), ~same)
    return W, Wp


def _regularized_eig(A, B, d, which):
    try:
        return generalized_symmetric_eig(A, B, d, which)
    except NotPositiveDefinite:
        M = B.shape[0]
        shift = REGULARIZATION * max(np.trace(B) / M, np.finfo(np.float64).tiny)
        return generalized_symmetric_eig(A, B + shift * np.eye(M), d, which)


def _check_dim(Y, d, T):
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != T:
        raise DimensionMismatch(f"data must have {T} rows to match the graph")
    if not 1 <= d <= Y.shape[1]:
        raise DimensionMismatch(f"d={d} must lie in [1, {Y.shape[1]}]")
    return Y


def lpp(Y, graph: AffinityGraph, d) -> Embedding:
    """Locality preserving projection.

    Minimizes ``trace(V^T Y^T L Y V)`` subject to ``V^T Y^T D Y V = I``,
    i.e. the ``d`` smallest generalized eigenvectors of that pencil.
    """
    Y = _check_dim(Y, d, graph.n_nodes)
    if not np.any(graph.W):
        raise DegenerateGraph("the affinity graph has no edges")
    A = Y.T @ graph.laplacian @ Y
    B = Y.T @ (graph.degree[:, None] * Y)
    vals, V = _regularized_eig(A, B, d, "smallest")
    return Embedding(V, vals)


def lde(Y, W, Wp, d) -> Embedding:
    """Local discriminant embedding by the ratio-trace relaxation.

    Returns the ``d`` largest generalized eigenvectors of
    ``(Y^T L' Y, Y^T L Y)`` where ``L`` and ``L'`` are the Laplacians of the
    within-class and between-class graphs.
    """
    W = np.asarray(W, dtype=np.float64)
    Wp = np.asarray(Wp, dtype=np.float64)
    Y = _check_dim(Y, d, W.shape[0])
    if not np.any(W):
        raise DegenerateGraph("the within-class graph has no edges")
    L = AffinityGraph(W).laplacian
    Lp = AffinityGraph(Wp).laplacian
    vals, V = _regularized_eig(Y.T @ Lp @ Y, Y.T @ L @ Y, d, "largest")
    return Embedding(V, vals)


def knn_classify(train_emb, train_labels, test_emb, k=1, chunk=1024):
    """Euclidean nearest-neighbor labels.

    Neighbors are ordered by distance, then by training index. With
    ``k > 1`` the majority label wins; a tied vote goes to whichever of the
    tied labels has the nearest neighbor.
    """
    X = np.asarray(train_emb, dtype=np.float64)
    y = np.asarray(train_labels)
    Q = np.asarray(test_emb, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if Q.ndim == 1:
        Q = Q[:, None]
    if X.shape[0] == 0:
        raise EmptyTrainSet("no training samples")
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{y.shape[0]} labels for {X.shape[0]} training samples")
    if Q.shape[1] != X.shape[1]:
        raise DimensionMismatch("training and test embeddings differ in dimension")
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, X.shape[0])
    out = np.empty(Q.shape[0], dtype=y.dtype)
    for s in range(0, Q.shape[0], chunk):
        diff = Q[s : s + chunk, None, :] - X[None, :, :]
        dist = np.einsum("ijk,ijk->ij", diff, diff)
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        for r, nb in enumerate(order):
            if k == 1:
                out[s + r] = y[nb[0]]
                continue
            labs, counts = np.unique(y[nb], return_counts=True)
            tied = set(labs[counts == counts.max()].tolist())
            out[s + r] = next(y[j] for j in nb if y[j] in tied)
    return out


def _make_coder(kind, n_atoms, n_levels, n_rounds, subset_size, random_state):
    if kind == "mld":
        return MultilevelDictionaryLearning(n_atoms, n_levels, random_state=random_state)
    if kind == "rmld":
        return RobustMultilevelDictionaryLearning(
            n_atoms, n_levels, n_rounds=n_rounds, subset_size=subset_size, random_state=random_state
        )
    raise ValueError(f"unknown coder {kind!r}; use 'mld' or 'rmld'")


class _SparseCodeEmbedding(TransformerMixin, BaseEstimator):
    def _fit_coder(self, X):
        self.coder_ = _make_coder(
            self.coder, self.n_atoms, self.n_levels, self.n_rounds, self.subset_size, self.random_state
        ).fit(X)
        return self.coder_.transform(X)

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return self.embedding_.transform(X)


class SparseCodeLPP(_SparseCodeEmbedding):
    """Unsupervised LPP on a graph built from multilevel sparse codes.

    Parameters
    ----------
    n_components : int, default=2
    n_neighbors : int, default=5
        Strongest affinities kept per sample.
    coder : {"mld", "rmld"}, default="mld"
    n_atoms, n_levels, n_rounds, subset_size, random_state
        Settings of the dictionary used to code the training data.

    Attributes
    ----------
    coder_ : fitted dictionary estimator
    graph_ : AffinityGraph
    embedding_ : Embedding
    """

    def __init__(
        self,
        n_components=2,
        *,
        n_neighbors=5,
        coder="mld",
        n_atoms=8,
        n_levels=4,
        n_rounds=10,
        subset_size=0.25,
        random_state=0,
    ):
        self.n_components = n_components
        self.n_neighbors = n_neighbors
        self.coder = coder
        self.n_atoms = n_atoms
        self.n_levels = n_levels
        self.n_rounds = n_rounds
        self.subset_size = subset_size
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        codes = self._fit_coder(X)
        self.graph_ = sparse_code_graph(codes, self.n_neighbors)
        self.embedding_ = lpp(X, self.graph_, self.n_components)
        self.components_ = self.embedding_.V.T
        self.n_features_in_ = X.shape[1]
        return self


class SparseCodeLDE(ClassifierMixin, _SparseCodeEmbedding):
    """Supervised LDE on sparse-code graphs, with a nearest-neighbor classifier.

    Parameters
    ----------
    n_components : int, default=2
    n_neighbors : int, default=5
        Within-class neighbors per sample.
    n_neighbors_between : int, default=5
        Between-class neighbors per sample.
    k : int, default=1
        Neighbors consulted by :meth:`predict`.
    coder, n_atoms, n_levels, n_rounds, subset_size, random_state
        As in :class:`SparseCodeLPP`.
    """

    def __init__(
        self,
        n_components=2,
        *,
        n_neighbors=5,
        n_neighbors_between=5,
        k=1,
        coder="mld",
        n_atoms=8,
        n_levels=4,
        n_rounds=10,
        subset_size=0.25,
        random_state=0,
    ):
        self.n_components = n_components
        self.n_neighbors = n_neighbors
        self.n_neighbors_between = n_neighbors_between
        self.k = k
        self.coder = coder
        self.n_atoms = n_atoms
        self.n_levels = n_levels
        self.n_rounds = n_rounds
        self.subset_size = subset_size
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        codes = self._fit_coder(X)
        self.W_, self.W_between_ = lde_affinities(codes, y, self.n_neighbors, self.n_neighbors_between)
        self.embedding_ = lde(X, self.W_, self.W_between_, self.n_components)
        self.components_ = self.embedding_.V.T
        self.train_embedding_ = self.embedding_.transform(X)
        self.train_labels_ = y
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        return knn_classify(self.train_embedding_, self.train_labels_, self.transform(X), self.k)


def split_per_class(labels, per_class, seed=0):
    """Indices of ``per_class`` random training samples per class, and the rest.

    Classes with too few samples contribute all but one sample to training.
    """
    labels = np.asarray(labels)
    rng = make_rng(seed)
    train = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        n = min(per_class, max(idx.size - 1, 1))
        train.extend(rng.choice(idx, size=n, replace=False).tolist())
    train = np.sort(np.array(train, dtype=np.int64))
    test = np.setdiff1d(np.arange(labels.size), train)
    return train, test


def classification_experiment(
    X,
    labels,
    train_per_class,
    methods=("raw", "lpp-mld", "lde-mld", "lde-rmld"),
    seed=0,
    n_components=2,
    n_neighbors=5,
    n_neighbors_between=5,
    n_atoms=8,
    n_levels=4,
    n_rounds=10,
    subset_size=0.25,
    return_embeddings=False,
):
    """1-NN accuracy of several embeddings for growing training sets.

    Methods are ``"raw"`` (no embedding), ``"random"`` (Gaussian random
    projection), ``"lpp-<coder>"`` and ``"lde-<coder>"`` where ``<coder>`` is
    ``mld`` or ``rmld``.

    Returns
    -------
    rows : list of dict
        Keys ``train_per_class, method, accuracy``.
    embeddings : dict, only if ``return_embeddings``
        Method name to the ``Embedding`` fitted for the last training size.
    """
    X = check_array(X, dtype=np.float64)
    labels = np.asarray(labels)
    rows = []
    embeddings = {}
    for n in train_per_class:
        tr, te = split_per_class(labels, n, int(make_rng(seed, n).integers(2**63)))
        Xtr, ytr, Xte, yte = X[tr], labels[tr], X[te], labels[te]
        for method in methods:
            common = dict(
                n_atoms=n_atoms,
                n_levels=n_levels,
                n_rounds=n_rounds,
                subset_size=subset_size,
                random_state=seed,
            )
            if method == "raw":
                pred = knn_classify(Xtr, ytr, Xte)
            elif method == "random":
                V = make_rng(seed, n, 1).standard_normal((X.shape[1], n_components))
                pred = knn_classify(Xtr @ V, ytr, Xte @ V)
            elif method.startswith("lpp-"):
                est = SparseCodeLPP(n_components, n_neighbors=n_neighbors, coder=method[4:], **common)
                est.fit(Xtr)
                pred = knn_classify(est.transform(Xtr), ytr, est.transform(Xte))
                embeddings[method] = est.embedding_
            elif method.startswith("lde-"):
                est = SparseCodeLDE(
                    n_components,
                    n_neighbors=n_neighbors,
                    n_neighbors_between=n_neighbors_between,
                    coder=method[4:],
                    **common,
                )
                pred = est.fit(Xtr, ytr).predict(Xte)
                embeddings[method] = est.embedding_
            else:
                raise ValueError(f"unknown method {method!r}")
            acc = float(np.mean(pred == yte)) if yte.size else float("nan")
            rows.append({"train_per_class": n, "method": method, "accuracy": acc})
    return (rows, embeddings) if return_embeddings else rows

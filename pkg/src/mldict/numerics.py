"""Dense numerical kernels shared by the rest of the package.

Conventions
-----------
Inside Python every data matrix is laid out sklearn style, one sample per
row, shape ``(n_samples, n_features)``. The on-disk ``MLDMAT1`` format
stores the transposed, column-per-sample matrix (see :mod:`mldict.io`).
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .exceptions import DimensionMismatch, NotPositiveDefinite, ZeroMatrix

POWER_MAX_ITERS = 100
POWER_TOL = 1e-10
_SIGN_EPS = 1e-12


def make_rng(seed, *keys) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` and an optional spawn key.

    Distinct ``keys`` give statistically independent streams, which lets
    nested loops (level, round, ...) draw from reproducible sub-streams.
    Passing an existing ``Generator`` returns it unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = 0
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def fix_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so that its first non-negligible entry is positive."""
    v = np.asarray(v, dtype=np.float64)
    scale = np.max(np.abs(v)) if v.size else 0.0
    if scale == 0.0:
        return v
    idx = np.flatnonzero(np.abs(v) > _SIGN_EPS * scale)[0]
    return -v if v[idx] < 0 else v


def normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ZeroMatrix("cannot normalize a zero vector")
    return v / n


def dominant_left_singular_vector(
    Y: np.ndarray,
    init: np.ndarray | None = None,
    max_iters: int = POWER_MAX_ITERS,
    tol: float = POWER_TOL,
) -> np.ndarray:
    """Dominant left singular vector of a set of samples by power iteration.

    Parameters
    ----------
    Y : ndarray of shape (n_samples, n_features)
        Samples as rows. The returned vector lives in feature space, i.e. it
        is the dominant left singular vector of ``Y.T``.
    init : ndarray of shape (n_features,), optional
        Unit-norm starting vector. Defaults to the normalized sample with
        the largest norm.
    max_iters, tol
        The iteration ``psi <- Y^T Y psi / ||Y^T Y psi||`` stops once two
        successive iterates are closer than ``tol`` or after ``max_iters``.

    Returns
    -------
    psi : ndarray of shape (n_features,)
        Unit-norm vector whose first non-negligible entry is positive. When
        the top singular value is repeated the result depends on ``init``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if Y.shape[0] == 0:
        raise DimensionMismatch("power iteration needs at least one sample")
    if tol <= 0:
        raise ValueError("tol must be positive")
    norms = np.einsum("ij,ij->i", Y, Y)
    if not np.any(norms > 0):
        raise ZeroMatrix("all samples are zero")
    fallback = Y[int(np.argmax(norms))] / math.sqrt(norms.max())
    psi = fallback if init is None else np.asarray(init, dtype=np.float64)
    if psi.shape != (Y.shape[1],):
        raise DimensionMismatch("init has the wrong dimension")

    for _ in range(max_iters):
        w = Y.T @ (Y @ psi)
        wn = np.linalg.norm(w)
        if wn == 0.0:
            # init orthogonal to every sample: restart from the data
            psi = fallback
            continue
        new = w / wn
        done = np.linalg.norm(new - psi) < tol
        psi = new
        if done:
            break
    return fix_sign(psi)


def generalized_symmetric_eig(A, B, d: int, which: str = "smallest"):
    """Extremal eigenpairs of the symmetric-definite pencil ``A v = l B v``.

    Parameters
    ----------
    A : ndarray of shape (n, n), symmetric
    B : ndarray of shape (n, n), symmetric positive definite
    d : int
        Number of eigenpairs to return.
    which : {"smallest", "largest"}

    Returns
    -------
    eigenvalues : ndarray of shape (d,)
        Ascending for ``"smallest"``, descending for ``"largest"``.
    eigenvectors : ndarray of shape (n, d)
        B-orthonormal columns, ``V.T @ B @ V = I``.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise DimensionMismatch(f"A {A.shape} and B {B.shape} must be square and equal")
    n = A.shape[0]
    if not 1 <= d <= n:
        raise DimensionMismatch(f"d={d} must lie in [1, {n}]")
    if which not in ("smallest", "largest"):
        raise ValueError(f"unknown which={which!r}")
    A = 0.5 * (A + A.T)
    B = 0.5 * (B + B.T)
    try:
        np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("B is not positive definite") from exc
    lo, hi = (0, d - 1) if which == "smallest" else (n - d, n - 1)
    vals, vecs = scipy.linalg.eigh(A, B, subset_by_index=[lo, hi])
    if which == "largest":
        vals, vecs = vals[::-1], vecs[:, ::-1]
    vecs = np.column_stack([fix_sign(v) for v in vecs.T])
    return vals, vecs


def psnr(reference, estimate, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical inputs."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise DimensionMismatch(f"shapes differ: {reference.shape} vs {estimate.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((reference - estimate) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)

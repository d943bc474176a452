"""Independent reference implementations used only by the tests.

None of these share code with the package; they favor plain loops and
exhaustive search over speed.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def jacobi_eigh(S, sweeps=100, tol=1e-15):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations."""
    A = np.array(S, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(sweeps):
        off = math.sqrt(sum(A[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * max(1.0, np.abs(A).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
                V = V @ J
    vals = np.diag(A).copy()
    order = np.argsort(vals)
    return vals[order], V[:, order]


def cholesky_lower(B):
    B = np.asarray(B, dtype=np.float64)
    n = B.shape[0]
    L = np.zeros_like(B)
    for i in range(n):
        for j in range(i + 1):
            s = B[i, j] - sum(L[i, k] * L[j, k] for k in range(j))
            L[i, j] = math.sqrt(s) if i == j else s / L[j, j]
    return L


def forward_solve(L, b):
    n = L.shape[0]
    x = np.zeros_like(b, dtype=np.float64)
    for i in range(n):
        x[i] = (b[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x


def generalized_eig_oracle(A, B):
    """All eigenpairs of ``A v = lam B v`` via ``B = L L^T`` and Jacobi (ascending)."""
    L = cholesky_lower(B)
    n = A.shape[0]
    Linv = np.column_stack([forward_solve(L, e) for e in np.eye(n)])
    C = Linv @ A @ Linv.T
    vals, U = jacobi_eigh((C + C.T) / 2)
    V = Linv.T @ U
    return vals, V


def hyperline_distortion(data, atoms):
    corr = data @ atoms.T
    return float(np.sum(data * data) - np.sum(np.max(corr * corr, axis=1)))


def hyperline_oracle(data, K, restarts=200, seed=12345, iters=200):
    """Best distortion over many random-start Lloyd runs with exact eigensolves."""
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(restarts):
        atoms = rng.standard_normal((K, data.shape[1]))
        atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
        prev = None
        for _ in range(iters):
            lab = np.argmax(np.abs(data @ atoms.T), axis=1)
            if prev is not None and np.array_equal(lab, prev):
                break
            prev = lab
            for j in range(K):
                members = data[lab == j]
                if len(members):
                    w, U = np.linalg.eigh(members.T @ members)
                    atoms[j] = U[:, -1]
        best = min(best, hyperline_distortion(data, atoms))
    return best


def brute_dictionary_difference(levels_a, levels_b):
    """Minimum Frobenius distance by enumerating every permutation and sign pattern."""
    total = 0.0
    for A, B in zip(levels_a, levels_b):
        K = A.shape[0]
        best = math.inf
        for perm in itertools.permutations(range(K)):
            for signs in itertools.product((1.0, -1.0), repeat=K):
                val = sum(
                    float(np.sum((A[j] - signs[j] * B[perm[j]]) ** 2)) for j in range(K)
                )
                best = min(best, val)
        total += best
    return math.sqrt(total)


def brute_graph(codes, tau, allowed=None):
    """|A A^T| with per-row top-tau (lowest index on ties) and max-symmetrization."""
    T = codes.shape[0]
    S = [[abs(float(np.dot(codes[i], codes[j]))) for j in range(T)] for i in range(T)]
    W = np.zeros((T, T))
    for i in range(T):
        cands = [j for j in range(T) if j != i and (allowed is None or allowed(i, j))]
        cands.sort(key=lambda j: (-S[i][j], j))
        for j in cands[:tau]:
            W[i, j] = S[i][j]
    for i in range(T):
        for j in range(T):
            W[i, j] = W[j, i] = max(W[i, j], W[j, i])
    return W


def brute_nearest(train, labels, query):
    out = []
    for q in query:
        best, lab = math.inf, None
        for x, y in zip(train, labels):
            d = sum((a - b) ** 2 for a, b in zip(q, x))
            if d < best:
                best, lab = d, y
        out.append(lab)
    return np.array(out)


def brute_argmax(r, atoms):
    best, idx = -1.0, 0
    for j, a in enumerate(atoms):
        c = abs(float(sum(x * y for x, y in zip(r, a))))
        if c > best:
            best, idx = c, j
    return idx


def mdl_formula(err, T, M, K, sigma2):
    return (
        err / (2 * sigma2)
        + T / 2 * math.log(M * T)
        + T * math.log(T * K)
        + K * M / 2 * math.log(M * T)
    )

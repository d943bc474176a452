"""Desk-scale versions of the stability, generalization and compressed recovery studies.

Every experiment is driven by one integer seed; sub-streams are spawned
per (size, trial, ...) so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .datasets import GrayImage, extract_patches, reassemble
from .exceptions import DimensionMismatch, ShapeMismatch
from .khyperline import ClusteringConfig
from .mld import RobustMultilevelDictionary, train, train_robust
from .numerics import make_rng, psnr
from .pursuit import (
    EnsembleCode,
    SparseCode,
    correlate_and_max,
    mulp_encode,
    reconstruct,
    rmld_encode,
)

DEGENERATE_NORM = 1e-12
# projected atoms this close to unit norm are left untouched
_UNIT_SLACK = 4 * np.finfo(np.float64).eps


@dataclass(frozen=True)
class MeasurementEnsemble:
    """Random projection ``phi`` (N x M) plus an optional measurement SNR in dB."""

    phi: np.ndarray
    noise_snr_db: float | None = None
    seed: int = 0

    @classmethod
    def gaussian(cls, N, M, seed=0, snr_db=None):
        phi = make_rng(seed, 0).standard_normal((N, M))
        return cls(phi, snr_db, seed)

    @classmethod
    def identity(cls, M, seed=0, snr_db=None):
        return cls(np.eye(M), snr_db, seed)

    @property
    def n_measurements(self) -> int:
        return self.phi.shape[0]

    def measure(self, Y):
        """Project rows of ``Y`` and add white noise at the requested SNR.

        The noise variance is set from the mean power of all projected
        entries, i.e. one noise level for the whole batch.
        """
        X = Y @ self.phi.T
        if self.noise_snr_db is None:
            return X
        power = float(np.mean(X * X))
        sigma = math.sqrt(power / 10.0 ** (self.noise_snr_db / 10.0))
        return X + sigma * make_rng(self.seed, 1).standard_normal(X.shape)


@dataclass(frozen=True)
class DictionaryDifference:
    value: float
    permutations: tuple  # per level: pi with psi_j ~ s_j * lambda_{pi(j)}
    signs: tuple


def _level_pairs(first, second):
    if first.n_levels != second.n_levels or first.n_features != second.n_features:
        raise ShapeMismatch("dictionaries differ in levels or dimension")
    if first.per_level_K != second.per_level_K:
        raise ShapeMismatch("dictionaries differ in atoms per level")
    return zip(first.levels, second.levels)


def dictionary_difference(first, second) -> DictionaryDifference:
    """Minimum Frobenius distance over column permutations and sign flips.

    Each level is matched independently with an exact assignment solver on
    the cost ``2 - 2 |psi_j . lambda_l|``.
    """
    total = 0.0
    perms, signs = [], []
    for A, B in _level_pairs(first, second):
        G = A @ B.T
        cost = 2.0 - 2.0 * np.abs(G)
        _, perm = linear_sum_assignment(cost)
        s = np.where(G[np.arange(len(perm)), perm] < 0, -1.0, 1.0)
        diff = A - s[:, None] * B[perm]
        total += float(np.sum(diff * diff))
        perms.append(perm)
        signs.append(s)
    return DictionaryDifference(math.sqrt(total), tuple(perms), tuple(signs))


def stability_experiment(
    T_values,
    replace_counts,
    source,
    trials=10,
    seed=0,
    n_atoms=8,
    n_levels=4,
    cfg: ClusteringConfig | None = None,
):
    """Dictionary drift when ``n`` training samples are swapped for fresh ones.

    Parameters
    ----------
    T_values : sequence of int
    replace_counts : sequence of int
        Counts larger than a given ``T`` are skipped for that ``T``.
    source : object with ``draw(n, rng) -> ndarray (n, M)``
    trials : int
    seed : int

    Returns
    -------
    rows : list of dict
        Keys ``T, replace_count, trial, difference``.
    """
    cfg = cfg or ClusteringConfig(K=1)
    rows = []
    for T in T_values:
        for trial in range(trials):
            rng = make_rng(seed, T, trial)
            base = source.draw(T, rng)
            fit_cfg = cfg.with_(seed=int(make_rng(seed, T, trial, 1).integers(2**63)))
            d1, _, _ = train(base, n_atoms, n_levels, 0.0, fit_cfg)
            for n in replace_counts:
                if n > T:
                    continue
                rrng = make_rng(seed, T, trial, 2, n)
                other = base.copy()
                if n:
                    swap = rrng.choice(T, size=n, replace=False)
                    other[swap] = source.draw(n, rrng)
                d2, _, _ = train(other, n_atoms, n_levels, 0.0, fit_cfg)
                rows.append(
                    {
                        "T": T,
                        "replace_count": n,
                        "trial": trial,
                        "difference": dictionary_difference(d1, d2).value,
                    }
                )
    return rows


def mean_by(rows, keys, value):
    """Average ``value`` over rows sharing the same ``keys`` tuple."""
    acc = {}
    for r in rows:
        acc.setdefault(tuple(r[k] for k in keys), []).append(r[value])
    return {k: float(np.mean(v)) for k, v in acc.items()}


def generalization_experiment(
    T_values,
    test_set,
    source,
    mld_params=None,
    rmld_params=None,
    seed=0,
    rounds_values=(),
):
    """Test-set error of MLD and RMLD dictionaries trained on growing sets.

    Parameters
    ----------
    T_values : sequence of int
    test_set : ndarray of shape (n_test, M)
    source : object with ``draw(n, rng)``
        Training draws; must be independent of ``test_set``.
    mld_params, rmld_params : dict, optional
        ``n_atoms``, ``n_levels`` and, for RMLD, ``rounds`` and
        ``subset_fraction``.
    rounds_values : sequence of int
        RMLD round counts swept at the largest ``T``.

    Returns
    -------
    dict with three row lists:
        ``"mse"`` (method, T, mse), ``"levels"`` (method, T, level, mse)
        and ``"rounds"`` (rounds, train_mse, test_mse).
    """
    mp = {"n_atoms": 8, "n_levels": 4, **(mld_params or {})}
    rp = {"n_atoms": 8, "n_levels": 4, "rounds": 10, "subset_fraction": 0.25, **(rmld_params or {})}
    test_set = np.asarray(test_set, dtype=np.float64)
    out = {"mse": [], "levels": [], "rounds": []}
    for T in T_values:
        X = source.draw(T, make_rng(seed, T))
        cfg = ClusteringConfig(K=1, seed=int(make_rng(seed, T, 1).integers(2**63)))
        mdict, _, _ = train(X, mp["n_atoms"], mp["n_levels"], 0.0, cfg)
        size = max(1, int(round(rp["subset_fraction"] * T)))
        rdict, _, _ = train_robust(X, rp["n_atoms"], rp["n_levels"], rp["rounds"], size, cfg)
        for method, d, enc in (("MLD", mdict, mulp_encode), ("RMLD", rdict, rmld_encode)):
            code = enc(test_set, d)
            out["mse"].append({"method": method, "T": T, "mse": float(np.mean(code.residual**2))})
            for lv in range(1, d.n_levels + 1):
                c = enc(test_set, d, lv)
                out["levels"].append(
                    {"method": method, "T": T, "level": lv, "mse": float(np.mean(c.residual**2))}
                )
    if rounds_values:
        T = max(T_values)
        X = source.draw(T, make_rng(seed, T))
        cfg = ClusteringConfig(K=1, seed=int(make_rng(seed, T, 1).integers(2**63)))
        size = max(1, int(round(rp["subset_fraction"] * T)))
        for D in rounds_values:
            rdict, codes, _ = train_robust(X, rp["n_atoms"], rp["n_levels"], D, size, cfg)
            test_code = rmld_encode(test_set, rdict)
            out["rounds"].append(
                {
                    "rounds": D,
                    "train_mse": float(np.mean(codes.residual**2)),
                    "test_mse": float(np.mean(test_code.residual**2)),
                }
            )
    return out


def _project_atoms(atoms, phi):
    P = atoms @ phi.T
    norms = np.linalg.norm(P, axis=1)
    degenerate = norms < DEGENERATE_NORM
    scale = np.where(np.abs(norms - 1.0) <= _UNIT_SLACK, 1.0, norms)
    scale = np.where(degenerate, 1.0, scale)
    return P / scale[:, None], scale, degenerate


def _pursue_projected(X, dictionary, phi, levels):
    """Correlate-and-max in the measurement domain, coefficients mapped back.

    Returned codes index the original atoms, so :func:`reconstruct` with the
    original dictionary synthesizes the estimate in signal space.
    """
    ensemble = isinstance(dictionary, RobustMultilevelDictionary)
    L = dictionary.n_levels if levels is None else levels
    if not 0 <= L <= dictionary.n_levels:
        raise DimensionMismatch(f"levels={levels} outside [0, {dictionary.n_levels}]")
    R = np.array(X, dtype=np.float64)
    n = R.shape[0]
    if ensemble:
        D = dictionary.rounds
        indices = np.zeros((n, L, D), dtype=np.int64)
        coefs = np.zeros((n, L, D))
    else:
        indices = np.zeros((n, L), dtype=np.int64)
        coefs = np.zeros((n, L))
    for l in range(L):
        subs = dictionary.levels[l] if ensemble else (dictionary.levels[l],)
        approx = None
        for d, atoms in enumerate(subs):
            P, scale, bad = _project_atoms(atoms, phi)
            idx, c = correlate_and_max(R, P, bad)
            part = c[:, None] * P[idx]
            approx = part if approx is None else approx + part
            if ensemble:
                indices[:, l, d] = idx
                coefs[:, l, d] = c / scale[idx]
            else:
                indices[:, l] = idx
                coefs[:, l] = c / scale[idx]
        R -= approx / len(subs)
    M = dictionary.n_features
    # the signal-domain residual is unknown; codes carry a zero placeholder
    if ensemble:
        return EnsembleCode(indices, coefs, np.zeros((n, M)))
    return SparseCode(indices, coefs, np.zeros((n, M)))


@dataclass(frozen=True)
class RecoveryResult:
    image: GrayImage
    psnr: float
    measurements: np.ndarray


def compressed_recovery(
    image: GrayImage,
    dictionary,
    ensemble: MeasurementEnsemble,
    levels=None,
    side=None,
) -> RecoveryResult:
    """Recover an image from random projections of its non-overlapping patches.

    Patches are mean-removed, measured as ``x = phi y + noise`` and decoded
    with multilevel pursuit against the projected, renormalized atoms (one
    ensemble average per level for robust dictionaries). Stored patch means
    are added back before comparing with the original.
    """
    M = dictionary.n_features
    side = side or int(round(math.sqrt(M)))
    if side * side != M:
        raise DimensionMismatch(f"dictionary dimension {M} is not a square patch size")
    if ensemble.phi.shape[1] != M:
        raise DimensionMismatch(f"phi has {ensemble.phi.shape[1]} columns, dictionary M={M}")
    if ensemble.phi.shape[0] > M:
        raise DimensionMismatch("more measurements than signal dimensions")
    patches = extract_patches(image, side, side, subtract_mean=True)
    X = ensemble.measure(patches.patches)
    code = _pursue_projected(X, dictionary, ensemble.phi, levels)
    used = dictionary.truncate(code.levels_used)
    est = reassemble(patches.with_patches(reconstruct(code, used)), image.width, image.height, image.peak)
    return RecoveryResult(est, psnr(image.pixels, est.pixels, image.peak), X)


def encode_image(image: GrayImage, dictionary, levels=None, side=None) -> RecoveryResult:
    """Plain (unprojected) patchwise encoding of an image, for reference PSNRs."""
    M = dictionary.n_features
    side = side or int(round(math.sqrt(M)))
    patches = extract_patches(image, side, side, subtract_mean=True)
    enc = rmld_encode if isinstance(dictionary, RobustMultilevelDictionary) else mulp_encode
    code = enc(patches.patches, dictionary, levels)
    used = dictionary.truncate(code.levels_used)
    est = reassemble(patches.with_patches(reconstruct(code, used)), image.width, image.height, image.peak)
    return RecoveryResult(est, psnr(image.pixels, est.pixels, image.peak), patches.patches)


"""Multilevel pursuit: one correlate-and-max step per dictionary level.

Encoders accept a single vector of shape ``(M,)`` or a batch of shape
``(n_samples, M)``; the returned code arrays carry the same leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DictMismatch, DimensionMismatch


@dataclass(frozen=True)
class SparseCode:
    """One atom per level for each encoded vector.

    ``indices`` and ``coefficients`` have shape ``(..., levels_used)``;
    ``residual`` has shape ``(..., M)``.
    """

    indices: np.ndarray
    coefficients: np.ndarray
    residual: np.ndarray

    @property
    def levels_used(self) -> int:
        return self.indices.shape[-1]

    def __len__(self):
        return 1 if self.residual.ndim == 1 else self.residual.shape[0]


@dataclass(frozen=True)
class EnsembleCode:
    """Codes against a robust dictionary: ``D`` picks per level.

    ``indices`` and ``coefficients`` have shape ``(..., levels_used, D)``.
    """

    indices: np.ndarray
    coefficients: np.ndarray
    residual: np.ndarray

    @property
    def levels_used(self) -> int:
        return self.indices.shape[-2]

    @property
    def rounds(self) -> int:
        return self.indices.shape[-1]

    def __len__(self):
        return 1 if self.residual.ndim == 1 else self.residual.shape[0]


class OpCounter:
    """Tally of multiply-adds spent by an encoder (for complexity probes)."""

    def __init__(self):
        self.multiply_adds = 0

    def add(self, n):
        self.multiply_adds += int(n)


def correlate_and_max(R, atoms, excluded=None):
    """Pick the atom of largest absolute correlation for every row of ``R``.

    Rows of ``atoms`` flagged in ``excluded`` are never chosen while any
    other atom is available. Ties go to the lowest index.
    """
    corr = R @ atoms.T
    score = np.abs(corr)
    if excluded is not None and np.any(excluded):
        score[:, excluded] = -1.0
    idx = np.argmax(score, axis=1)
    coef = corr[np.arange(R.shape[0]), idx]
    if excluded is not None:
        coef = np.where(excluded[idx], 0.0, coef)
    return idx, coef


def _as_batch(y, M):
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    Y = y[None, :] if single else y
    if Y.ndim != 2 or Y.shape[1] != M:
        raise DimensionMismatch(f"expected vectors of length {M}, got shape {y.shape}")
    return Y, single


def _level_count(levels, available):
    if levels is None:
        return available
    if not 0 <= levels <= available:
        raise DimensionMismatch(f"levels={levels} outside [0, {available}]")
    return levels


def mulp_encode(y, dictionary, levels=None, counter: OpCounter | None = None) -> SparseCode:
    """Encode ``y`` with one correlate-and-max step per level.

    Parameters
    ----------
    y : ndarray of shape (M,) or (n_samples, M)
    dictionary : MultilevelDictionary
    levels : int, optional
        Number of leading levels to use; all by default.
    counter : OpCounter, optional
        Receives the number of multiply-adds performed.
    """
    M = dictionary.n_features
    Y, single = _as_batch(y, M)
    L = _level_count(levels, dictionary.n_levels)
    R = Y.copy()
    n = R.shape[0]
    rows = np.arange(n)
    indices = np.zeros((n, L), dtype=np.int64)
    coefs = np.zeros((n, L))
    for l in range(L):
        atoms = dictionary.levels[l]
        idx, coef = correlate_and_max(R, atoms)
        R -= coef[:, None] * atoms[idx]
        indices[rows, l] = idx
        coefs[rows, l] = coef
        if counter is not None:
            counter.add(n * M * (atoms.shape[0] + 1))
    if single:
        return SparseCode(indices[0], coefs[0], R[0])
    return SparseCode(indices, coefs, R)


def rmld_encode(y, rdict, levels=None, counter: OpCounter | None = None) -> EnsembleCode:
    """Encode against a robust dictionary by averaging ``D`` picks per level.

    The residual passed to the next level is taken against the ensemble
    average, so the stored residual plus :func:`reconstruct` reproduces the
    input exactly, but residuals are not orthogonal to the approximation.
    """
    M = rdict.n_features
    Y, single = _as_batch(y, M)
    L = _level_count(levels, rdict.n_levels)
    D = rdict.rounds
    R = Y.copy()
    n = R.shape[0]
    indices = np.zeros((n, L, D), dtype=np.int64)
    coefs = np.zeros((n, L, D))
    for l in range(L):
        approx = None
        for d, atoms in enumerate(rdict.levels[l]):
            idx, coef = correlate_and_max(R, atoms)
            part = coef[:, None] * atoms[idx]
            approx = part if approx is None else approx + part
            indices[:, l, d] = idx
            coefs[:, l, d] = coef
            if counter is not None:
                counter.add(n * M * (atoms.shape[0] + 1))
        R -= approx / D
    if single:
        return EnsembleCode(indices[0], coefs[0], R[0])
    return EnsembleCode(indices, coefs, R)


def reconstruct(code, dictionary) -> np.ndarray:
    """Synthesize the approximation encoded in ``code`` (residual excluded)."""
    if isinstance(code, EnsembleCode):
        levels = getattr(dictionary, "rounds", None)
        if levels is None or code.rounds != dictionary.rounds:
            raise DictMismatch("ensemble code needs a robust dictionary with matching rounds")
    elif getattr(dictionary, "rounds", None) is not None:
        raise DictMismatch("plain code cannot be decoded with a robust dictionary")
    if code.levels_used > dictionary.n_levels:
        raise DictMismatch(
            f"code uses {code.levels_used} levels, dictionary has {dictionary.n_levels}"
        )
    M = dictionary.n_features
    if code.residual.shape[-1] != M:
        raise DictMismatch(f"code dimension {code.residual.shape[-1]} != dictionary {M}")
    single = code.residual.ndim == 1
    idx = code.indices[None] if single else code.indices
    coef = code.coefficients[None] if single else code.coefficients
    out = np.zeros((idx.shape[0], M))
    for l in range(code.levels_used):
        if isinstance(code, EnsembleCode):
            approx = None
            for d, atoms in enumerate(dictionary.levels[l]):
                part = coef[:, l, d, None] * atoms[idx[:, l, d]]
                approx = part if approx is None else approx + part
            out += approx / code.rounds
        else:
            atoms = dictionary.levels[l]
            out += coef[:, l, None] * atoms[idx[:, l]]
    return out[0] if single else out


def stacked_coefficients(code, dictionary) -> np.ndarray:
    """Dense coefficient matrix with one column per atom of the dictionary.

    Levels are stacked in order, giving ``sum(K_l)`` columns (times ``D`` for
    ensemble codes, each coefficient divided by ``D``).
    """
    single = code.residual.ndim == 1
    idx = code.indices[None] if single else code.indices
    coef = code.coefficients[None] if single else code.coefficients
    n = idx.shape[0]
    rows = np.arange(n)
    blocks = []
    for l in range(code.levels_used):
        if isinstance(code, EnsembleCode):
            for d, atoms in enumerate(dictionary.levels[l]):
                block = np.zeros((n, atoms.shape[0]))
                np.add.at(block, (rows, idx[:, l, d]), coef[:, l, d] / code.rounds)
                blocks.append(block)
        else:
            block = np.zeros((n, dictionary.levels[l].shape[0]))
            block[rows, idx[:, l]] = coef[:, l]
            blocks.append(block)
    out = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return out[0] if single else out

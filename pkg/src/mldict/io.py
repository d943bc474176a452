"""Binary and text file formats.

``MLDMAT1``
    8-byte magic ``b"MLDMAT1\\0"``, rows and cols as little-endian uint64,
    then ``rows * cols`` little-endian float64 entries in column-major order.
    Data sets are stored one sample per column (``M x T``); the Python API
    works on the transpose.
``MLDDICT1``
    magic ``b"MLDDICT1"``, then uint64 ``M, L, flags, D, subset_size``,
    float64 error goal, ``L`` uint64 atom counts, then one ``MLDMAT1`` block
    (``M x K_l``, atoms as columns) per level, or ``D`` blocks per level when
    ``flags & 1`` marks a robust dictionary.
``MLDCODE1``
    magic ``b"MLDCODE1"``, uint64 ``n_samples, M, D``; per sample a uint64
    ``levels_used``, then ``levels_used * D`` records of (uint64 level,
    uint64 atom index, float64 coefficient), then ``M`` float64 residual
    entries. ``D = 1`` for plain codes.
PGM
    Binary ``P5`` with maxval <= 255.
"""

from __future__ import annotations

import csv
import io as _io
import struct
from pathlib import Path

import numpy as np

from .exceptions import FormatError
from .mld import MultilevelDictionary, RobustMultilevelDictionary
from .pursuit import EnsembleCode, SparseCode

MAT_MAGIC = b"MLDMAT1\0"
DICT_MAGIC = b"MLDDICT1"
CODE_MAGIC = b"MLDCODE1"
_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")
_RECORD = np.dtype([("level", "<u8"), ("index", "<u8"), ("coef", "<f8")])


def _read_exact(f, n):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"unexpected end of file (wanted {n} bytes, got {len(buf)})")
    return buf


def _u64(f):
    return _U64.unpack(_read_exact(f, 8))[0]


def _open(target, mode):
    if hasattr(target, "read" if "r" in mode else "write"):
        return target, False
    return open(target, mode), True


def write_matrix_stream(f, matrix) -> None:
    matrix = np.asarray(matrix, dtype="<f8")
    if matrix.ndim != 2:
        raise FormatError("MLDMAT1 holds 2-D matrices only")
    rows, cols = matrix.shape
    f.write(MAT_MAGIC + _U64.pack(rows) + _U64.pack(cols))
    f.write(np.asfortranarray(matrix).tobytes(order="F"))


def read_matrix_stream(f) -> np.ndarray:
    if _read_exact(f, 8) != MAT_MAGIC:
        raise FormatError("not an MLDMAT1 block")
    rows, cols = _u64(f), _u64(f)
    raw = _read_exact(f, 8 * rows * cols)
    return np.frombuffer(raw, dtype="<f8").reshape((rows, cols), order="F").astype(np.float64)


def write_matrix(target, matrix) -> None:
    """Write a 2-D array as an ``MLDMAT1`` file (or into a binary stream)."""
    f, close = _open(target, "wb")
    try:
        write_matrix_stream(f, matrix)
    finally:
        if close:
            f.close()


def read_matrix(source) -> np.ndarray:
    f, close = _open(source, "rb")
    try:
        return read_matrix_stream(f)
    finally:
        if close:
            f.close()


def write_samples(target, X) -> None:
    """Store samples given as rows ``(T, M)`` in the column-per-sample layout."""
    write_matrix(target, np.asarray(X).T)


def read_samples(source) -> np.ndarray:
    return read_matrix(source).T.copy()


def write_dictionary(target, dictionary) -> None:
    robust = isinstance(dictionary, RobustMultilevelDictionary)
    f, close = _open(target, "wb")
    try:
        f.write(DICT_MAGIC)
        f.write(_U64.pack(dictionary.n_features))
        f.write(_U64.pack(dictionary.n_levels))
        f.write(_U64.pack(1 if robust else 0))
        f.write(_U64.pack(dictionary.rounds if robust else 1))
        f.write(_U64.pack(dictionary.subset_size if robust else 0))
        f.write(_F64.pack(float(dictionary.error_goal)))
        for k in dictionary.per_level_K:
            f.write(_U64.pack(k))
        for level in dictionary.levels:
            blocks = level if robust else (level,)
            for atoms in blocks:
                write_matrix_stream(f, atoms.T)
    finally:
        if close:
            f.close()


def read_dictionary(source):
    """Read an ``MLDDICT1`` file into a plain or robust dictionary."""
    f, close = _open(source, "rb")
    try:
        if _read_exact(f, 8) != DICT_MAGIC:
            raise FormatError("not an MLDDICT1 file")
        M, L, flags, D, subset = (_u64(f) for _ in range(5))
        (eps,) = _F64.unpack(_read_exact(f, 8))
        Ks = [_u64(f) for _ in range(L)]
        robust = bool(flags & 1)
        levels = []
        for K in Ks:
            blocks = []
            for _ in range(D if robust else 1):
                atoms = read_matrix_stream(f).T.copy()
                if atoms.shape != (K, M):
                    raise FormatError(f"atom block {atoms.shape} disagrees with header ({K}, {M})")
                blocks.append(atoms)
            levels.append(tuple(blocks) if robust else blocks[0])
    finally:
        if close:
            f.close()
    if robust:
        return RobustMultilevelDictionary(tuple(levels), int(subset), eps)
    return MultilevelDictionary(tuple(levels), eps)


def write_codes(target, code) -> None:
    ensemble = isinstance(code, EnsembleCode)
    idx = code.indices
    coef = code.coefficients
    res = code.residual
    if res.ndim == 1:
        idx, coef, res = idx[None], coef[None], res[None]
    if not ensemble:
        idx, coef = idx[..., None], coef[..., None]
    n, L, D = idx.shape
    M = res.shape[1]
    f, close = _open(target, "wb")
    try:
        f.write(CODE_MAGIC + _U64.pack(n) + _U64.pack(M) + _U64.pack(D))
        rec = np.empty(L * D, dtype=_RECORD)
        rec["level"] = np.repeat(np.arange(L), D)
        for i in range(n):
            f.write(_U64.pack(L))
            rec["index"] = idx[i].reshape(-1)
            rec["coef"] = coef[i].reshape(-1)
            f.write(rec.tobytes())
            f.write(np.asarray(res[i], dtype="<f8").tobytes())
    finally:
        if close:
            f.close()


def read_codes(source, ensemble=None):
    """Read an ``MLDCODE1`` file as a batch :class:`SparseCode` or :class:`EnsembleCode`.

    ``D = 1`` files are ambiguous; they load as plain codes unless
    ``ensemble=True``.
    """
    f, close = _open(source, "rb")
    try:
        if _read_exact(f, 8) != CODE_MAGIC:
            raise FormatError("not an MLDCODE1 file")
        n, M, D = _u64(f), _u64(f), _u64(f)
        idx_rows, coef_rows, res_rows = [], [], []
        for _ in range(n):
            L = _u64(f)
            rec = np.frombuffer(_read_exact(f, _RECORD.itemsize * L * D), dtype=_RECORD)
            if np.any(rec["level"] != np.repeat(np.arange(L), D)):
                raise FormatError("code records are not ordered by level")
            idx_rows.append(rec["index"].astype(np.int64).reshape(L, D))
            coef_rows.append(rec["coef"].astype(np.float64).reshape(L, D))
            res_rows.append(np.frombuffer(_read_exact(f, 8 * M), dtype="<f8").astype(np.float64))
    finally:
        if close:
            f.close()
    if len({r.shape for r in idx_rows}) > 1:
        raise FormatError("samples use different numbers of levels")
    if n == 0:
        idx = np.zeros((0, 0, D), dtype=np.int64)
        coef = np.zeros((0, 0, D))
        res = np.zeros((0, M))
    else:
        idx, coef, res = np.stack(idx_rows), np.stack(coef_rows), np.stack(res_rows)
    if ensemble is None:
        ensemble = D > 1
    if not ensemble:
        if D != 1:
            raise FormatError(f"file holds {D} picks per level; not a plain code")
        return SparseCode(idx[..., 0], coef[..., 0], res)
    return EnsembleCode(idx, coef, res)


def _pgm_tokens(buf):
    """Yield header tokens and the offset just past the last one consumed."""
    pos = 0
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
                pos += 1
            yield buf[start:pos], pos


def read_pgm(source) -> np.ndarray:
    """Read a binary (P5) 8-bit PGM image as a float64 ``(height, width)`` array."""
    f, close = _open(source, "rb")
    try:
        buf = f.read()
    finally:
        if close:
            f.close()
    tokens = _pgm_tokens(buf)
    try:
        magic, _ = next(tokens)
        if magic != b"P5":
            raise FormatError("only binary P5 PGM images are supported")
        width = int(next(tokens)[0])
        height = int(next(tokens)[0])
        maxval_tok, end = next(tokens)
        maxval = int(maxval_tok)
    except (StopIteration, ValueError) as exc:
        raise FormatError("malformed PGM header") from exc
    if not 0 < maxval <= 255:
        raise FormatError(f"unsupported PGM maxval {maxval}")
    data = buf[end + 1 : end + 1 + width * height]
    if len(data) != width * height:
        raise FormatError("truncated PGM pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width).astype(np.float64)


def write_pgm(target, pixels, maxval: int = 255) -> None:
    """Write an image as 8-bit P5; values are rounded and clipped to ``[0, maxval]``."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise FormatError("PGM images are 2-D")
    raw = np.clip(np.rint(pixels), 0, maxval).astype(np.uint8)
    height, width = raw.shape
    f, close = _open(target, "wb")
    try:
        f.write(b"P5\n%d %d\n%d\n" % (width, height, maxval))
        f.write(raw.tobytes())
    finally:
        if close:
            f.close()


def write_patch_metadata(target, origins, means) -> None:
    """One line per patch: ``image_id x y mean`` (mean printed round-trip exact)."""
    lines = [f"{img} {x} {y} {float(m)!r}\n" for (img, x, y), m in zip(origins, means)]
    Path(target).write_text("".join(lines))


def read_patch_metadata(source):
    origins, means = [], []
    for lineno, line in enumerate(Path(source).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise FormatError(f"line {lineno}: expected 'image_id x y mean'")
        origins.append((parts[0], int(parts[1]), int(parts[2])))
        means.append(float(parts[3]))
    return origins, np.asarray(means)


def read_labeled_csv(source):
    """Load ``(samples, labels)`` from a CSV with the class label in the last column.

    A first row whose feature fields are not numeric is taken as a header.
    Integer-like labels are returned as ints, anything else as strings.
    """
    text = Path(source).read_text() if not hasattr(source, "read") else source.read()
    rows = [r for r in csv.reader(_io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows:
        try:
            [float(c) for c in rows[0][:-1]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise FormatError("labeled CSV holds no samples")
    width = len(rows[0])
    if width < 2 or any(len(r) != width for r in rows):
        raise FormatError("every CSV row needs the same number (>= 2) of fields")
    try:
        X = np.array([[float(c) for c in r[:-1]] for r in rows])
    except ValueError as exc:
        raise FormatError(f"non-numeric feature value: {exc}") from exc
    raw = [r[-1].strip() for r in rows]
    try:
        labels = np.array([int(v) for v in raw])
    except ValueError:
        labels = np.array(raw)
    return X, labels


def write_labeled_csv(target, X, labels) -> None:
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh)
        for row, lab in zip(np.asarray(X), labels):
            w.writerow([repr(float(v)) for v in row] + [lab])

"""Grayscale images, patch extraction and synthetic planted-hyperline data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ImageTooSmall, IncompleteTiling
from .numerics import make_rng


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray  # (height, width)
    peak: float = 255.0
    name: str = "0"

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class PatchSet:
    """Vectorized square patches, one per row.

    Each patch is flattened column-major (down the first column of the
    patch, then the next). ``origins`` holds ``(image id, x, y)`` of the
    top-left corner and ``means`` the DC value removed from each patch.
    """

    side: int
    patches: np.ndarray
    means: np.ndarray
    origins: list = field(default_factory=list)

    def __len__(self):
        return self.patches.shape[0]

    def with_patches(self, patches) -> "PatchSet":
        return PatchSet(self.side, np.asarray(patches, dtype=np.float64), self.means, self.origins)


def load_image(path, name=None) -> GrayImage:
    from .io import read_pgm

    return GrayImage(read_pgm(path), 255.0, name if name is not None else str(path))


def extract_patches(
    img: GrayImage,
    side: int = 8,
    stride: int | None = None,
    subtract_mean: bool = True,
    seed=0,
    max_count: int | None = None,
) -> PatchSet:
    """Cut ``side x side`` patches in raster order.

    ``stride`` defaults to ``side`` (non-overlapping tiling). When
    ``max_count`` is smaller than the number of patches, a uniform random
    subset (kept in raster order) is returned.
    """
    stride = side if stride is None else stride
    if stride < 1 or side < 1:
        raise ValueError("side and stride must be >= 1")
    if side > min(img.width, img.height):
        raise ImageTooSmall(f"{side}x{side} patches do not fit a {img.width}x{img.height} image")
    ys = range(0, img.height - side + 1, stride)
    xs = range(0, img.width - side + 1, stride)
    origins = [(y, x) for y in ys for x in xs]
    if max_count is not None and max_count < len(origins):
        rng = make_rng(seed)
        keep = np.sort(rng.choice(len(origins), size=max_count, replace=False))
        origins = [origins[i] for i in keep]
    px = img.pixels
    patches = np.array([px[y : y + side, x : x + side].flatten(order="F") for y, x in origins])
    patches = patches.reshape(len(origins), side * side)
    if subtract_mean:
        means = patches.mean(axis=1)
        patches = patches - means[:, None]
    else:
        means = np.zeros(len(origins))
    return PatchSet(side, patches, means, [(img.name, x, y) for y, x in origins])


def reassemble(patches: PatchSet, width: int, height: int, peak: float = 255.0) -> GrayImage:
    """Place every patch back at its origin, restore its mean and clamp to ``[0, peak]``."""
    side = patches.side
    out = np.zeros((height, width))
    hits = np.zeros((height, width), dtype=np.int64)
    for vec, mean, (_, x, y) in zip(patches.patches, patches.means, patches.origins):
        if x < 0 or y < 0 or x + side > width or y + side > height:
            raise IncompleteTiling(f"patch at ({x}, {y}) falls outside the image")
        out[y : y + side, x : x + side] = vec.reshape(side, side, order="F") + mean
        hits[y : y + side, x : x + side] += 1
    if np.any(hits != 1):
        raise IncompleteTiling("patches must cover every pixel exactly once")
    return GrayImage(np.clip(out, 0.0, peak), peak)


def random_atoms(M, K, rng, zero_mean=False, max_coherence=None) -> np.ndarray:
    """``K`` random unit vectors in ``R^M``.

    ``zero_mean`` makes them orthogonal to the all-ones vector.
    ``max_coherence`` redraws until every pair satisfies
    ``|psi_i . psi_j| <= max_coherence``.
    """
    for _ in range(10_000):
        atoms = rng.standard_normal((K, M))
        if zero_mean:
            atoms -= atoms.mean(axis=1, keepdims=True)
        atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
        if max_coherence is None or K == 1:
            return atoms
        G = np.abs(atoms @ atoms.T)
        np.fill_diagonal(G, 0.0)
        if G.max() <= max_coherence:
            return atoms
    raise ValueError(f"could not draw {K} atoms in R^{M} with coherence <= {max_coherence}")


def synth_hyperlines(
    M: int,
    K_per_level,
    L: int,
    T: int,
    noise_sigma: float = 0.0,
    energy_decay: float = 0.5,
    seed=0,
    zero_mean: bool = False,
    max_coherence: float | None = None,
):
    """Samples drawn from a planted multilevel dictionary.

    Sample ``i`` is ``sum_l c_l * psi_{l, j_l(i)} + noise`` with a uniformly
    chosen atom per level and Gaussian coefficients whose variance at level
    ``l`` (0-based) is ``energy_decay ** l``. ``max_coherence`` bounds the
    pairwise coherence of the atoms within each level.

    Returns
    -------
    X : ndarray of shape (T, M)
    planted : list of ndarray
        The ground-truth atoms of each level, shape ``(K_l, M)``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    Ks = [int(K_per_level)] * L if np.isscalar(K_per_level) else [int(k) for k in K_per_level]
    if len(Ks) == 1:
        Ks = Ks * L
    rng = make_rng(seed)
    planted = [random_atoms(M, Ks[l], rng, zero_mean, max_coherence) for l in range(L)]
    X = np.zeros((T, M))
    for l, atoms in enumerate(planted):
        j = rng.integers(0, atoms.shape[0], size=T)
        c = rng.standard_normal(T) * np.sqrt(energy_decay**l)
        X += c[:, None] * atoms[j]
    if noise_sigma > 0:
        X += noise_sigma * rng.standard_normal((T, M))
    return X, planted


class PlantedSource:
    """Endless stream of samples from one fixed planted model.

    ``draw(n, rng)`` returns fresh i.i.d. samples; the planted atoms are
    fixed at construction.
    """

    def __init__(
        self,
        M=8,
        K_per_level=4,
        L=2,
        noise_sigma=0.05,
        energy_decay=0.25,
        seed=0,
        max_coherence=None,
    ):
        _, self.planted = synth_hyperlines(
            M, K_per_level, L, 1, 0.0, energy_decay, seed, max_coherence=max_coherence
        )
        self.M = M
        self.noise_sigma = noise_sigma
        self.energy_decay = energy_decay

    def draw(self, n, rng) -> np.ndarray:
        X = np.zeros((n, self.M))
        for l, atoms in enumerate(self.planted):
            j = rng.integers(0, atoms.shape[0], size=n)
            c = rng.standard_normal(n) * np.sqrt(self.energy_decay**l)
            X += c[:, None] * atoms[j]
        if self.noise_sigma > 0:
            X += self.noise_sigma * rng.standard_normal((n, self.M))
        return X


class PatchPoolSource:
    """Sampling with replacement from a fixed pool of patch vectors."""

    def __init__(self, patches):
        self.patches = np.asarray(patches, dtype=np.float64)
        self.M = self.patches.shape[1]

    def draw(self, n, rng) -> np.ndarray:
        return self.patches[rng.integers(0, self.patches.shape[0], size=n)]


def random_patches(images, count, side=8, seed=0, subtract_mean=True) -> PatchSet:
    """Patches at uniformly random origins across ``images`` (test-set builder)."""
    rng = make_rng(seed)
    rows, means, origins = [], [], []
    for _ in range(count):
        img = images[int(rng.integers(0, len(images)))]
        if side > min(img.width, img.height):
            raise ImageTooSmall(f"{side}x{side} patches do not fit image {img.name}")
        y = int(rng.integers(0, img.height - side + 1))
        x = int(rng.integers(0, img.width - side + 1))
        vec = img.pixels[y : y + side, x : x + side].flatten(order="F")
        m = vec.mean() if subtract_mean else 0.0
        rows.append(vec - m)
        means.append(m)
        origins.append((img.name, x, y))
    return PatchSet(side, np.array(rows).reshape(count, side * side), np.array(means), origins)


def planted_image(levels_atoms, width, height, side=8, seed=0, peak=255.0, decay=0.25):
    """Synthetic image whose mean-removed patches are exact sums of one atom per level.

    ``levels_atoms`` is a list of ``(K_l, side*side)`` zero-mean atom arrays.
    Patch means are drawn in the middle of the dynamic range and the
    coefficients are scaled so no pixel leaves ``[0, peak]``.
    """
    if width % side or height % side:
        raise IncompleteTiling("image size must be a multiple of the patch side")
    rng = make_rng(seed)
    out = np.zeros((height, width))
    for y in range(0, height, side):
        for x in range(0, width, side):
            vec = np.zeros(side * side)
            for l, atoms in enumerate(levels_atoms):
                j = rng.integers(0, atoms.shape[0])
                vec += rng.standard_normal() * np.sqrt(decay**l) * atoms[j]
            mean = rng.uniform(0.3 * peak, 0.7 * peak)
            room = min(mean, peak - mean)
            amp = np.max(np.abs(vec))
            if amp > 0:
                vec *= rng.uniform(0.3, 0.95) * room / amp
            out[y : y + side, x : x + side] = (vec + mean).reshape(side, side, order="F")
    return GrayImage(out, peak, "planted")


def make_two_class(M=5, T=100, seed=0, separation=3.0):
    """Two Gaussian classes in ``R^M`` that differ along a single direction.

    The class-mean offset is small relative to the large-variance nuisance
    directions, so an uninformed projection usually hides it.
    """
    rng = make_rng(seed)
    scales = np.linspace(4.0, 1.0, M)
    basis, _ = np.linalg.qr(rng.standard_normal((M, M)))
    labels = np.arange(T) % 2
    Z = rng.standard_normal((T, M)) * scales
    Z[:, M - 1] += np.where(labels == 1, separation / 2, -separation / 2)
    return Z @ basis.T, labels

"""Fully-connected graph construction from feature maps.

Affinity kernels, symmetrization, degree normalizations, the scaled
Laplacian, the criss-cross mask, and the (position, channel) flattening
used by the compact-generalized variant.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import linalg
from .errors import (
    AffinityOverflowError,
    DegenerateVertexError,
    KernelDomainError,
    PreconditionError,
    ShapeError,
)

KERNELS = ("dot", "exp_dot")
NORMALIZATIONS = ("none", "random_walk", "symmetric")

# exp_dot overflow guard: exponent after 1/sqrt(C_s) scaling
EXP_GUARD = 700.0


@dataclass
class FeatureMap:
    """A spatial signal: (H*W) x C matrix in row-major grid order."""

    height: int
    width: int
    channels: int
    values: np.ndarray

    def __post_init__(self):
        self.values = linalg.as_matrix(self.values)
        n = self.height * self.width
        if self.values.shape != (n, self.channels):
            raise ShapeError(
                f"feature map values {self.values.shape} do not match "
                f"H*W x C = ({n}, {self.channels})"
            )

    @property
    def n_positions(self) -> int:
        return self.height * self.width

    def to_grid(self) -> np.ndarray:
        return self.values.reshape(self.height, self.width, self.channels)

    @classmethod
    def from_grid(cls, grid: np.ndarray) -> "FeatureMap":
        h, w, c = grid.shape
        return cls(h, w, c, grid.reshape(h * w, c))


@dataclass
class AffinityMatrix:
    """Pairwise-similarity matrix with kernel / normalization provenance."""

    values: np.ndarray
    kernel: str
    normalization: str = "none"
    symmetrized: bool = False
    mask_applied: bool = False

    def __post_init__(self):
        self.values = linalg.as_matrix(self.values)
        if self.kernel not in KERNELS:
            raise PreconditionError(f"unknown kernel {self.kernel!r}")
        if self.normalization not in NORMALIZATIONS:
            raise PreconditionError(f"unknown normalization {self.normalization!r}")


def kernel_matrix(phi: np.ndarray, psi: np.ndarray, kernel: str) -> np.ndarray:
    """Raw pairwise-similarity matrix M over the rows of phi and psi.

    dot: M = phi psi^T. exp_dot: M = exp(phi psi^T / sqrt(C_s)), the
    scaling keeping the exponent bounded for unit-scale features.
    """
    phi = linalg.as_matrix(phi)
    psi = linalg.as_matrix(psi)
    if phi.shape != psi.shape:
        raise ShapeError(f"affinity: phi {phi.shape} vs psi {psi.shape}")
    s = linalg.matmul(phi, psi.T)
    if kernel == "dot":
        return s
    if kernel == "exp_dot":
        e = s / np.sqrt(phi.shape[1])
        m = float(np.max(e))
        if m > EXP_GUARD:
            raise AffinityOverflowError(
                f"exp_dot exponent {m:.3g} exceeds guard {EXP_GUARD:g}"
            )
        return np.exp(e)
    raise PreconditionError(f"unknown kernel {kernel!r}")


def compute_affinity(phi: np.ndarray, psi: np.ndarray, kernel: str) -> AffinityMatrix:
    """Unnormalized affinity matrix from two embedded feature maps."""
    return AffinityMatrix(values=kernel_matrix(phi, psi, kernel), kernel=kernel)


def symmetrize(m: AffinityMatrix) -> AffinityMatrix:
    """(M + M^T) / 2; output equals its own transpose bit-exactly."""
    v = m.values
    if v.shape[0] != v.shape[1]:
        raise ShapeError(f"symmetrize: matrix is not square ({v.shape})")
    if m.normalization != "none":
        raise PreconditionError("symmetrize expects an unnormalized affinity")
    return replace(m, values=0.5 * (v + v.T), symmetrized=True)


def degrees(m: AffinityMatrix) -> np.ndarray:
    """Row-sum degree vector; validates the normalization domain."""
    v = m.values
    if v.shape[0] != v.shape[1]:
        raise ShapeError(f"normalize: matrix is not square ({v.shape})")
    if float(np.min(v)) < 0.0:
        raise KernelDomainError(
            "affinity has negative entries; degree normalization needs a "
            "nonnegative kernel (use exp_dot)"
        )
    d = np.sum(v, axis=1)
    if float(np.min(d)) <= 1e-12:
        raise DegenerateVertexError(
            f"vertex degree {float(np.min(d)):.3g} is not strictly positive"
        )
    return d


def normalize(m: AffinityMatrix, mode: str) -> AffinityMatrix:
    """Degree-normalize an affinity matrix.

    random_walk: D^-1 M (rows sum to 1). symmetric: D^-1/2 M_hat D^-1/2
    of a symmetrized input; the result is exactly symmetric with spectrum
    inside [-1, 1].
    """
    d = degrees(m)
    if mode == "random_walk":
        return replace(m, values=m.values / d[:, None], normalization="random_walk")
    if mode == "symmetric":
        if not m.symmetrized:
            raise PreconditionError("symmetric normalization requires symmetrize()")
        s = 1.0 / np.sqrt(d)
        return replace(
            m, values=m.values * np.outer(s, s), normalization="symmetric"
        )
    raise PreconditionError(f"unknown normalization mode {mode!r}")


def scaled_laplacian(a: AffinityMatrix) -> np.ndarray:
    """Scaled Laplacian -A, using L = I - A and the lambda_max = 2 bound."""
    if a.normalization not in ("random_walk", "symmetric"):
        raise PreconditionError("scaled_laplacian requires a normalized affinity")
    return -a.values


def crisscross_mask(h: int, w: int) -> np.ndarray:
    """N x N binary mask: 1 iff two grid positions share a row or column."""
    if h < 1 or w < 1:
        raise ShapeError(f"crisscross_mask: invalid grid ({h}, {w})")
    rows = np.repeat(np.arange(h), w)
    cols = np.tile(np.arange(w), h)
    same_row = rows[:, None] == rows[None, :]
    same_col = cols[:, None] == cols[None, :]
    return (same_row | same_col).astype(np.float64)


def flatten_spatial_channel(z: np.ndarray) -> np.ndarray:
    """Column-major vectorization: entry (i + j*N) = Z[i, j], as a column."""
    z = linalg.as_matrix(z)
    return z.reshape(-1, 1, order="F")


def unflatten_spatial_channel(v: np.ndarray, n: int, c: int) -> np.ndarray:
    """Inverse of ``flatten_spatial_channel``."""
    v = linalg.as_matrix(v)
    if v.size != n * c:
        raise ShapeError(f"unflatten: {v.size} values for {n}x{c}")
    return v.reshape(n, c, order="F")


def heatmap_image(row: np.ndarray, h: int, w: int) -> np.ndarray:
    """One affinity row as an 8-bit grayscale grid, min-max normalized."""
    row = np.asarray(row, dtype=np.float64).ravel()
    if row.size != h * w:
        raise ShapeError(f"heatmap: row of length {row.size} for {h}x{w} grid")
    lo, hi = float(np.min(row)), float(np.max(row))
    if hi - lo < 1e-300:
        scaled = np.zeros_like(row)
    else:
        scaled = (row - lo) / (hi - lo)
    return np.clip(np.rint(scaled * 255.0), 0, 255).astype(np.uint8).reshape(h, w)


def write_pgm(image: np.ndarray, path) -> None:
    """Write an 8-bit grayscale image as binary PGM (P5)."""
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())

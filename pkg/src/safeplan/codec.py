"""Symmetric-log transforms and twohot encoding for discrete-regression value heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_SYMEXP_INPUT = 700.0  # exp overflows past this


def symlog(x):
    """sign(x) * ln(|x| + 1), elementwise. Compresses large magnitudes."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("symlog requires finite input")
    return np.sign(x) * np.log1p(np.abs(x))


def symexp(x):
    """sign(x) * (exp(|x|) - 1), elementwise. Exact inverse of symlog."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("symexp requires finite input")
    if np.any(np.abs(x) > MAX_SYMEXP_INPUT):
        raise ValueError("symexp input magnitude exceeds overflow bound")
    return np.sign(x) * np.expm1(np.abs(x))


def symexp_deriv(x):
    """d/dx symexp(x) = exp(|x|); continuous at 0."""
    return np.exp(np.abs(np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class BinLattice:
    """Strictly increasing bin centers, symmetric about 0."""

    centers: np.ndarray = field(
        default_factory=lambda: np.linspace(-20.0, 20.0, 41)
    )

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("lattice needs at least two centers")
        if not np.all(np.diff(c) > 0):
            raise ValueError("lattice centers must be strictly increasing")
        if abs(c[0] + c[-1]) > 1e-12:
            raise ValueError("lattice must be symmetric about 0")
        object.__setattr__(self, "centers", c)

    @property
    def size(self) -> int:
        return self.centers.size

    def __len__(self) -> int:
        return self.centers.size


DEFAULT_LATTICE = BinLattice()


def twohot_encode(x: float, lattice: BinLattice = DEFAULT_LATTICE) -> np.ndarray:
    """Encode a scalar as probability mass on the two adjacent bins bracketing it.

    Out-of-range values clamp to the lattice edge. At an exact bin center the
    full weight lands on that bin. The weighted bin-center mean of the output
    reproduces the (clamped) input exactly.
    """
    if not np.isfinite(x):
        raise ValueError("twohot_encode requires finite input")
    c = lattice.centers
    x = float(np.clip(x, c[0], c[-1]))
    out = np.zeros(c.size)
    # n = number of centers strictly below x; bracketing pair is (n-1, n) 0-indexed
    n = int(np.searchsorted(c, x, side="left"))
    if n == 0:
        out[0] = 1.0
        return out
    lo, hi = c[n - 1], c[n]
    width = hi - lo
    out[n - 1] = (hi - x) / width
    out[n] = (x - lo) / width
    return out


def twohot_encode_batch(x: np.ndarray, lattice: BinLattice = DEFAULT_LATTICE) -> np.ndarray:
    """Vectorised twohot_encode over a 1-D array; returns (len(x), |B|)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("twohot_encode requires finite input")
    c = lattice.centers
    x = np.clip(x, c[0], c[-1])
    n = np.searchsorted(c, x, side="left")
    out = np.zeros((x.size, c.size))
    rows = np.arange(x.size)
    at_edge = n == 0
    out[rows[at_edge], 0] = 1.0
    inner = ~at_edge
    ni = n[inner]
    lo, hi = c[ni - 1], c[ni]
    width = hi - lo
    out[rows[inner], ni - 1] = (hi - x[inner]) / width
    out[rows[inner], ni] = (x[inner] - lo) / width
    return out


def twohot_decode(p: np.ndarray, lattice: BinLattice = DEFAULT_LATTICE) -> float:
    """Inner product of a probability vector with the bin centers."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (lattice.size,):
        raise ValueError("probability vector length does not match lattice")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("malformed probability distribution")
    return float(p @ lattice.centers)

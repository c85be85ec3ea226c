"""Systematic (n, k) Reed-Solomon coding of byte packages over GF(2^8).

The generator is [I_k ; C] where C is an (n-k) x k Cauchy matrix built from
x_i = i for parity row i in [k, n) and y_j = n + j for column j.  The two index
sets are disjoint, so every element of C is defined and every k x k submatrix
of the generator is invertible, which gives the any-k reconstruction property.

Slices 0..k-1 of an encoding are the k consecutive segments of the input
package verbatim; slices k..n-1 are parity.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import gf256
from .errors import InsufficientShares


@dataclass(frozen=True)
class CodingParams:
    """Dispersal parameters: n shares total, any k reconstruct."""

    n: int
    k: int

    def __post_init__(self):
        if not (self.n > self.k >= 1):
            raise ValueError(f"require n > k >= 1, got n={self.n} k={self.k}")
        if self.n > 255:
            raise ValueError("n must be at most 255 for a GF(2^8) code")
        if self.n + self.k > 256:
            # x/y index sets of the Cauchy construction must fit in the field
            raise ValueError("n + k must be at most 256 for the Cauchy construction")


@dataclass(frozen=True)
class ShareSlice:
    """One coded fragment: `index` is both the share label and the cloud it
    is destined for."""

    index: int
    data: bytes


@lru_cache(maxsize=64)
def parity_matrix(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """(n-k) x k Cauchy parity rows; row p corresponds to share index k + p."""
    rows = []
    for i in range(k, n):
        rows.append(tuple(gf256.gf_inv(i ^ (n + j)) for j in range(k)))
    return tuple(rows)


def generator_matrix(n: int, k: int) -> list[list[int]]:
    """Full n x k generator [I_k ; Cauchy]."""
    ident = [[1 if i == j else 0 for j in range(k)] for i in range(k)]
    return ident + [list(row) for row in parity_matrix(n, k)]


def rs_encode(package: bytes, params: CodingParams) -> list[ShareSlice]:
    """Encode a package whose length is divisible by k into n slices."""
    n, k = params.n, params.k
    if len(package) == 0 or len(package) % k != 0:
        raise ValueError(f"package length {len(package)} not a positive multiple of k={k}")
    seg_len = len(package) // k
    segs = np.frombuffer(package, dtype=np.uint8).reshape(k, seg_len)
    slices = [ShareSlice(i, segs[i].tobytes()) for i in range(k)]
    for p, row in enumerate(parity_matrix(n, k)):
        acc = np.zeros(seg_len, dtype=np.uint8)
        for j in range(k):
            gf256.xor_scaled(acc, row[j], segs[j])
        slices.append(ShareSlice(k + p, acc.tobytes()))
    return slices


def rs_decode(slices: list[ShareSlice], params: CodingParams) -> bytes:
    """Reconstruct the original package from any k distinct slices.

    When more than k slices are given, the k with the smallest indices are
    used.  Raises InsufficientShares below the threshold and ValueError on
    duplicate indices, out-of-range indices, or unequal slice lengths.
    """
    n, k = params.n, params.k
    if len(slices) < k:
        raise InsufficientShares(f"need {k} slices, got {len(slices)}")
    indices = [s.index for s in slices]
    if len(set(indices)) != len(indices):
        raise ValueError("duplicate slice indices")
    if any(not (0 <= i < n) for i in indices):
        raise ValueError("slice index out of range")
    if len({len(s.data) for s in slices}) != 1:
        raise ValueError("slices have unequal lengths")

    chosen = sorted(slices, key=lambda s: s.index)[:k]
    seg_len = len(chosen[0].data)
    have = {s.index: np.frombuffer(s.data, dtype=np.uint8) for s in chosen}

    missing = [j for j in range(k) if j not in have]
    if not missing:
        return b"".join(chosen[j].data for j in range(k))

    # Solve for the missing data segments using the parity rows we do have.
    cauchy = parity_matrix(n, k)
    parity_idx = [i for i in have if i >= k]
    sub = [[cauchy[i - k][j] for j in missing] for i in parity_idx]
    rhs = []
    for i in parity_idx:
        acc = have[i].copy()
        for j in range(k):
            if j in have and j not in missing:
                gf256.xor_scaled(acc, cauchy[i - k][j], have[j])
        rhs.append(acc)
    inv = gf256.mat_inv(sub)
    solved = gf256.mat_vec(inv, rhs)
    for j, vec in zip(missing, solved):
        have[j] = vec

    out = np.empty(k * seg_len, dtype=np.uint8)
    for j in range(k):
        out[j * seg_len : (j + 1) * seg_len] = have[j]
    return out.tobytes()

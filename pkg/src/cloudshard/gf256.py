"""Arithmetic in GF(2^8) with the 0x11D reduction polynomial.

Scalar helpers operate on plain ints in [0, 255].  Bulk operations work on
numpy uint8 arrays through a precomputed 256x256 product table, which is the
fast path used by the Reed-Solomon coder.
"""

import numpy as np

POLY = 0x11D  # x^8 + x^4 + x^3 + x^2 + 1


def _build_tables():
    exp = np.zeros(512, dtype=np.uint8)
    log = np.zeros(256, dtype=np.int32)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= POLY
    exp[255:510] = exp[:255]
    return exp, log


EXP, LOG = _build_tables()

# MUL[a][b] = a*b in the field; 64KB, built once at import.
_la = LOG[np.arange(256)].reshape(256, 1)
_lb = LOG[np.arange(256)].reshape(1, 256)
MUL = EXP[(_la + _lb) % 255]
MUL[0, :] = 0
MUL[:, 0] = 0
del _la, _lb


def gf_mul(a: int, b: int) -> int:
    """Product of two field elements."""
    if not (0 <= a <= 255 and 0 <= b <= 255):
        raise ValueError("field elements must be in [0, 255]")
    return int(MUL[a, b])


def gf_inv(a: int) -> int:
    """Multiplicative inverse; raises on zero."""
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(2^8)")
    return int(EXP[255 - LOG[a]])


def gf_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(2^8)")
    if a == 0:
        return 0
    return int(EXP[(LOG[a] - LOG[b]) % 255])


def xor_scaled(acc: np.ndarray, coef: int, vec: np.ndarray) -> None:
    """acc ^= coef * vec, elementwise over uint8 arrays (in place)."""
    if coef == 0:
        return
    if coef == 1:
        np.bitwise_xor(acc, vec, out=acc)
    else:
        np.bitwise_xor(acc, MUL[coef][vec], out=acc)


def mat_vec(matrix: list[list[int]], vecs: list[np.ndarray]) -> list[np.ndarray]:
    """Multiply a field matrix by a column of equal-length byte vectors."""
    width = len(vecs[0])
    out = []
    for row in matrix:
        acc = np.zeros(width, dtype=np.uint8)
        for coef, vec in zip(row, vecs):
            xor_scaled(acc, coef, vec)
        out.append(acc)
    return out


def mat_inv(matrix: list[list[int]]) -> list[list[int]]:
    """Invert a square matrix over GF(2^8) by Gauss-Jordan elimination."""
    n = len(matrix)
    a = [row[:] + [1 if i == j else 0 for j in range(n)] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col] != 0), None)
        if pivot is None:
            raise ValueError("singular matrix over GF(2^8)")
        a[col], a[pivot] = a[pivot], a[col]
        inv_p = gf_inv(a[col][col])
        a[col] = [gf_mul(v, inv_p) for v in a[col]]
        for r in range(n):
            if r == col or a[r][col] == 0:
                continue
            f = a[r][col]
            a[r] = [v ^ gf_mul(f, p) for v, p in zip(a[r], a[col])]
    return [row[n:] for row in a]

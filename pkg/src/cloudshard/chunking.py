"""Content-defined and fixed-size chunking of a backup stream.

Variable-size chunking slides a 64-bit Rabin fingerprint over a small window
and cuts where the fingerprint matches a mask-derived pattern, clamped to
[min_size, max_size].  Because a breakpoint depends only on the window
content, identical regions of different streams chunk identically, which is
what makes downstream deduplication effective and shift-resilient.

The fingerprint polynomial is x^64 + x^4 + x^3 + x + 1 (a primitive
polynomial over GF(2)); push and pop byte tables are precomputed from it.
The hot loop is compiled with numba when available and falls back to the
equivalent pure-Python scan otherwise.
"""

import io
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator, Union

import numpy as np

_POLY_LOW = 0x1B  # x^64 reduced: x^4 + x^3 + x + 1
_FULL_POLY = (1 << 64) | _POLY_LOW
_M64 = (1 << 64) - 1

_READ_BLOCK = 1 << 20


@dataclass(frozen=True)
class ChunkParams:
    """Breakpoint configuration; avg must be a power of two."""

    avg: int = 8192
    min_size: int = 2048
    max_size: int = 16384
    window: int = 48

    def __post_init__(self):
        if self.avg & (self.avg - 1) or self.avg <= 0:
            raise ValueError("avg chunk size must be a power of two")
        if not (1 <= self.min_size <= self.avg <= self.max_size):
            raise ValueError("require 1 <= min <= avg <= max")
        if self.window < 1:
            raise ValueError("window must be positive")

    @property
    def mask(self) -> int:
        return self.avg - 1

    @property
    def target(self) -> int:
        return self.avg - 2  # mask - 1


def _mod_poly(v: int) -> int:
    while v.bit_length() > 64:
        v ^= _FULL_POLY << (v.bit_length() - 65)
    return v


def _build_tables(window: int) -> tuple[np.ndarray, np.ndarray]:
    shift_mod = np.array([_mod_poly(t << 64) for t in range(256)], dtype=np.uint64)
    pop = np.array([_mod_poly(b << (8 * window)) for b in range(256)], dtype=np.uint64)
    return shift_mod, pop


_TABLE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _tables(window: int) -> tuple[np.ndarray, np.ndarray]:
    if window not in _TABLE_CACHE:
        _TABLE_CACHE[window] = _build_tables(window)
    return _TABLE_CACHE[window]


def _scan_py(data, shift_mod, pop, mask, target, window, min_size, max_size, final):
    """Reference scan: returns (cut positions, resume offset).

    Same contract as the compiled kernel; kept as the fallback and as the
    oracle the fast path is tested against.
    """
    n = len(data)
    cuts = []
    start = 0
    while n - start >= max_size or (final and start < n):
        end = min(start + max_size, n)
        fp = 0
        cut = -1
        i = start
        while i < end:
            fp = (((fp << 8) & _M64) ^ int(data[i])) ^ int(shift_mod[fp >> 56])
            rel = i - start + 1
            if rel > window:
                fp ^= int(pop[data[i - window]])
            if rel >= min_size and (fp & mask) == target:
                cut = i + 1
                break
            i += 1
        if cut < 0:
            if end - start == max_size:
                cut = end
            else:
                cut = n  # final partial chunk
        cuts.append(cut)
        start = cut
    return np.array(cuts, dtype=np.int64), start


def _make_numba_kernel():
    import numba

    @numba.njit(cache=True, nogil=True)
    def scan(data, shift_mod, pop, mask, target, window, min_size, max_size, final):
        n = data.shape[0]
        cuts = np.empty(n // min_size + 2, dtype=np.int64)
        ncuts = 0
        start = 0
        m64 = np.uint64(0xFFFFFFFFFFFFFFFF)
        u8 = np.uint64(8)
        u56 = np.uint64(56)
        mask64 = np.uint64(mask)
        target64 = np.uint64(target)
        while n - start >= max_size or (final and start < n):
            end = min(start + max_size, n)
            fp = np.uint64(0)
            cut = -1
            i = start
            while i < end:
                fp = (((fp << u8) & m64) ^ np.uint64(data[i])) ^ shift_mod[fp >> u56]
                rel = i - start + 1
                if rel > window:
                    fp ^= pop[data[i - window]]
                if rel >= min_size and (fp & mask64) == target64:
                    cut = i + 1
                    break
                i += 1
            if cut < 0:
                if end - start == max_size:
                    cut = end
                else:
                    cut = n
            cuts[ncuts] = cut
            ncuts += 1
            start = cut
        return cuts[:ncuts], start

    return scan


try:
    _scan_fast = _make_numba_kernel()
except ImportError:  # pragma: no cover - exercised only without numba
    _scan_fast = None


def _scan(data: np.ndarray, params: ChunkParams, final: bool):
    shift_mod, pop = _tables(params.window)
    fn = _scan_fast if _scan_fast is not None else _scan_py
    return fn(
        data, shift_mod, pop, params.mask, params.target,
        params.window, params.min_size, params.max_size, final,
    )


def chunk_stream(
    source: Union[bytes, bytearray, memoryview, BinaryIO],
    params: ChunkParams = ChunkParams(),
) -> Iterator[bytes]:
    """Yield content-defined chunks whose concatenation equals the input."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        source = io.BytesIO(bytes(source))
    pending = b""
    saw_data = False
    while True:
        block = source.read(_READ_BLOCK)
        final = not block
        buf = pending + block if block else pending
        if buf:
            saw_data = True
            arr = np.frombuffer(buf, dtype=np.uint8)
            cuts, resume = _scan(arr, params, final)
            prev = 0
            for cut in cuts:
                yield buf[prev:cut]
                prev = cut
            pending = buf[resume:]
        if final:
            break
    if not saw_data:
        raise ValueError("cannot chunk an empty stream")


def chunk_fixed(
    source: Union[bytes, bytearray, memoryview, BinaryIO],
    size: int,
) -> Iterator[bytes]:
    """Yield fixed-size chunks; the last one may be shorter."""
    if size <= 0:
        raise ValueError("chunk size must be positive")
    if isinstance(source, (bytes, bytearray, memoryview)):
        source = io.BytesIO(bytes(source))
    saw_data = False
    while True:
        piece = source.read(size)
        if not piece:
            break
        saw_data = True
        yield piece
    if not saw_data:
        raise ValueError("cannot chunk an empty stream")

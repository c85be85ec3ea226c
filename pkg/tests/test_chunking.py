import io
import random

import numpy as np
import pytest

from cloudshard import chunking
from cloudshard.chunking import ChunkParams, chunk_fixed, chunk_stream


def reference_chunks(data: bytes, params: ChunkParams) -> list[bytes]:
    """Chunk via the pure-Python reference scan in one shot."""
    arr = np.frombuffer(data, dtype=np.uint8)
    shift_mod, pop = chunking._tables(params.window)
    cuts, resume = chunking._scan_py(
        arr, shift_mod, pop, params.mask, params.target,
        params.window, params.min_size, params.max_size, True,
    )
    assert resume == len(data)
    out, prev = [], 0
    for c in cuts:
        out.append(data[prev:c])
        prev = c
    return out


def test_params_validation():
    with pytest.raises(ValueError):
        ChunkParams(avg=5000)  # not a power of two
    with pytest.raises(ValueError):
        ChunkParams(avg=8192, min_size=9000)
    with pytest.raises(ValueError):
        ChunkParams(avg=8192, max_size=4096)
    assert ChunkParams().mask == 8191


def test_fast_scan_agrees_with_reference():
    rng = random.Random(0)
    params = ChunkParams()
    for size in (1, 100, 2047, 2048, 16384, 16385, 400_000):
        data = rng.randbytes(size)
        assert list(chunk_stream(data, params)) == reference_chunks(data, params)


def test_lossless_and_size_bounds():
    data = random.Random(1).randbytes(3_000_000)
    params = ChunkParams()
    chunks = list(chunk_stream(data, params))
    assert b"".join(chunks) == data
    for c in chunks[:-1]:
        assert params.min_size <= len(c) <= params.max_size
    assert len(chunks[-1]) <= params.max_size


def test_streaming_matches_whole_buffer():
    # > 2 read blocks, so breakpoints must survive the carry across reads
    data = random.Random(2).randbytes(2_500_000)
    params = ChunkParams()
    via_stream = list(chunk_stream(io.BytesIO(data), params))
    via_buffer = reference_chunks(data, params)
    assert via_stream == via_buffer


def test_constant_stream_cuts_at_max():
    # a constant window never matches the breakpoint pattern, so every cut
    # is the max-size clamp
    for c in (0x00, 0xAB):
        sizes = [len(x) for x in chunk_stream(bytes([c]) * 102400)]
        assert sizes == [16384] * 6 + [4096]


def test_short_input_single_chunk():
    data = b"tiny"
    assert list(chunk_stream(data)) == [data]
    data = bytes(2047)  # just below min
    assert list(chunk_stream(data)) == [data]


def test_mean_chunk_size_reasonable():
    data = random.Random(3).randbytes(10_000_000)
    params = ChunkParams()
    chunks = list(chunk_stream(data, params))
    mean = len(data) / len(chunks)
    assert params.avg / 2 <= mean <= 2 * params.avg


def test_deterministic():
    data = random.Random(4).randbytes(500_000)
    assert list(chunk_stream(data)) == list(chunk_stream(data))


def test_shift_resilience():
    rng = random.Random(5)
    data = rng.randbytes(1_000_000)
    params = ChunkParams()
    base = list(chunk_stream(data, params))
    shifted = list(chunk_stream(b"\x00" + data, params))

    # compare boundary positions in the original content's coordinates,
    # ignoring the first max-sized region where the insertion lands
    def boundaries(chunks, offset):
        pos, out = -offset, []
        for c in chunks:
            pos += len(c)
            if pos > params.max_size:
                out.append(pos)
        return out

    b0 = set(boundaries(base, 0))
    b1 = set(boundaries(shifted, 1))
    assert len(b0 & b1) / len(b0) > 0.90


def test_empty_stream_rejected():
    with pytest.raises(ValueError):
        list(chunk_stream(b""))
    with pytest.raises(ValueError):
        list(chunk_fixed(b"", 4096))


def test_fixed_chunking():
    assert [len(c) for c in chunk_fixed(bytes(12 * 1024), 4096)] == [4096] * 3
    assert [len(c) for c in chunk_fixed(bytes(10 * 1024), 4096)] == [4096, 4096, 2048]
    data = random.Random(6).randbytes(10000)
    assert b"".join(chunk_fixed(data, 4096)) == data
    assert b"".join(chunk_fixed(io.BytesIO(data), 1000)) == data
    with pytest.raises(ValueError):
        list(chunk_fixed(b"x", 0))

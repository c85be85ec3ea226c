"""Deterministic all-or-nothing packaging of secrets, and its composition
with Reed-Solomon coding into n dispersed shares.

A secret X is packaged as (Y, t):

    h = SHA-256(salt || X)          content-derived key
    Y = X xor AES256-CTR(h, 0...)   keystream over an all-zero block, zero nonce
    t = h xor SHA-256(Y)            32-byte tail

The same padded secret always yields the same package, which is what makes
shares of identical content deduplicable across independent clients.  The key
h is recoverable only with the whole package, and doubles as an integrity
check on decode.  The optional deployment-wide salt participates only in the
derivation of h, not in the tail hash.
"""

import hashlib
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import DecodeFailure, InsufficientShares, IntegrityError
from .rscode import CodingParams, ShareSlice, rs_decode, rs_encode

TAIL_LEN = 32  # SHA-256 digest size

_ZEROS = bytes(65536)
_ZERO_NONCE = bytes(16)


@dataclass(frozen=True)
class Secret:
    """A chunk of user data, zero-padded for encoding."""

    data: bytes          # padded bytes
    original_size: int   # payload bytes before padding

    def __post_init__(self):
        if self.original_size < 1:
            raise ValueError("secret must contain at least one byte")
        if len(self.data) < self.original_size:
            raise ValueError("padded data shorter than original size")


@dataclass(frozen=True)
class AontPackage:
    head: bytes  # Y, same length as the padded secret
    tail: bytes  # t, TAIL_LEN bytes


def _xor(a: bytes, b: bytes) -> bytes:
    return (np.frombuffer(a, dtype=np.uint8) ^ np.frombuffer(b, dtype=np.uint8)).tobytes()


def mask_stream(key: bytes, length: int) -> bytes:
    """Keystream of AES-256 in counter mode (zero nonce) over a zero block."""
    enc = Cipher(algorithms.AES(key), modes.CTR(_ZERO_NONCE)).encryptor()
    block = _ZEROS[:length] if length <= len(_ZEROS) else bytes(length)
    return enc.update(block)


def hash_key(data: bytes, salt: bytes = b"") -> bytes:
    """Content-derived key h = SHA-256(salt || data)."""
    return hashlib.sha256(salt + data).digest()


def pad_secret(data: bytes, k: int) -> Secret:
    """Zero-pad minimally so the package (padded + tail) divides evenly by k."""
    if len(data) == 0:
        raise ValueError("cannot pad an empty secret")
    pad = -(len(data) + TAIL_LEN) % k
    return Secret(data + bytes(pad), len(data))


def transform(secret: Secret, salt: bytes = b"") -> AontPackage:
    """Package a padded secret; pure and deterministic."""
    h = hash_key(secret.data, salt)
    head = _xor(secret.data, mask_stream(h, len(secret.data)))
    tail = _xor(h, hashlib.sha256(head).digest())
    return AontPackage(head, tail)


def invert(package: AontPackage, original_size: int, salt: bytes = b"") -> bytes:
    """Recover the secret from a package, verifying the embedded hash.

    Raises IntegrityError when the recomputed content hash does not match,
    which is the corruption signal the share-subset retry keys off.
    """
    h = _xor(package.tail, hashlib.sha256(package.head).digest())
    data = _xor(package.head, mask_stream(h, len(package.head)))
    if hash_key(data, salt) != h:
        raise IntegrityError("embedded hash mismatch; package corrupted")
    if original_size > len(data):
        raise ValueError(f"original size {original_size} exceeds package payload {len(data)}")
    return data[:original_size]


def encode_secret(data: bytes, params: CodingParams, salt: bytes = b"") -> list[ShareSlice]:
    """pad -> transform -> Reed-Solomon: n shares, share i bound for cloud i."""
    secret = pad_secret(data, params.k)
    pkg = transform(secret, salt)
    return rs_encode(pkg.head + pkg.tail, params)


def decode_secret_ex(
    slices: list[ShareSlice],
    original_size: int,
    params: CodingParams,
    salt: bytes = b"",
) -> tuple[bytes, int]:
    """Decode with brute-force subset retry; returns (secret, subsets tried).

    Subsets of k shares are tried in lexicographic order of sorted share
    indices until one decodes to a package whose embedded hash verifies.
    """
    k = params.k
    if len(slices) < k:
        raise InsufficientShares(f"need {k} shares, got {len(slices)}")
    ordered = sorted(slices, key=lambda s: s.index)
    attempts = 0
    for subset in combinations(ordered, k):
        attempts += 1
        try:
            package = rs_decode(list(subset), params)
            data = invert(AontPackage(package[:-TAIL_LEN], package[-TAIL_LEN:]), original_size, salt)
            return data, attempts
        except IntegrityError:
            continue
    raise DecodeFailure(f"no verifying subset among {attempts} combinations of {len(slices)} shares")


def decode_secret(
    slices: list[ShareSlice],
    original_size: int,
    params: CodingParams,
    salt: bytes = b"",
) -> bytes:
    return decode_secret_ex(slices, original_size, params, salt)[0]

"""Key-value engines backing the server indices.

The durable engine is a log-structured store: every mutation is appended to
a single log file and the full key space is kept in memory, rebuilt by
replaying the log on open.  A partially written tail record (crash during
append) is detected and truncated.  MemoryKV provides the same surface for
tests and ephemeral servers.
"""

import os
import struct
from pathlib import Path
from typing import Iterator, Optional

_PUT = 1
_DELETE = 2
_LEN = struct.Struct("<I")


class MemoryKV:
    def __init__(self):
        self._data: dict[bytes, bytes] = {}

    def get(self, key: bytes) -> Optional[bytes]:
        return self._data.get(key)

    def put(self, key: bytes, value: bytes):
        self._data[key] = value

    def delete(self, key: bytes):
        self._data.pop(key, None)

    def batch(self, puts: list[tuple[bytes, bytes]], deletes: list[bytes] = ()):
        for k, v in puts:
            self._data[k] = v
        for k in deletes:
            self._data.pop(k, None)

    def scan(self, prefix: bytes) -> Iterator[tuple[bytes, bytes]]:
        for k in sorted(self._data):
            if k.startswith(prefix):
                yield k, self._data[k]

    def flush(self):
        pass

    def close(self):
        pass


class LogKV:
    """Append-only log with an in-memory index, replayed on open."""

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.path = self.dir / "kv.log"
        self._data: dict[bytes, bytes] = {}
        self._replay()
        self._fh = open(self.path, "ab")

    def _replay(self):
        if not self.path.exists():
            return
        raw = self.path.read_bytes()
        pos = 0
        good = 0
        n = len(raw)
        while pos < n:
            if pos + 5 > n:
                break
            op = raw[pos]
            (klen,) = _LEN.unpack_from(raw, pos + 1)
            kend = pos + 5 + klen
            if op not in (_PUT, _DELETE) or kend > n:
                break
            key = raw[pos + 5 : kend]
            if op == _PUT:
                if kend + 4 > n:
                    break
                (vlen,) = _LEN.unpack_from(raw, kend)
                vend = kend + 4 + vlen
                if vend > n:
                    break
                self._data[key] = raw[kend + 4 : vend]
                pos = vend
            else:
                self._data.pop(key, None)
                pos = kend
            good = pos
        if good != n:
            # torn tail from an interrupted append
            with open(self.path, "r+b") as fh:
                fh.truncate(good)

    @staticmethod
    def _record(op: int, key: bytes, value: bytes = b"") -> bytes:
        head = bytes([op]) + _LEN.pack(len(key)) + key
        if op == _PUT:
            head += _LEN.pack(len(value)) + value
        return head

    def get(self, key: bytes) -> Optional[bytes]:
        return self._data.get(key)

    def put(self, key: bytes, value: bytes):
        self.batch([(key, value)])

    def delete(self, key: bytes):
        self.batch([], [key])

    def batch(self, puts: list[tuple[bytes, bytes]], deletes: list[bytes] = ()):
        out = bytearray()
        for k, v in puts:
            out += self._record(_PUT, k, v)
        for k in deletes:
            out += self._record(_DELETE, k)
        if out:
            self._fh.write(out)
            self._fh.flush()
            os.fsync(self._fh.fileno())
        for k, v in puts:
            self._data[k] = v
        for k in deletes:
            self._data.pop(k, None)

    def scan(self, prefix: bytes) -> Iterator[tuple[bytes, bytes]]:
        for k in sorted(self._data):
            if k.startswith(prefix):
                yield k, self._data[k]

    def flush(self):
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self):
        self.flush()
        self._fh.close()

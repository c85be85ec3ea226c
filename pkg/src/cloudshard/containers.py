"""Container packing and the cloud-backend abstraction.

Shares and file recipes are buffered per (owner, kind) and sealed into
append-only containers capped at 4MB; a recipe too large for one container
gets a dedicated container that may exceed the cap, so a recipe is never
split.  Containers are the unit of backend I/O and of the read cache.

Container layout (little-endian):

    magic "CSCT" | version u8 | kind u8 | reserved u16 | owner u64 |
    record count u32 | records...

with each record a u32 length prefix followed by its bytes.  A ContainerRef
addresses the record payload by (container id, offset, length).
"""

import re
import struct
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from threading import RLock

from .errors import CorruptRecord, FlushError, NotFound

MAGIC = b"CSCT"
FORMAT_VERSION = 1
CONTAINER_CAP = 4 * 1024 * 1024
DEFAULT_CACHE_CAPACITY = 128

KIND_SHARE = 0
KIND_RECIPE = 1

_HEADER = struct.Struct("<4sBBHQI")
HEADER_SIZE = _HEADER.size
_REC_LEN = struct.Struct("<I")


@dataclass(frozen=True)
class ContainerRef:
    container_id: str
    offset: int
    length: int


class FSBackend:
    """One object per container under <root>/containers/."""

    def __init__(self, root):
        self.root = Path(root) / "containers"
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, container_id: str, data: bytes):
        tmp = self.root / (container_id + ".tmp")
        tmp.write_bytes(data)
        tmp.rename(self.root / container_id)

    def get(self, container_id: str) -> bytes:
        path = self.root / container_id
        if not path.exists():
            raise NotFound(f"container {container_id}")
        return path.read_bytes()

    def list(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if not p.name.endswith(".tmp"))

    def delete(self, container_id: str):
        (self.root / container_id).unlink(missing_ok=True)


class LRUCache:
    """Container cache counted in containers, not bytes."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: OrderedDict[str, bytes] = OrderedDict()

    def get(self, key: str):
        if key not in self._items:
            return None
        self._items.move_to_end(key)
        return self._items[key]

    def put(self, key: str, value: bytes):
        if self.capacity <= 0:
            return
        self._items[key] = value
        self._items.move_to_end(key)
        while len(self._items) > self.capacity:
            self._items.popitem(last=False)

    def invalidate(self, key: str):
        self._items.pop(key, None)

    def __len__(self):
        return len(self._items)


class _Buffer:
    __slots__ = ("container_id", "owner", "kind", "records", "size")

    def __init__(self, container_id: str, owner: int, kind: int):
        self.container_id = container_id
        self.owner = owner
        self.kind = kind
        self.records: list[bytes] = []
        self.size = HEADER_SIZE

    def append(self, data: bytes) -> ContainerRef:
        offset = self.size + _REC_LEN.size
        self.records.append(data)
        self.size += _REC_LEN.size + len(data)
        return ContainerRef(self.container_id, offset, len(data))

    def seal(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, self.kind, 0, self.owner, len(self.records))]
        for rec in self.records:
            parts.append(_REC_LEN.pack(len(rec)))
            parts.append(rec)
        return b"".join(parts)


_ID_RE = re.compile(r"^c(\d{12})$")


class ContainerStore:
    """Buffers, seals, persists, and caches containers for one server."""

    def __init__(self, backend, cache_capacity: int = DEFAULT_CACHE_CAPACITY):
        self.backend = backend
        self.cache = LRUCache(cache_capacity)
        self._buffers: dict[tuple[int, int], _Buffer] = {}
        self._lock = RLock()
        self._next_seq = self._resume_seq()
        self.backend_fetches = 0
        self.flushed_bytes = {KIND_SHARE: 0, KIND_RECIPE: 0}

    def _resume_seq(self) -> int:
        last = -1
        for cid in self.backend.list():
            m = _ID_RE.match(cid)
            if m:
                last = max(last, int(m.group(1)))
        return last + 1

    def _new_id(self) -> str:
        cid = f"c{self._next_seq:012d}"
        self._next_seq += 1
        return cid

    def append_record(self, owner: int, kind: int, data: bytes) -> ContainerRef:
        """Buffer one record; seals and flushes the open container when the
        cap would be exceeded."""
        if kind not in (KIND_SHARE, KIND_RECIPE):
            raise ValueError(f"unknown container kind {kind}")
        record_total = HEADER_SIZE + _REC_LEN.size + len(data)
        if record_total > CONTAINER_CAP and kind != KIND_RECIPE:
            raise ValueError("share record exceeds the container cap")
        with self._lock:
            key = (owner, kind)
            buf = self._buffers.get(key)
            if buf is not None and buf.size + _REC_LEN.size + len(data) > CONTAINER_CAP:
                self._flush_buffer(key)
                buf = None
            if buf is None:
                buf = _Buffer(self._new_id(), owner, kind)
                self._buffers[key] = buf
            ref = buf.append(data)
            if buf.size >= CONTAINER_CAP:
                # oversized single-recipe container, or an exactly full one
                self._flush_buffer(key)
            return ref

    def _flush_buffer(self, key: tuple[int, int]):
        buf = self._buffers.get(key)
        if buf is None or not buf.records:
            return
        data = buf.seal()
        try:
            self.backend.put(buf.container_id, data)
        except Exception as e:
            raise FlushError(f"cannot persist container {buf.container_id}: {e}",
                             [buf.container_id]) from e
        self.flushed_bytes[buf.kind] += len(data)
        del self._buffers[key]

    def flush_all(self):
        """Persist every open buffer; raises FlushError listing survivors."""
        with self._lock:
            failed = []
            err = None
            for key in list(self._buffers):
                try:
                    self._flush_buffer(key)
                except FlushError as e:
                    failed.extend(e.unpersisted)
                    err = e
            if failed:
                raise FlushError(f"{len(failed)} containers not persisted: {failed}",
                                 failed) from err

    def _container_bytes(self, container_id: str) -> bytes:
        with self._lock:
            for buf in self._buffers.values():
                if buf.container_id == container_id:
                    return buf.seal()
        cached = self.cache.get(container_id)
        if cached is not None:
            return cached
        data = self.backend.get(container_id)
        self.backend_fetches += 1
        self.cache.put(container_id, data)
        return data

    def read_record(self, ref: ContainerRef) -> bytes:
        data = self._container_bytes(ref.container_id)
        if len(data) < HEADER_SIZE or data[:4] != MAGIC:
            raise CorruptRecord(f"container {ref.container_id}: bad header")
        start, end = ref.offset, ref.offset + ref.length
        if ref.offset < HEADER_SIZE + _REC_LEN.size or end > len(data):
            raise CorruptRecord(f"container {ref.container_id}: record out of bounds")
        (stored_len,) = _REC_LEN.unpack_from(data, ref.offset - _REC_LEN.size)
        if stored_len != ref.length:
            raise CorruptRecord(
                f"container {ref.container_id}: length prefix {stored_len} != ref {ref.length}")
        return data[start:end]

    def open_buffer_bytes(self) -> int:
        with self._lock:
            return sum(b.size for b in self._buffers.values())

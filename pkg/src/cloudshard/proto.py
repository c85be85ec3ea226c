"""Framed binary client-server protocol.

Every message is one frame: a one-byte type code, a 4-byte little-endian
payload length, then the payload.  Integers are little-endian fixed width;
variable byte strings are length-prefixed.  Decoding is streaming-safe: a
truncated frame raises NeedMoreData, anything malformed raises ProtocolError,
and no input crashes the decoder.

The module also exposes the low-level record reader/writer used for the
on-disk index and container values, so there is exactly one binary
convention in the system.
"""

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import CloudshardError, ProtocolError

PROTOCOL_VERSION = 1
FINGERPRINT_LEN = 32
MAX_FRAME = 64 * 1024 * 1024
BATCH_LIMIT = 4 * 1024 * 1024  # upload/download payload batching cap

_HEADER = struct.Struct("<BI")


class NeedMoreData(CloudshardError):
    """The buffer ends mid-frame; feed more bytes and retry."""


class MsgType(IntEnum):
    HELLO = 1
    FP_QUERY = 2
    FP_REPLY = 3
    SHARE_BATCH = 4
    FILE_META = 5
    DOWNLOAD_REQ = 6
    RECIPE_REPLY = 7
    SHARE_REPLY = 8
    ERROR = 9
    ACK = 10


class ErrorCode(IntEnum):
    MALFORMED = 1
    NOT_FOUND = 2
    BACKEND = 3
    UNKNOWN_FINGERPRINT = 4
    INTERNAL = 5
    UNSUPPORTED_VERSION = 6


class Reader:
    """Bounds-checked cursor over one payload."""

    __slots__ = ("buf", "pos")

    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise ProtocolError("record truncated")
        out = bytes(self.buf[self.pos : self.pos + n])
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def fingerprint(self) -> bytes:
        return self.take(FINGERPRINT_LEN)

    def lpbytes(self) -> bytes:
        return self.take(self.u32())

    def lpstr(self) -> str:
        try:
            return self.take(self.u16()).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ProtocolError(f"bad utf-8 string: {e}") from None

    def done(self):
        if self.pos != len(self.buf):
            raise ProtocolError(f"{len(self.buf) - self.pos} trailing bytes")


class Writer:
    """Accumulates one payload."""

    __slots__ = ("parts",)

    def __init__(self):
        self.parts = []

    def raw(self, b: bytes):
        self.parts.append(b)

    def u8(self, v: int):
        self.parts.append(struct.pack("<B", v))

    def u16(self, v: int):
        self.parts.append(struct.pack("<H", v))

    def u32(self, v: int):
        self.parts.append(struct.pack("<I", v))

    def u64(self, v: int):
        self.parts.append(struct.pack("<Q", v))

    def fingerprint(self, fp: bytes):
        if len(fp) != FINGERPRINT_LEN:
            raise ValueError("fingerprint must be 32 bytes")
        self.parts.append(fp)

    def lpbytes(self, b: bytes):
        self.u32(len(b))
        self.parts.append(b)

    def lpstr(self, s: str):
        b = s.encode("utf-8")
        self.u16(len(b))
        self.parts.append(b)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


@dataclass(frozen=True)
class Hello:
    user: int
    version: int = PROTOCOL_VERSION

    TYPE = MsgType.HELLO

    def write(self, w: Writer):
        w.u8(self.version)
        w.u64(self.user)

    @classmethod
    def read(cls, r: Reader):
        return cls(version=r.u8(), user=r.u64())


@dataclass(frozen=True)
class FpQuery:
    fingerprints: tuple[bytes, ...]

    TYPE = MsgType.FP_QUERY

    def write(self, w: Writer):
        w.u32(len(self.fingerprints))
        for fp in self.fingerprints:
            w.fingerprint(fp)

    @classmethod
    def read(cls, r: Reader):
        return cls(tuple(r.fingerprint() for _ in range(r.u32())))


@dataclass(frozen=True)
class FpReply:
    flags: tuple[bool, ...]

    TYPE = MsgType.FP_REPLY

    def write(self, w: Writer):
        w.u32(len(self.flags))
        w.raw(bytes(1 if f else 0 for f in self.flags))

    @classmethod
    def read(cls, r: Reader):
        n = r.u32()
        raw = r.take(n)
        if any(b not in (0, 1) for b in raw):
            raise ProtocolError("flag byte out of range")
        return cls(tuple(b == 1 for b in raw))


@dataclass(frozen=True)
class BatchEntry:
    client_fp: bytes
    seq: int
    secret_size: int
    share: bytes

    @property
    def share_size(self) -> int:
        return len(self.share)


@dataclass(frozen=True)
class ShareBatch:
    batch_id: int
    entries: tuple[BatchEntry, ...]

    TYPE = MsgType.SHARE_BATCH

    def write(self, w: Writer):
        w.u64(self.batch_id)
        w.u32(len(self.entries))
        for e in self.entries:
            w.fingerprint(e.client_fp)
            w.u64(e.seq)
            w.u32(e.secret_size)
            w.u32(len(e.share))
            w.raw(e.share)

    @classmethod
    def read(cls, r: Reader):
        batch_id = r.u64()
        entries = []
        for _ in range(r.u32()):
            fp = r.fingerprint()
            seq = r.u64()
            secret_size = r.u32()
            share = r.lpbytes()
            entries.append(BatchEntry(fp, seq, secret_size, share))
        return cls(batch_id, tuple(entries))


@dataclass(frozen=True)
class FileMeta:
    pathname_record: bytes
    file_size: int
    secrets: tuple[tuple[bytes, int], ...]  # (client fp, secret size) in order

    TYPE = MsgType.FILE_META

    def write(self, w: Writer):
        w.lpbytes(self.pathname_record)
        w.u64(self.file_size)
        w.u64(len(self.secrets))
        for fp, size in self.secrets:
            w.fingerprint(fp)
            w.u32(size)

    @classmethod
    def read(cls, r: Reader):
        record = r.lpbytes()
        file_size = r.u64()
        n = r.u64()
        secrets = tuple((r.fingerprint(), r.u32()) for _ in range(n))
        return cls(record, file_size, secrets)


@dataclass(frozen=True)
class DownloadReq:
    pathname_record: bytes

    TYPE = MsgType.DOWNLOAD_REQ

    def write(self, w: Writer):
        w.lpbytes(self.pathname_record)

    @classmethod
    def read(cls, r: Reader):
        return cls(r.lpbytes())


@dataclass(frozen=True)
class RecipeReply:
    file_size: int
    secret_sizes: tuple[int, ...]

    TYPE = MsgType.RECIPE_REPLY

    def write(self, w: Writer):
        w.u64(self.file_size)
        w.u64(len(self.secret_sizes))
        for s in self.secret_sizes:
            w.u32(s)

    @classmethod
    def read(cls, r: Reader):
        size = r.u64()
        n = r.u64()
        return cls(size, tuple(r.u32() for _ in range(n)))


SHARE_OK = 0
SHARE_CORRUPT = 1


@dataclass(frozen=True)
class ShareReply:
    items: tuple[tuple[int, int, bytes], ...]  # (seq, status, share bytes)

    TYPE = MsgType.SHARE_REPLY

    def write(self, w: Writer):
        w.u32(len(self.items))
        for seq, status, data in self.items:
            w.u64(seq)
            w.u8(status)
            if status == SHARE_OK:
                w.lpbytes(data)

    @classmethod
    def read(cls, r: Reader):
        items = []
        for _ in range(r.u32()):
            seq = r.u64()
            status = r.u8()
            if status not in (SHARE_OK, SHARE_CORRUPT):
                raise ProtocolError(f"bad share status {status}")
            data = r.lpbytes() if status == SHARE_OK else b""
            items.append((seq, status, data))
        return cls(tuple(items))


@dataclass(frozen=True)
class Error:
    code: int
    message: str = ""

    TYPE = MsgType.ERROR

    def write(self, w: Writer):
        w.u16(self.code)
        w.lpstr(self.message)

    @classmethod
    def read(cls, r: Reader):
        return cls(r.u16(), r.lpstr())


@dataclass(frozen=True)
class Ack:
    token: int = 0

    TYPE = MsgType.ACK

    def write(self, w: Writer):
        w.u64(self.token)

    @classmethod
    def read(cls, r: Reader):
        return cls(r.u64())


_BY_TYPE = {
    cls.TYPE: cls
    for cls in (Hello, FpQuery, FpReply, ShareBatch, FileMeta, DownloadReq,
                RecipeReply, ShareReply, Error, Ack)
}

Message = (Hello | FpQuery | FpReply | ShareBatch | FileMeta | DownloadReq
           | RecipeReply | ShareReply | Error | Ack)


def encode_message(msg) -> bytes:
    w = Writer()
    msg.write(w)
    payload = w.getvalue()
    if len(payload) > MAX_FRAME:
        raise ValueError(f"payload of {len(payload)} bytes exceeds frame limit")
    return _HEADER.pack(int(msg.TYPE), len(payload)) + payload


def decode_message(buf) -> tuple[Message, int]:
    """Decode one frame from the head of buf; returns (message, consumed)."""
    view = memoryview(buf)
    if len(view) < _HEADER.size:
        raise NeedMoreData(f"have {len(view)} header bytes")
    mtype, length = _HEADER.unpack_from(view, 0)
    if length > MAX_FRAME:
        raise ProtocolError(f"declared frame length {length} exceeds limit")
    try:
        cls = _BY_TYPE[MsgType(mtype)]
    except ValueError:
        raise ProtocolError(f"unknown message type {mtype}") from None
    end = _HEADER.size + length
    if len(view) < end:
        raise NeedMoreData(f"frame needs {end} bytes, have {len(view)}")
    r = Reader(view[_HEADER.size : end])
    msg = cls.read(r)
    r.done()
    return msg, end


class MessageStream:
    """Message framing over any byte stream with sendall()/recv().

    This is the transport hook: real deployments hand it a connected TCP
    socket, tests may hand it anything stream-shaped (for example one end
    of a socketpair).
    """

    def __init__(self, sock):
        self.sock = sock
        self._buf = bytearray()

    def send(self, msg):
        self.sock.sendall(encode_message(msg))

    def _fill(self, need: int) -> bool:
        while len(self._buf) < need:
            data = self.sock.recv(1 << 16)
            if not data:
                return False
            self._buf += data
        return True

    def recv(self):
        """Next message, or None on clean EOF at a frame boundary."""
        if not self._fill(_HEADER.size):
            if self._buf:
                raise ProtocolError("connection closed mid-frame")
            return None
        _, length = _HEADER.unpack_from(self._buf, 0)
        if length > MAX_FRAME:
            raise ProtocolError(f"declared frame length {length} exceeds limit")
        end = _HEADER.size + length
        if not self._fill(end):
            raise ProtocolError("connection closed mid-frame")
        frame = bytes(self._buf[:end])
        del self._buf[:end]
        msg, consumed = decode_message(frame)
        assert consumed == end
        return msg

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass

"""Server-side file and share indices over a key-value engine.

Key namespaces:

    F/<filekey>              file entries; filekey = SHA-256(pathname record || user)
    S/<server fingerprint>   share entries with owner list and refcounts
    U/<user>/<client fp>     per-user map from client fingerprint to server fingerprint

The server fingerprint of a share is SHA-256 over a server-secret salt
followed by the share bytes.  Clients never see it, and the per-user mapping
is what answers intra-user duplicate queries, so one user's query results
can never reflect another user's uploads.

Reference counts track how many recipe entries of a user's files point at a
share; they are the bookkeeping that a (future) deletion would decrement.
"""

import hashlib
from contextlib import contextmanager
from dataclasses import dataclass

from .containers import ContainerRef
from .errors import NotFound
from .proto import Reader, Writer

STORED_NEW = "stored-new"
DEDUPLICATED = "deduplicated"


def client_fingerprint(share: bytes) -> bytes:
    """Client-side share fingerprint (no salt)."""
    return hashlib.sha256(share).digest()


@dataclass
class ShareIndexEntry:
    container_ref: ContainerRef
    share_size: int
    owners: dict[int, int]  # user id -> reference count


@dataclass
class FileIndexEntry:
    recipe_ref: ContainerRef
    file_size: int
    secret_count: int
    pathname_record: bytes


def pack_recipe(entries: list[tuple[bytes, int]]) -> bytes:
    """Recipe record: ordered (share fingerprint, secret size) pairs."""
    w = Writer()
    w.u64(len(entries))
    for fp, size in entries:
        w.fingerprint(fp)
        w.u32(size)
    return w.getvalue()


def unpack_recipe(data: bytes) -> list[tuple[bytes, int]]:
    r = Reader(data)
    out = [(r.fingerprint(), r.u32()) for _ in range(r.u64())]
    r.done()
    return out


def _pack_ref(w: Writer, ref: ContainerRef):
    w.lpstr(ref.container_id)
    w.u64(ref.offset)
    w.u32(ref.length)


def _read_ref(r: Reader) -> ContainerRef:
    return ContainerRef(r.lpstr(), r.u64(), r.u32())


class ServerIndex:
    def __init__(self, kv, salt: bytes):
        self.kv = kv
        self.salt = salt
        self._staged: dict[bytes, bytes] | None = None

    # -- fingerprints and keys ------------------------------------------

    def server_fingerprint(self, share: bytes) -> bytes:
        return hashlib.sha256(self.salt + share).digest()

    @staticmethod
    def file_key(pathname_record: bytes, user: int) -> bytes:
        return hashlib.sha256(pathname_record + user.to_bytes(8, "little")).digest()

    @staticmethod
    def _share_key(server_fp: bytes) -> bytes:
        return b"S/" + server_fp

    @staticmethod
    def _map_key(user: int, client_fp: bytes) -> bytes:
        return b"U/" + user.to_bytes(8, "little") + b"/" + client_fp

    # -- staged writes ---------------------------------------------------

    def _get(self, key: bytes):
        if self._staged is not None and key in self._staged:
            return self._staged[key]
        return self.kv.get(key)

    def _put(self, key: bytes, value: bytes):
        if self._staged is not None:
            self._staged[key] = value
        else:
            self.kv.put(key, value)

    @contextmanager
    def batch(self):
        """Stage mutations and commit them as one KV batch (one fsync)."""
        if self._staged is not None:
            yield  # already inside a batch
            return
        self._staged = {}
        try:
            yield
            staged, self._staged = self._staged, None
            self.kv.batch(list(staged.items()))
        except BaseException:
            self._staged = None
            raise

    # -- share entries ----------------------------------------------------

    def _write_share_entry(self, server_fp: bytes, entry: ShareIndexEntry):
        w = Writer()
        _pack_ref(w, entry.container_ref)
        w.u32(entry.share_size)
        w.u32(len(entry.owners))
        for user, count in sorted(entry.owners.items()):
            w.u64(user)
            w.u32(count)
        self._put(self._share_key(server_fp), w.getvalue())

    def find_share(self, server_fp: bytes) -> ShareIndexEntry | None:
        raw = self._get(self._share_key(server_fp))
        if raw is None:
            return None
        r = Reader(raw)
        ref = _read_ref(r)
        share_size = r.u32()
        owners = {r.u64(): r.u32() for _ in range(r.u32())}
        r.done()
        return ShareIndexEntry(ref, share_size, owners)

    def lookup_mapping(self, user: int, client_fp: bytes) -> bytes | None:
        return self._get(self._map_key(user, client_fp))

    def intra_user_query(self, user: int, fingerprints) -> list[bool]:
        """One flag per queried client fingerprint: already uploaded by THIS
        user.  Other users' holdings never influence the result."""
        return [self.lookup_mapping(user, fp) is not None for fp in fingerprints]

    def insert_share(
        self,
        user: int,
        client_fp: bytes,
        share: bytes,
        container_ref: ContainerRef | None,
    ) -> str:
        """Record one uploaded share reference for `user`.

        Creates the share entry when the bytes are new (container_ref must
        then point at the stored record), otherwise bumps the user's
        refcount on the existing entry.  Either way the client fingerprint
        mapping is recorded for intra-user queries.
        """
        server_fp = self.server_fingerprint(share)
        entry = self.find_share(server_fp)
        if entry is None:
            if container_ref is None:
                raise ValueError("new share requires a container ref")
            entry = ShareIndexEntry(container_ref, len(share), {user: 1})
            outcome = STORED_NEW
        else:
            entry.owners[user] = entry.owners.get(user, 0) + 1
            outcome = DEDUPLICATED
        self._write_share_entry(server_fp, entry)
        self._put(self._map_key(user, client_fp), server_fp)
        return outcome

    def add_reference(self, user: int, server_fp: bytes):
        """Count one more recipe reference by `user` to an existing share."""
        entry = self.find_share(server_fp)
        if entry is None:
            raise NotFound(f"share {server_fp.hex()}")
        entry.owners[user] = entry.owners.get(user, 0) + 1
        self._write_share_entry(server_fp, entry)

    def decrement_owner(self, user: int, server_fp: bytes) -> int:
        """Drop one reference; removes the user from the owner list at zero.
        The entry itself is retained (space reclamation is out of scope)."""
        entry = self.find_share(server_fp)
        if entry is None:
            raise NotFound(f"share {server_fp.hex()}")
        count = entry.owners.get(user)
        if not count:
            raise ValueError(f"user {user} holds no references to {server_fp.hex()}")
        count -= 1
        if count == 0:
            del entry.owners[user]
        else:
            entry.owners[user] = count
        self._write_share_entry(server_fp, entry)
        return count

    # -- file entries -------------------------------------------------------

    def put_file(self, user: int, pathname_record: bytes, file_size: int,
                 secret_count: int, recipe_ref: ContainerRef) -> bytes:
        """Insert or supersede the entry for (user, pathname)."""
        key = self.file_key(pathname_record, user)
        w = Writer()
        _pack_ref(w, recipe_ref)
        w.u64(file_size)
        w.u64(secret_count)
        w.lpbytes(pathname_record)
        self._put(b"F/" + key, w.getvalue())
        return key

    def get_file(self, user: int, pathname_record: bytes) -> FileIndexEntry:
        raw = self._get(b"F/" + self.file_key(pathname_record, user))
        if raw is None:
            raise NotFound("no such file for this user")
        r = Reader(raw)
        ref = _read_ref(r)
        file_size = r.u64()
        secret_count = r.u64()
        record = r.lpbytes()
        r.done()
        return FileIndexEntry(ref, file_size, secret_count, record)

    # -- whole-index scans (tests, harness reporting) -----------------------

    def all_share_entries(self):
        for key, _ in self.kv.scan(b"S/"):
            fp = key[2:]
            yield fp, self.find_share(fp)

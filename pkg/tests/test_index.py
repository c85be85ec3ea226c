import os
import random

import pytest

from cloudshard.containers import ContainerRef
from cloudshard.errors import NotFound
from cloudshard.index import (
    DEDUPLICATED,
    STORED_NEW,
    ServerIndex,
    client_fingerprint,
    pack_recipe,
    unpack_recipe,
)
from cloudshard.kvstore import LogKV, MemoryKV

REF = ContainerRef("c000000000000", 24, 100)


def make_index(salt=b"server-salt"):
    return ServerIndex(MemoryKV(), salt)


def insert(idx, user, share, ref=REF):
    return idx.insert_share(user, client_fingerprint(share), share, ref)


# ---------------------------------------------------------------- kv store


def test_logkv_roundtrip_and_replay(tmp_path):
    kv = LogKV(tmp_path)
    kv.put(b"a", b"1")
    kv.put(b"b", b"2")
    kv.batch([(b"c", b"3"), (b"a", b"10")], deletes=[b"b"])
    kv.close()
    kv2 = LogKV(tmp_path)
    assert kv2.get(b"a") == b"10"
    assert kv2.get(b"b") is None
    assert kv2.get(b"c") == b"3"
    kv2.close()


def test_logkv_truncates_torn_tail(tmp_path):
    kv = LogKV(tmp_path)
    kv.put(b"key", b"value")
    kv.close()
    with open(tmp_path / "kv.log", "ab") as fh:
        fh.write(b"\x01\x10\x00\x00\x00partial")  # claims 16-byte key, has 7
    kv2 = LogKV(tmp_path)
    assert kv2.get(b"key") == b"value"
    kv2.put(b"after", b"crash")
    kv2.close()
    kv3 = LogKV(tmp_path)
    assert kv3.get(b"after") == b"crash"
    kv3.close()


def test_scan_is_ordered_and_prefixed():
    kv = MemoryKV()
    kv.put(b"S/b", b"2")
    kv.put(b"S/a", b"1")
    kv.put(b"F/x", b"9")
    assert list(kv.scan(b"S/")) == [(b"S/a", b"1"), (b"S/b", b"2")]


# ---------------------------------------------------------------- share index


def test_intra_user_query_fresh_and_after_upload():
    idx = make_index()
    fps = [client_fingerprint(bytes([i]) * 10) for i in range(4)]
    assert idx.intra_user_query(1, fps) == [False] * 4
    insert(idx, 1, bytes([0]) * 10)
    insert(idx, 1, bytes([2]) * 10)
    assert idx.intra_user_query(1, fps) == [True, False, True, False]


def test_intra_user_query_independent_of_other_users():
    shares = [os.urandom(50) for _ in range(5)]
    fps = [client_fingerprint(s) for s in shares]

    def run(with_b):
        idx = make_index()
        if with_b:
            for s in shares:
                insert(idx, 2, s)
        replies = [idx.intra_user_query(1, fps)]
        insert(idx, 1, shares[0])
        replies.append(idx.intra_user_query(1, fps))
        return replies

    assert run(with_b=False) == run(with_b=True)


def test_insert_share_dedupes_across_users():
    idx = make_index()
    share = b"identical-bytes" * 10
    assert insert(idx, 1, share) == STORED_NEW
    assert insert(idx, 2, share) == DEDUPLICATED
    entry = idx.find_share(idx.server_fingerprint(share))
    assert entry.owners == {1: 1, 2: 1}
    assert entry.share_size == len(share)


def test_insert_share_same_user_two_files():
    idx = make_index()
    share = b"repeated" * 5
    insert(idx, 1, share)
    assert insert(idx, 1, share) == DEDUPLICATED
    assert idx.find_share(idx.server_fingerprint(share)).owners == {1: 2}


def test_insert_new_share_requires_ref():
    idx = make_index()
    with pytest.raises(ValueError):
        idx.insert_share(1, client_fingerprint(b"x"), b"x", None)


def test_distinct_shares_distinct_entries():
    idx = make_index()
    rng = random.Random(3)
    shares = {rng.randbytes(64) for _ in range(200)}
    for s in shares:
        insert(idx, 1, s)
    assert len({fp for fp, _ in idx.all_share_entries()}) == len(shares)


def test_server_fingerprint_salted_and_distinct_from_client():
    share = b"some share bytes"
    a = ServerIndex(MemoryKV(), b"salt-a")
    b = ServerIndex(MemoryKV(), b"salt-b")
    assert a.server_fingerprint(share) != b.server_fingerprint(share)
    assert a.server_fingerprint(share) != client_fingerprint(share)


def test_decrement_owner():
    idx = make_index()
    share = b"counted"
    insert(idx, 1, share)
    fp = idx.server_fingerprint(share)
    idx.add_reference(1, fp)
    assert idx.decrement_owner(1, fp) == 1
    assert idx.decrement_owner(1, fp) == 0
    assert idx.find_share(fp).owners == {}
    with pytest.raises(ValueError):
        idx.decrement_owner(1, fp)
    with pytest.raises(NotFound):
        idx.decrement_owner(1, os.urandom(32))


def test_reference_conservation_brute_force():
    # drive the index the way the server does: insert on first upload by a
    # user, add_reference for every later recipe reference; then recount
    idx = make_index()
    rng = random.Random(7)
    pool = [rng.randbytes(32) for _ in range(20)]
    files = []
    uploaded = set()
    for _ in range(15):
        user = rng.choice([1, 2, 3])
        refs = [rng.choice(pool) for _ in range(rng.randint(1, 8))]
        files.append((user, refs))
        for share in refs:
            if (user, client_fingerprint(share)) not in uploaded:
                insert(idx, user, share)
                uploaded.add((user, client_fingerprint(share)))
            else:
                idx.add_reference(user, idx.server_fingerprint(share))

    total_refs = sum(len(refs) for _, refs in files)
    total_counts = sum(
        sum(entry.owners.values()) for _, entry in idx.all_share_entries()
    )
    assert total_refs == total_counts
    # per-user recount as well
    for user in (1, 2, 3):
        expect = sum(len(refs) for u, refs in files if u == user)
        got = sum(e.owners.get(user, 0) for _, e in idx.all_share_entries())
        assert expect == got


# ---------------------------------------------------------------- file index


def test_put_get_file_roundtrip():
    idx = make_index()
    ref = ContainerRef("c000000000001", 30, 500)
    idx.put_file(1, b"record-bytes", 4096, 3, ref)
    entry = idx.get_file(1, b"record-bytes")
    assert entry.recipe_ref == ref
    assert entry.file_size == 4096
    assert entry.secret_count == 3
    assert entry.pathname_record == b"record-bytes"


def test_file_keys_are_per_user():
    idx = make_index()
    idx.put_file(1, b"same-path", 10, 1, REF)
    with pytest.raises(NotFound):
        idx.get_file(2, b"same-path")


def test_put_file_supersedes():
    idx = make_index()
    idx.put_file(1, b"p", 10, 1, REF)
    newer = ContainerRef("c000000000002", 24, 64)
    idx.put_file(1, b"p", 20, 2, newer)
    entry = idx.get_file(1, b"p")
    assert entry.recipe_ref == newer and entry.file_size == 20


def test_batched_mutations_visible_and_committed(tmp_path):
    kv = LogKV(tmp_path)
    idx = ServerIndex(kv, b"s")
    with idx.batch():
        insert(idx, 1, b"inside-batch")
        # read-your-writes inside the batch
        assert idx.intra_user_query(1, [client_fingerprint(b"inside-batch")]) == [True]
    kv.close()
    kv2 = LogKV(tmp_path)
    idx2 = ServerIndex(kv2, b"s")
    assert idx2.find_share(idx2.server_fingerprint(b"inside-batch")) is not None
    kv2.close()


def test_recipe_pack_roundtrip():
    entries = [(os.urandom(32), i * 100 + 1) for i in range(10)]
    assert unpack_recipe(pack_recipe(entries)) == entries

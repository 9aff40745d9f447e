import math

import pytest

import rdht


def test_hash_and_addressing():
    assert rdht.hash64(b"") == 0xCBF29CE484222325
    assert rdht.hash64(b"a") == 0xAF63DC4C8601EC8C
    assert rdht.index_width(256) == 1
    assert rdht.index_width(257) == 2
    h = rdht.hash64(b"foobar")
    cands = rdht.candidate_indices(h, 1 << 16)
    assert len(cands) == 7
    assert cands[0] == h >> 48
    assert rdht.target_rank(h, 5) == h % 5


def test_crc32_matches_zlib():
    zlib = pytest.importorskip("zlib")
    for data in (b"", b"123456789", bytes(range(256)) * 3):
        assert rdht.crc32(data) == zlib.crc32(data)


def test_layout_strides():
    assert rdht.bucket_layout("coarse")["stride"] == 185
    assert rdht.bucket_layout("fine")["stride"] == 200
    lf = rdht.bucket_layout("lockfree")
    assert lf["stride"] == 189
    assert lf["checksum_offset"] == 184
    assert lf["lock_offset"] is None


@pytest.mark.parametrize("protocol", ["coarse", "fine", "lockfree"])
def test_table_round_trip(protocol):
    t = rdht.Table(protocol, key_size=8, value_size=4, buckets=64)
    assert t.read(b"k" * 8) is None
    assert t.write(b"k" * 8, b"v001") == "inserted"
    assert t.write(b"k" * 8, b"v002") == "updated"
    assert t.read(b"k" * 8) == b"v002"
    s = t.stats()
    assert s["writes"] == 2 and s["reads"] == 2 and s["read_misses"] == 1
    with pytest.raises(ValueError):
        t.write(b"short", b"v001")


def test_rounding_and_kernel():
    assert rdht.round_significant(123.456, 2) == 120.0
    assert rdht.round_significant(-0.0012345, 3) == -0.00123
    key = rdht.make_key([1.0 / 3] * 10, 3)
    assert len(key) == 80
    out = rdht.kernel([0.0] * 10)
    assert out[:9] == [0.0] * 9
    assert out[9:] == [0.0, 0.0, 1.0, 0.0]
    inp = [0.1] * 9 + [0.5]
    assert math.isclose(sum(rdht.kernel(inp)[:9]), 0.9, rel_tol=1e-12)


def test_benchmark_and_demo():
    res = rdht.run_benchmark("fine", "threads", participants=2, buckets=4096, ops=500)
    assert [r["phase"] for r in res] == ["write", "read"]
    assert res[1]["wrong_values"] == 0
    assert res[0]["ops"] == 1000
    mixed = rdht.run_benchmark("lockfree", "sockets", participants=2, buckets=4096,
                               workload="mixed", dist="zipf", zipf_range=100, ops=300)
    assert mixed[0]["phase"] == "mixed" and mixed[0]["wrong_values"] == 0

    demo = rdht.run_demo(participants=2, grid_width=64, steps=5, inject=False)
    assert demo["hits"] + demo["kernel_calls"] == 320
    assert demo["step_hit_rates"][-1] == 1.0

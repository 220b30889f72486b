import io

import pytest
from hypothesis import given, strategies as st

from feps.fep_calc import FepVector, Level, compute_all_feps
from feps.fib_ext import (
    MAX_REF_PAIRS,
    FepMark,
    FibError,
    MarkNiPair,
    ProtocolError,
    build_sr_marks,
    decode_mark,
    encode_mark,
    fep_overhead_bytes,
    fep_overhead_from_counts,
    install_not_sr_mark,
    notvia_overhead_bytes,
    ospf_fib,
    write_fib_dump,
    write_pair_table,
)
from feps.topology import dump_topology, load_topology


def test_mark_examples():
    assert encode_mark(0, 0) == 0x0000
    assert encode_mark(511, 127) == 0xFFFF
    assert encode_mark(5, 3) == 0x0283 == 643
    assert str(FepMark(5, 3)) == "0x0283"
    assert decode_mark(0x0283) == (5, 3)


@pytest.mark.parametrize("args", [(512, 0), (-1, 0), (0, 128), (0, -1)])
def test_mark_range(args):
    with pytest.raises(ValueError):
        encode_mark(*args)


@pytest.mark.parametrize("v", [-1, 1 << 16])
def test_decode_range(v):
    with pytest.raises(ValueError):
        decode_mark(v)


@given(st.integers(0, 511), st.integers(0, 127))
def test_mark_roundtrip(s, f):
    m = FepMark(s, f)
    assert FepMark.from_value(m.value) == m


def test_ni_range():
    with pytest.raises(ValueError):
        MarkNiPair(FepMark(1, 0), 256)


def test_ospf_fib(t2):
    fib = ospf_fib(t2, 1)
    assert [(e.announced_by, e.next_hop) for e in fib.entries] == [(1, 1), (2, 2), (3, 2), (4, 4), (5, 2)]
    assert fib.ofe == 4


def test_t1_ecmp_pairs(t1):
    fib = build_sr_marks(t1, 1, compute_all_feps(t1, 1).vectors)
    ecmp = [p for p in fib.sr_pairs if p.routers == (1, 4)]
    assert len(ecmp) == 1
    assert ecmp[0].mark == FepMark(1, 0) and ecmp[0].ni == t1.interface(1, 4) == 1
    refs = {e.announced_by: e.ref for e in fib.entries}
    assert refs[3] == refs[5] == fib.sr_pairs.index(ecmp[0])
    assert refs[1] is None


def test_t1_frozen_pairs(t1):
    fib = build_sr_marks(t1, 1, compute_all_feps(t1, 1).vectors)
    got = [(p.routers, p.mark.fep_id, p.ni, p.confirmed) for p in fib.sr_pairs]
    assert got == [((1, 4, 3), 1, 1, False), ((1, 4), 0, 1, True), ((1, 2, 3), 2, 0, False)]


def test_t2_sig_ids(t2):
    fib = build_sr_marks(t2, 1, compute_all_feps(t2, 1).vectors)
    assert [(p.routers, p.mark.fep_id) for p in fib.sr_pairs] == [((1, 4, 5), 1), ((1, 2, 3, 5, 4), 2)]


def _with_prefixes(t, lines):
    return load_topology(dump_topology(t) + "".join(f"prefix {p} {r}\n" for p, r in lines))


def test_same_dr_prefixes_share_ref(t2):
    t = _with_prefixes(t2, [("X", 3), ("Y", 3)])
    fib = build_sr_marks(t, 1, compute_all_feps(t, 1).vectors)
    assert fib.entry("X").ref == fib.entry("Y").ref is not None


def test_shared_sequence_one_pair(t2):
    # T announced by 3, Z by 5: both protected by 1,4,5
    t = _with_prefixes(t2, [("T", 3), ("Z", 5)])
    fib = build_sr_marks(t, 1, compute_all_feps(t, 1).vectors)
    assert fib.entry("T").ref == fib.entry("Z").ref
    assert sum(1 for p in fib.sr_pairs if p.routers == (1, 4, 5)) == 1


def test_foreign_vector_rejected(t2):
    v = compute_all_feps(t2, 3).vectors
    with pytest.raises(FibError):
        build_sr_marks(t2, 1, v)


def test_fep_id_exhaustion():
    t = load_topology("routers 3\nrouter 1\nrouter 2\nrouter 3\nlink 1 2 cost 1\nlink 1 3 cost 1\nlink 2 3 cost 1\n")
    vs = [FepVector(1, 2, 2, (1, 3) + (200 + k,), Level.SIG) for k in range(128)]
    with pytest.raises(FibError, match="fep_id exhausted"):
        build_sr_marks(t, 1, vs, fib=ospf_fib(t, 1), announcements={})


def test_ref_exhaustion():
    t = load_topology("routers 3\nrouter 1\nrouter 2\nrouter 3\nlink 1 2 cost 1\nlink 1 3 cost 1\nlink 2 3 cost 1\n")
    # LFA pairs all use fep_id 0, so only the Ref width limits them
    vs = [FepVector(1, 2, 2, (1, 3, 200 + k), Level.LFA) for k in range(MAX_REF_PAIRS + 1)]
    with pytest.raises(FibError, match="Ref exhausted"):
        build_sr_marks(t, 1, vs, fib=ospf_fib(t, 1), announcements={})


def test_install_not_sr(t2):
    v = compute_all_feps(t2, 1).vectors[(2, 3)]
    m = FepMark(1, 1)
    f4 = install_not_sr_mark(t2, 4, v, m, ospf_fib(t2, 4))
    (p,) = f4.transit_pairs
    assert p.mark == m and p.ni == t2.interface(4, 5)
    assert all(e.ref is None for e in f4.entries)
    f5 = install_not_sr_mark(t2, 5, v, m.value, ospf_fib(t2, 5))
    assert f5.terminate == {m.value} and not f5.transit_pairs
    with pytest.raises(FibError):
        install_not_sr_mark(t2, 3, v, m, ospf_fib(t2, 3))
    with pytest.raises(FibError):
        install_not_sr_mark(t2, 1, v, m, ospf_fib(t2, 1))


def test_install_idempotent_and_conflict(t2):
    v = compute_all_feps(t2, 1).vectors[(2, 3)]
    f = install_not_sr_mark(t2, 4, v, FepMark(1, 1), ospf_fib(t2, 4))
    assert install_not_sr_mark(t2, 4, v, FepMark(1, 1), f).transit_pairs == f.transit_pairs
    other = FepVector(1, 2, 2, (1, 4, 1), Level.SIG)
    with pytest.raises(ProtocolError):
        install_not_sr_mark(t2, 4, other, FepMark(1, 1), f)


@pytest.mark.parametrize("fni, ofe, want", [(27, 0, 81), (27, 10, 91), (9, 5, 32), (0, 0, 0)])
def test_feps_bytes(fni, ofe, want):
    assert fep_overhead_from_counts(fni, ofe) == want


@pytest.mark.parametrize("nfib, ofe, want", [(54, 0, 648), (54, 10, 688), (184, 1, 2212), (0, 0, 0)])
def test_notvia_bytes(nfib, ofe, want):
    assert notvia_overhead_bytes(nfib, ofe) == want


def test_negative_counts():
    with pytest.raises(ValueError):
        fep_overhead_from_counts(-1, 0)
    with pytest.raises(ValueError):
        notvia_overhead_bytes(0, -1)


def test_overhead_from_fib(t1):
    fib = build_sr_marks(t1, 1, compute_all_feps(t1, 1).vectors)
    assert fep_overhead_bytes(fib) == 3 * 3 + 4
    assert fep_overhead_bytes(fib, "referenced") == 3 * 3 + 4
    stub = build_sr_marks(t1, 5, compute_all_feps(t1, 5).vectors)
    assert fep_overhead_bytes(stub) == 4
    assert fep_overhead_bytes(stub, "referenced") == 0
    with pytest.raises(ValueError):
        fep_overhead_bytes(fib, "some")


def test_dumps(t2):
    fib = build_sr_marks(t2, 1, compute_all_feps(t2, 1).vectors)
    dump = write_fib_dump(fib)
    assert dump.splitlines()[0] == "owner,prefix,announced_by,next_hop,ref"
    buf = io.StringIO()
    write_pair_table(fib, buf)
    assert buf.getvalue().splitlines()[1] == "1,0,0x0081,1,SR,1 4 5"

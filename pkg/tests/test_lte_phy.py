import shutil
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ami_lte.errors import ChecksumError, InvalidConfigurationError, TbsLookupError
from ami_lte.lte_phy import (
    DEFAULT_I_TBS,
    TDD_CONFIGURATIONS,
    TTI,
    UPLINK_MCS_TABLE,
    ChannelBandwidth,
    EtaMode,
    McsScheme,
    Modulation,
    TbsTable,
    TddUplinkShare,
    achievable_rate,
    data_path,
    rb_capacity,
    transport_block_bits,
    uplink_share,
    verify_checksum,
)

QPSK9 = McsScheme.for_modulation(Modulation.QPSK)


@pytest.mark.parametrize("mhz,rbs", [(1.4, 6), (3, 15), (5, 25), (10, 50), (15, 75), (20, 100)])
def test_rb_capacity(mhz, rbs):
    assert rb_capacity(ChannelBandwidth.from_mhz(mhz)) == rbs


def test_rb_capacity_is_bijection():
    values = [rb_capacity(bw) for bw in ChannelBandwidth]
    assert sorted(values) == [6, 15, 25, 50, 75, 100]
    assert len(set(values)) == len(ChannelBandwidth)


@pytest.mark.parametrize("mhz", [2, 0, -5, 1.5, "ten"])
def test_unsupported_bandwidth(mhz):
    with pytest.raises(InvalidConfigurationError):
        ChannelBandwidth.from_mhz(mhz)


def test_uplink_share_examples():
    assert uplink_share(TddUplinkShare(4, 10, 2, EtaMode.AS_PRINTED)) == Fraction(2, 5)
    assert uplink_share(TddUplinkShare(4, 10, 2, EtaMode.TABLE_REPRODUCTION)) == Fraction(1, 2)
    assert uplink_share(TddUplinkShare(10, 10, 0, EtaMode.AS_PRINTED)) == 1


def test_uplink_share_exact_scaling():
    assert uplink_share(TddUplinkShare(4, 10, 2, EtaMode.AS_PRINTED)) * 10 == 4
    assert uplink_share(TddUplinkShare(4, 10, 2, EtaMode.TABLE_REPRODUCTION)) * 8 == 4


def test_reference_configuration_pattern():
    tdd = TddUplinkShare.from_configuration(1)
    assert tdd.subframe_pattern() == "DSUUDDSUUD"
    assert [i for i, c in enumerate(tdd.subframe_pattern()) if c == "U"] == [2, 3, 7, 8]
    assert (tdd.n_sf_uplink, tdd.n_sf_frame, tdd.n_sf_special) == (4, 10, 2)
    assert TddUplinkShare() == TddUplinkShare(4, 10, 2).with_mode(EtaMode.TABLE_REPRODUCTION)


@pytest.mark.parametrize("args", [(6, 10, 5), (0, 10, 2), (4, 0, 0), (4, 10, -1)])
def test_invalid_subframe_counts(args):
    with pytest.raises(InvalidConfigurationError):
        TddUplinkShare(*args)


def test_pattern_must_match_counts():
    with pytest.raises(InvalidConfigurationError):
        TddUplinkShare(4, 10, 2, pattern="DSUUUDSUUU")


@given(st.integers(1, 10), st.integers(0, 10), st.integers(1, 10), st.sampled_from(list(EtaMode)))
def test_uplink_share_in_unit_interval(ul, special, frame, mode):
    if ul + special > frame or (mode is EtaMode.TABLE_REPRODUCTION and frame == special):
        return
    eta = uplink_share(TddUplinkShare(ul, frame, special, mode))
    assert 0 < eta <= 1


@pytest.mark.parametrize("index", sorted(TDD_CONFIGURATIONS))
def test_standard_configurations_construct(index):
    tdd = TddUplinkShare.from_configuration(index)
    assert len(tdd.subframe_pattern()) == 10


def test_mcs_map_boundaries():
    assert UPLINK_MCS_TABLE[10] == (Modulation.QPSK, 10)
    assert UPLINK_MCS_TABLE[11] == (Modulation.QAM16, 10)
    assert UPLINK_MCS_TABLE[20] == (Modulation.QAM16, 19)
    assert UPLINK_MCS_TABLE[21] == (Modulation.QAM64, 19)
    assert UPLINK_MCS_TABLE[28] == (Modulation.QAM64, 26)


def test_mcs_scheme_consistency():
    assert QPSK9 == McsScheme(Modulation.QPSK, 9, 9)
    with pytest.raises(InvalidConfigurationError):
        McsScheme(Modulation.QAM16, 9, 9)
    with pytest.raises(InvalidConfigurationError):
        McsScheme.from_i_mcs(29)
    with pytest.raises(InvalidConfigurationError):
        McsScheme.for_modulation(Modulation.QPSK, 14)


def test_default_tbs_indices():
    for mod, i_tbs in DEFAULT_I_TBS.items():
        assert McsScheme.for_modulation(mod).i_tbs == i_tbs
    assert DEFAULT_I_TBS[Modulation.QAM16] == 14
    assert DEFAULT_I_TBS[Modulation.QAM64] == 23


@pytest.mark.parametrize("text,mod", [("qpsk", Modulation.QPSK), ("16-QAM", Modulation.QAM16), ("QAM64", Modulation.QAM64)])
def test_modulation_parse(text, mod):
    assert Modulation.parse(text) is mod


@pytest.mark.parametrize("n,bits", [(1, 136), (2, 296), (3, 456), (4, 616)])
def test_tbs_spot_values(tbs, n, bits):
    assert tbs.bits(9, n) == bits
    assert transport_block_bits(QPSK9, n, tbs) == bits


@pytest.mark.parametrize("n,bps", [(1, 136_000), (2, 296_000), (3, 456_000)])
def test_achievable_rate(tbs, n, bps):
    assert achievable_rate(QPSK9, n, tbs) == bps


def test_tbs_shape_and_monotonicity(tbs):
    assert tbs.tbs_indices == list(range(27))
    assert tbs.max_prb == 100
    for i in tbs.tbs_indices:
        row = tbs.row(i)
        assert all(b > 0 for b in row)
        assert list(row) == sorted(row)
        if i:
            assert all(a <= b for a, b in zip(tbs.row(i - 1), row))


@given(st.integers(0, 28), st.integers(1, 100))
def test_rate_times_tti_is_block_size(i_mcs, n):
    mcs = McsScheme.from_i_mcs(i_mcs)
    assert achievable_rate(mcs, n) * TTI == transport_block_bits(mcs, n)


@given(st.integers(0, 28), st.integers(1, 99))
def test_rate_monotone_in_prb(i_mcs, n):
    mcs = McsScheme.from_i_mcs(i_mcs)
    assert achievable_rate(mcs, n) <= achievable_rate(mcs, n + 1)


def test_tbs_lookup_errors(tbs):
    with pytest.raises(TbsLookupError):
        tbs.bits(27, 1)
    with pytest.raises(TbsLookupError):
        tbs.bits(9, 0)
    with pytest.raises(TbsLookupError):
        tbs.bits(9, 101)


def test_smallest_prb(tbs):
    assert tbs.smallest_prb(9, 136) == 1
    assert tbs.smallest_prb(9, 137) == 2
    assert tbs.smallest_prb(9, 10**6) is None


def test_checksums_verify():
    verify_checksum("tbs_ul.csv")


@pytest.fixture
def data_copy(tmp_path):
    src = data_path("tbs_ul.csv").parent
    dst = tmp_path / "data"
    shutil.copytree(src, dst, ignore=shutil.ignore_patterns("__pycache__", "*.py"))
    return dst


def test_corrupted_tbs_named(data_copy):
    p = data_copy / "tbs_ul.csv"
    p.write_text(p.read_text().replace("136,", "137,", 1))
    with pytest.raises(ChecksumError) as exc:
        TbsTable.load(data_dir=data_copy)
    assert exc.value.filename == "tbs_ul.csv"
    assert "tbs_ul.csv" in str(exc.value)


def test_ragged_table_rejected():
    with pytest.raises(InvalidConfigurationError):
        TbsTable({0: (1, 2), 1: (1,)})

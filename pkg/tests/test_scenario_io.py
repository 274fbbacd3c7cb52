import shutil
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ami_lte.errors import ChecksumError, ScenarioError
from ami_lte.lte_phy import ChannelBandwidth, EtaMode, Modulation, data_path
from ami_lte.scenario_io import (
    CSV_COLUMNS,
    Architecture,
    ResultRow,
    ScenarioFile,
    SimulationBlock,
    SweepAxes,
    corrected_golden,
    dump_scenario,
    emit_results,
    expand_sweep,
    format_cell,
    inverse_bandwidth_outliers,
    load_corrections,
    load_golden,
    parse_scenario,
    round_percent,
)
from ami_lte.sched_sim import LoadMode, StaggerPolicy


def test_minimal_grouped_defaults():
    sf = parse_scenario("k_sm_total = 1550\nsms_per_dc = 10\n")
    assert sf.architectures == (Architecture.GROUPED,)
    assert sf.l_sm_bits == 800
    assert sf.t_sm == sf.t_dc == 900
    assert sf.t_sm_sched == 3600
    assert sf.t_service == 1 and sf.n_tti == 8
    assert sf.eta_mode is EtaMode.TABLE_REPRODUCTION
    assert sf.grouped().k_dc_total == 155


def test_flat_default_architecture():
    sf = parse_scenario('k_sm_total = 10\nt_sm = "900 s"\nmessage_size = "800 bit"\n')
    assert sf.architectures == (Architecture.FLAT,)
    assert sf.flat().l_sm_bits == 800


def test_period_order_violation_names_field():
    text = 'k_sm_total = 10\nsms_per_dc = 5\nt_sm_sched = "30 min"\nt_dc = "60 min"\n'
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    assert exc.value.field == "t_sm_sched"


def test_unknown_key_rejected():
    with pytest.raises(ScenarioError, match="foo") as exc:
        parse_scenario("k_sm_total = 10\nfoo = 1\n")
    assert exc.value.field == "foo"


def test_unknown_nested_key_rejected():
    with pytest.raises(ScenarioError, match="bar"):
        parse_scenario("k_sm_total = 10\n[simulation]\nbar = 2\n")


def test_syntax_error_reports_line():
    with pytest.raises(ScenarioError) as exc:
        parse_scenario("k_sm_total = 10\n\nsms_per_dc = = 3\n")
    assert exc.value.line == 3


@pytest.mark.parametrize(
    "text,field",
    [
        ('k_sm_total = 10\nt_sm = "15"\n', "t_sm"),
        ('k_sm_total = 10\nt_sm = "15 parsecs"\n', "t_sm"),
        ('k_sm_total = 10\nbandwidth_mhz = 7\n', "bandwidth_mhz"),
        ("k_sm_total = -3\n", "k_sm_total"),
        ('k_sm_total = 10\narchitecture = "grouped"\n', "sms_per_dc"),
        ("k_sm_total = 10\nsms_per_dc = 2\nk_dc_total = 5\n", "k_dc_total"),
        ("k_sm_total = 10\n[mcs_override]\nQPSK = 14\n", "mcs_override.QPSK"),
        ("k_sm_total = 10\n[simulation]\nbackground_occupancy = 2\n", "simulation.background_occupancy"),
    ],
)
def test_semantic_errors_name_field(text, field):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    assert exc.value.field == field


def test_simulation_block():
    sf = parse_scenario(
        'k_sm_total = 40\nsms_per_dc = 10\n[simulation]\nduration = "2 h"\nbackground_occupancy = 0.25\n'
        'background_mode = "random"\nseed = 9\nstagger = "all-at-once"\n'
    )
    sim = sf.simulation
    assert sim.duration == 7200 and sim.seed == 9
    assert sim.background_mode is LoadMode.SEEDED_RANDOM
    assert sim.stagger is StaggerPolicy.ALL_AT_ONCE
    assert sim.load_model(3).seed == 3


def test_expand_sweep_order():
    sf = parse_scenario(
        'architecture = ["flat", "grouped"]\nk_sm_total = 1\nsms_per_dc = 5\n'
        "[sweep]\nk_sm_total = [100, 200]\nbandwidth_mhz = [5, 10]\nmodulation = [\"QPSK\", \"16QAM\"]\n"
    )
    points = expand_sweep(sf)
    assert len(points) == 8
    assert [(p.k_sm_total, p.bandwidth.label, p.modulation.value) for p in points[:3]] == [
        (100, "5", "QPSK"), (100, "5", "16QAM"), (100, "10", "QPSK"),
    ]
    assert all(p.sweep.is_empty() and p.sms_per_dc == 5 for p in points)


durations = st.sampled_from([Fraction(x) for x in (1, 60, 900, 1800, 3600, 7200)] + [Fraction(1, 2)])


@st.composite
def scenarios(draw):
    archs = draw(st.sets(st.sampled_from(list(Architecture)), min_size=1))
    grouped = Architecture.GROUPED in archs
    t_dc = draw(durations)
    kw = dict(
        architectures=tuple(sorted(archs, key=lambda a: a.value)),
        k_sm_total=draw(st.integers(0, 50000)),
        l_sm_bits=Fraction(draw(st.integers(1, 20000))),
        t_sm=draw(durations),
        t_dc=t_dc,
        t_sm_sched=t_dc * draw(st.integers(1, 8)),
        bandwidth=draw(st.sampled_from(list(ChannelBandwidth))),
        tdd_configuration=draw(st.integers(0, 6)),
        eta_mode=draw(st.sampled_from(list(EtaMode))),
        modulation=draw(st.sampled_from(list(Modulation))),
    )
    if grouped:
        if draw(st.booleans()):
            kw["sms_per_dc"] = Fraction(draw(st.integers(1, 400)), draw(st.sampled_from([1, 2, 4])))
        else:
            kw["k_dc_total"] = Fraction(draw(st.integers(1, 5000)))
    if draw(st.booleans()):
        kw["i_tbs_override"] = {Modulation.QAM16: draw(st.integers(10, 19))}
    if draw(st.booleans()):
        kw["sweep"] = SweepAxes(
            k_sm_total=tuple(draw(st.lists(st.integers(0, 9000), max_size=3))),
            bandwidth=tuple(draw(st.lists(st.sampled_from(list(ChannelBandwidth)), max_size=2))),
        )
    if draw(st.booleans()):
        kw["simulation"] = SimulationBlock(
            duration=draw(durations),
            background_occupancy=draw(st.sampled_from([0.0, 0.25, 0.5, 1.0])),
            background_mode=draw(st.sampled_from(list(LoadMode))),
            seed=draw(st.integers(0, 2**31)),
            stagger=draw(st.sampled_from(list(StaggerPolicy))),
        )
    return ScenarioFile(**kw)


@settings(max_examples=200)
@given(scenarios())
def test_round_trip(sf):
    first = parse_scenario(dump_scenario(sf))
    assert first == sf
    assert parse_scenario(dump_scenario(first)) == first


def _row(arch, k, size, bw, gamma, brr=None):
    return ResultRow(arch, k, size, ChannelBandwidth.from_mhz(bw), Modulation.QPSK, 1, Fraction(gamma), brr)


def test_emit_overload_row():
    row = _row(Architecture.FLAT, 18000, None, 20, 8)
    text = emit_results([row])
    assert text.splitlines()[1].endswith(",800.000000,,true")
    assert "  -" in emit_results([row], "table", 2)


def test_emit_csv_columns_and_brr():
    row = _row(Architecture.GROUPED, 1550, Fraction(10), 1.4, Fraction(1, 50), Fraction(1, 50))
    lines = emit_results([row]).splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == "grouped,1550,10,1.4,QPSK,1,2.000000,0.020000,false"


def test_emit_empty_is_header_only():
    assert emit_results([]) == ",".join(CSV_COLUMNS) + "\n"


def test_format_cell_examples():
    assert format_cell(Fraction("0.0098868"), 3) == "0.989"
    assert format_cell(Fraction(3, 2), 2) == "-"
    assert format_cell(Fraction(1), 2) == "100.00"


def test_two_stage_rounding_differs_from_single_rounding():
    x = Fraction("0.04449")
    assert str(round_percent(x, 3, "half-up")) == "0.044"
    assert str(round_percent(x, 3, "two-stage")) == "0.045"
    with pytest.raises(ValueError):
        round_percent(x, 3, "banker")


def test_table_layout_header():
    rows = [_row(Architecture.FLAT, 1550, None, 1.4, Fraction("0.98868")),
            _row(Architecture.GROUPED, 1550, Fraction(10), 1.4, Fraction("0.01977"))]
    lines = emit_results(rows, "table").splitlines()
    assert "QPSK" in lines[0] and lines[0].count("QPSK") == 1
    assert "FLAT" in lines[1] and "SMs/DC=10" in lines[1]
    assert lines[2].startswith("1.4 MHz (6 RBs)") and "98.868" in lines[2]


@pytest.mark.parametrize("name,k", [("table2", 72), ("table3", 72)])
def test_golden_tables_load(name, k):
    cells = load_golden(name)
    assert len(cells) == k
    assert {c.column for c in cells} == {"flat", "10", "20", "40"}


def test_table3_dash_cells():
    dashes = {(c.bandwidth.label, c.modulation.value) for c in load_golden("table3") if c.printed == "-"}
    assert dashes and all(c.value is None for c in load_golden("table3") if c.printed == "-")


def test_identity_check_flags_two_cells():
    flagged = inverse_bandwidth_outliers(load_golden("table2"))
    assert sorted((c.bandwidth.label, c.modulation.value, c.column, c.printed) for c in flagged) == [
        ("3", "16QAM", "flat", "39.545"),
        ("3", "64QAM", "20", "0.010"),
    ]
    assert inverse_bandwidth_outliers(load_golden("table3")) == []


def test_corrected_overlay():
    fixes = {c.key: c.corrected for c in load_corrections()}
    assert len(fixes) == 2
    corrected = corrected_golden("table2")
    assert inverse_bandwidth_outliers(corrected) == []
    assert "0.099" in {c.printed for c in corrected}


def test_corrupted_golden_detected(tmp_path):
    dst = tmp_path / "data"
    shutil.copytree(data_path("tbs_ul.csv").parent, dst, ignore=shutil.ignore_patterns("__pycache__", "*.py"))
    p = dst / "golden_table2.csv"
    p.write_text(p.read_text().replace("98.868", "98.869"))
    with pytest.raises(ChecksumError, match="golden_table2.csv"):
        load_golden("table2", dst)

"""Regenerate the reference tables and figure series from the closed-form model."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

from . import capacity_model as cm
from .lte_phy import (
    UPLINK_MCS_TABLE,
    ChannelBandwidth,
    EtaMode,
    McsScheme,
    Modulation,
    TbsTable,
    TddUplinkShare,
    default_tbs_table,
)
from .scenario_io import (
    TABLE_DECIMALS,
    TABLE_K,
    Architecture,
    GoldenCell,
    ResultRow,
    format_cell,
    format_table,
    inverse_bandwidth_outliers,
    load_corrections,
    load_golden,
)

GROUP_SIZES = (10, 20, 40)
FIG_BW = ChannelBandwidth.BW_10


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def reference_tdd(mode: EtaMode = EtaMode.TABLE_REPRODUCTION) -> TddUplinkShare:
    return TddUplinkShare.from_configuration(1, mode)


def scheme_for_tbs(i_tbs: int) -> McsScheme:
    """Any uplink scheme carrying ``i_tbs``; only the TBS index matters for RB math."""
    for i_mcs, (_, t) in enumerate(UPLINK_MCS_TABLE):
        if t == i_tbs:
            return McsScheme.from_i_mcs(i_mcs)
    raise ValueError(f"I_TBS {i_tbs} not reachable on the uplink")


def _mcs(mod: Modulation, i_tbs: dict | None) -> McsScheme:
    if i_tbs and mod in i_tbs:
        return scheme_for_tbs(i_tbs[mod])
    return McsScheme.for_modulation(mod)


def cell_gamma(
    k_total: int,
    column: str,
    bw: ChannelBandwidth,
    mcs: McsScheme,
    tdd: TddUplinkShare | None = None,
    sp: cm.ServiceParams | None = None,
    table: TbsTable | None = None,
) -> cm.CapacityReport:
    tdd = tdd or reference_tdd()
    sp = sp or cm.ServiceParams()
    if column == "flat":
        return cm.flat_report(cm.FlatScenario(k_total), bw, tdd, mcs, sp, table)
    g = cm.GroupedScenario.with_group_size(k_total, Fraction(column))
    return cm.grouped_report(g, bw, tdd, mcs, sp, table)


def table_rows(
    name: str,
    i_tbs: dict | None = None,
    eta_mode: EtaMode = EtaMode.TABLE_REPRODUCTION,
    table: TbsTable | None = None,
) -> list[ResultRow]:
    k = TABLE_K[name]
    tdd = reference_tdd(eta_mode)
    sp = cm.ServiceParams()
    rows = []
    for bw in ChannelBandwidth:
        for mod in Modulation:
            mcs = _mcs(mod, i_tbs)
            flat = cell_gamma(k, "flat", bw, mcs, tdd, sp, table)
            rows.append(ResultRow(Architecture.FLAT, k, None, bw, mod, flat.n_rb_per_node, flat.gamma))
            for s in GROUP_SIZES:
                rep = cell_gamma(k, str(s), bw, mcs, tdd, sp, table)
                ratio = rep.gamma / flat.gamma if flat.gamma else None
                rows.append(
                    ResultRow(Architecture.GROUPED, k, Fraction(s), bw, mod, rep.n_rb_per_node, rep.gamma, ratio)
                )
    return rows


@dataclass(frozen=True)
class CellResult:
    golden: GoldenCell
    computed: str
    gamma: Fraction
    exempt: bool

    @property
    def match(self) -> bool:
        return self.computed == self.golden.printed


@dataclass(frozen=True)
class TableComparison:
    name: str
    cells: list[CellResult]

    @property
    def mismatches(self) -> list[CellResult]:
        return [c for c in self.cells if not c.match and not c.exempt]

    @property
    def exempted(self) -> list[CellResult]:
        return [c for c in self.cells if c.exempt]

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def render(self) -> str:
        """Computed table in the reference layout, then the diff against the printed one."""
        cells = {(c.golden.bandwidth, c.golden.modulation, c.golden.column): c.computed for c in self.cells}
        out = [f"{self.name}: K_SM_total = {TABLE_K[self.name]}, percent of uplink bandwidth", ""]
        out.append(format_table([], cells=cells).rstrip())
        out.append("")
        matched = sum(c.match for c in self.cells)
        out.append(f"{matched}/{len(self.cells)} cells match the printed table")
        for c in self.cells:
            if c.match:
                continue
            g = c.golden
            tag = "EXEMPT (inconsistent printed value)" if c.exempt else "MISMATCH"
            out.append(
                f"  {tag}: {g.bandwidth} {g.modulation.value} {g.column}: printed {g.printed}, computed {c.computed}"
            )
        out.append("PASS" if self.passed else f"FAIL: {len(self.mismatches)} non-exempt mismatches")
        return "\n".join(out) + "\n"


def exempt_keys(name: str, data_dir=None) -> set:
    """Cells excluded from exact matching: those failing the bandwidth identity."""
    return {c.key for c in inverse_bandwidth_outliers(load_golden(name, data_dir))}


def compare_table(
    name: str,
    rounding: str = "two-stage",
    i_tbs: dict | None = None,
    eta_mode: EtaMode = EtaMode.TABLE_REPRODUCTION,
    data_dir=None,
    table: TbsTable | None = None,
) -> TableComparison:
    golden = load_golden(name, data_dir)
    exempt = exempt_keys(name, data_dir)
    by_key = {(r.bandwidth, r.modulation, r.column): r for r in table_rows(name, i_tbs, eta_mode, table)}
    cells = []
    for g in golden:
        row = by_key[(g.bandwidth, g.modulation, g.column)]
        cells.append(CellResult(g, format_cell(row.gamma, g.decimals, rounding), row.gamma, g.key in exempt))
    return TableComparison(name, cells)


def corrections_consistent(data_dir=None) -> Check:
    """The shipped correction overlay covers exactly the identity-flagged cells."""
    overlay = {c.key for c in load_corrections(data_dir)}
    flagged = set()
    for name in TABLE_K:
        flagged |= exempt_keys(name, data_dir)
    ok = overlay == flagged
    return Check("golden correction overlay", ok, f"{len(overlay)} overlay cells, {len(flagged)} flagged by identity check")


# ---------------------------------------------------------------------------
# MCS enumeration


def enumerate_tbs(modulation: Modulation, data_dir=None, table: TbsTable | None = None) -> list[dict]:
    """Scan every TBS index against the printed cells of one modulation."""
    table = table or default_tbs_table()
    tdd = reference_tdd()
    sp = cm.ServiceParams()
    results = []
    cells = []
    for name in TABLE_K:
        ex = exempt_keys(name, data_dir)
        cells += [(name, g) for g in load_golden(name, data_dir) if g.modulation is modulation and g.key not in ex]
    for i_tbs in table.tbs_indices:
        mcs = scheme_for_tbs(i_tbs)
        matched = 0
        for name, g in cells:
            try:
                rep = cell_gamma(TABLE_K[name], g.column, g.bandwidth, mcs, tdd, sp, table)
            except cm.InfeasibleError:
                continue
            matched += format_cell(rep.gamma, g.decimals) == g.printed
        results.append(
            {
                "modulation": modulation.value,
                "i_tbs": i_tbs,
                "cells_matched": matched,
                "cells_checked": len(cells),
                "satisfies_all": matched == len(cells),
                "valid_for_modulation": any(e == (modulation, i_tbs) for e in UPLINK_MCS_TABLE),
            }
        )
    return results


def enumeration_csv(data_dir=None) -> str:
    buf = io.StringIO()
    fields = ["modulation", "i_tbs", "cells_matched", "cells_checked", "satisfies_all", "valid_for_modulation"]
    w = csv.DictWriter(buf, fields, lineterminator="\n")
    w.writeheader()
    for mod in (Modulation.QAM16, Modulation.QAM64):
        for row in enumerate_tbs(mod, data_dir):
            w.writerow({k: str(v).lower() if isinstance(v, bool) else v for k, v in row.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Figures


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _pct(x: Fraction) -> str:
    return f"{float(x * 100):.6f}"


def _within(name, value, target, tol) -> Check:
    ok = abs(value - target) <= tol
    return Check(name, ok, f"{value:.6g} vs {target} +/- {tol}")


def _gamma_series(k_values, sizes, bw=FIG_BW):
    q = McsScheme.for_modulation(Modulation.QPSK)
    rows = []
    for k in k_values:
        row = [k, _pct(cell_gamma(k, "flat", bw, q).gamma)]
        row += [_pct(cell_gamma(k, str(s), bw, q).gamma) for s in sizes]
        rows.append(row)
    return rows


def fig8():
    """Low-density consumption at 10 MHz, QPSK."""
    sizes = (10, 20, 30, 40)
    ks = list(range(100, 4501, 100))
    text = _csv(["k_sm_total", "flat"] + [f"grouped_{s}" for s in sizes], _gamma_series(ks, sizes))
    q = McsScheme.for_modulation(Modulation.QPSK)
    checks = [
        _within("flat 10 MHz, 4500 SMs (%)", float(cell_gamma(4500, "flat", FIG_BW, q).gamma * 100), 100.0, 0.1),
        _within("grouped 10 MHz, 4500 SMs, 30 SMs/DC (%)", float(cell_gamma(4500, "30", FIG_BW, q).gamma * 100), 0.333, 0.005),
        _within("grouped 10 MHz, 4500 SMs, 10 SMs/DC (%)", float(cell_gamma(4500, "10", FIG_BW, q).gamma * 100), 2.00, 0.01),
    ]
    crossing = next((k for k in range(1, 20000) if cell_gamma(k, "flat", FIG_BW, q).gamma >= 1), None)
    checks.append(Check("flat curve reaches 100% at", crossing == 4500, f"K = {crossing}"))
    return text, checks


def fig9():
    """High-density consumption at 10 MHz, QPSK."""
    sizes = (10, 20, 30, 40)
    ks = list(range(1000, 18001, 1000))
    text = _csv(["k_sm_total", "flat"] + [f"grouped_{s}" for s in sizes], _gamma_series(ks, sizes))
    q = McsScheme.for_modulation(Modulation.QPSK)
    checks = [
        _within("grouped 10 MHz, 18000 SMs, 40 SMs/DC (%)", float(cell_gamma(18000, "40", FIG_BW, q).gamma * 100), 4.00, 0.5),
        _within("grouped 10 MHz, 18000 SMs, 10 SMs/DC (%)", float(cell_gamma(18000, "10", FIG_BW, q).gamma * 100), 32.0, 0.5),
    ]
    return text, checks


def brr_for(k_total: int, sms_per_dc, mcs_flat=None, mcs_grouped=None) -> Fraction:
    q = McsScheme.for_modulation(Modulation.QPSK)
    g = cm.GroupedScenario.with_group_size(k_total, sms_per_dc)
    return cm.brr(cm.FlatScenario(k_total), g, mcs_flat or q, mcs_grouped or q, cm.ServiceParams())


FIG10_MARKERS = (4, 10, 20, 30, 40)


def fig10(k_total: int = 1550):
    q = McsScheme.for_modulation(Modulation.QPSK)
    sp = cm.ServiceParams()
    rows = []
    for s in range(4, 41):
        g = cm.GroupedScenario.with_group_size(k_total, s)
        rows.append([s, cm.min_rbs(cm.dc_payload_bits(g), q, sp), f"{float(brr_for(k_total, s)):.6f}"])
    text = _csv(["sms_per_dc", "n_rb_dc", "brr"], rows)
    markers = [brr_for(k_total, s) for s in FIG10_MARKERS]
    checks = [
        _within("BRR at 4 SMs/DC", float(brr_for(k_total, 4)), 0.0625, 0.0005),
        Check(
            "BRR non-increasing over SMs/DC " + ",".join(map(str, FIG10_MARKERS)),
            all(a >= b for a, b in zip(markers, markers[1:])),
            ", ".join(f"{float(v):.5f}" for v in markers),
        ),
    ]
    for s, target in ((10, Fraction(2, 100)), (20, Fraction(75, 10000)), (40, Fraction(25, 10000))):
        v = brr_for(k_total, s)
        checks.append(Check(f"BRR at {s} SMs/DC", v == target, f"{v} (= {float(v)}) vs {float(target)}"))
    return text, checks


FIG11_DCS = (100, 200, 400, 600)


def fig11():
    """BRR against total meters for a fixed concentrator count."""
    q = McsScheme.for_modulation(Modulation.QPSK)
    sp = cm.ServiceParams()
    ks = list(range(800, 18001, 200))
    rows, series = [], {d: [] for d in FIG11_DCS}
    for k in ks:
        row = [k]
        for d in FIG11_DCS:
            g = cm.GroupedScenario(k, d)
            v = cm.brr(cm.FlatScenario(k), g, q, q, sp)
            n = cm.min_rbs(cm.dc_payload_bits(g), q, sp)
            series[d].append((k, n, v))
            row.append(f"{float(v):.6f}")
        rows.append(row)
    text = _csv(["k_sm_total"] + [f"brr_kdc_{d}" for d in FIG11_DCS], rows)
    checks = []
    for d, pts in series.items():
        # BRR = N_DC / (K/K_DC)^2 drops with K except where N_DC steps up by one RB
        within = all(b[2] <= a[2] for a, b in zip(pts, pts[1:]) if a[1] == b[1])
        overall = pts[-1][2] < pts[0][2]
        checks.append(
            Check(f"BRR falls with K for K_DC={d}", within and overall,
                  f"{float(pts[0][2]):.5f} -> {float(pts[-1][2]):.5f}, non-increasing between RB steps: {within}")
        )
    end = [series[d][-1][2] for d in FIG11_DCS]
    checks.append(
        Check("fewer DCs give lower BRR at 18000 SMs", all(a <= b for a, b in zip(end, end[1:])),
              ", ".join(f"K_DC={d}: {float(v):.5f}" for d, v in zip(FIG11_DCS, end)))
    )
    return text, checks


FIGURES = {"fig8": fig8, "fig9": fig9, "fig10": fig10, "fig11": fig11}
TABLES = tuple(TABLE_K)
TARGETS = TABLES + tuple(FIGURES)

"""Embedded self-check suite behind ``ami-lte validate``."""

from __future__ import annotations

import hashlib

import numpy as np

from . import capacity_model as cm
from .errors import AmiLteError, InfeasibleError
from .lte_phy import (
    DEFAULT_I_TBS,
    ChannelBandwidth,
    EtaMode,
    McsScheme,
    Modulation,
    TbsTable,
    data_path,
    read_checksums,
)
from .reproduce import Check, compare_table, corrections_consistent, enumeration_csv, reference_tdd, scheme_for_tbs
from .scenario_io import ENUMERATION_FILE, TABLE_K, read_enumeration

PAYLOAD_RANGE = (16, 20000)


def check_checksums(data_dir=None) -> Check:
    sums = read_checksums(data_dir)
    bad = []
    for name, expected in sorted(sums.items()):
        path = data_path(name, data_dir)
        if not path.exists():
            bad.append(f"{name} missing")
        elif hashlib.sha256(path.read_bytes()).hexdigest() != expected:
            bad.append(f"{name} checksum mismatch")
    detail = "; ".join(bad) if bad else f"{len(sums)} data files verified"
    return Check("data file checksums", not bad, detail)


def check_tbs_table(table: TbsTable) -> Check:
    m = np.array([table.row(i) for i in table.tbs_indices])
    problems = []
    if (m <= 0).any():
        problems.append("non-positive entries")
    if (np.diff(m, axis=1) < 0).any():
        problems.append("decreasing along N_PRB")
    if (np.diff(m, axis=0) < 0).any():
        problems.append("decreasing along I_TBS")
    detail = "; ".join(problems) or f"{m.shape[0]} x {m.shape[1]} entries positive and monotone"
    return Check("TBS table monotonicity", not problems, detail)


def brute_force_min_rbs(row, payloads: np.ndarray, slots: int) -> np.ndarray:
    """Linear scan: first N with TBS(N) * slots >= payload, 0 when none fits."""
    fits = np.asarray(row)[None, :] * slots >= payloads[:, None]
    first = fits.argmax(axis=1) + 1
    return np.where(fits.any(axis=1), first, 0)


def check_min_rbs_oracle(table: TbsTable, lo: int = PAYLOAD_RANGE[0], hi: int = PAYLOAD_RANGE[1]) -> Check:
    sp = cm.ServiceParams()
    payloads = np.arange(lo, hi + 1)
    mismatches = 0
    first_bad = None
    for i_tbs in table.tbs_indices:
        mcs = scheme_for_tbs(i_tbs)
        expected = brute_force_min_rbs(table.row(i_tbs), payloads, sp.n_tti * sp.n_ts_tti)
        for p, want in zip(payloads.tolist(), expected.tolist()):
            try:
                got = cm.min_rbs(p, mcs, sp, table)
            except InfeasibleError:
                got = 0
            if got != want:
                mismatches += 1
                first_bad = first_bad or (i_tbs, p, got, want)
    detail = f"{len(table.tbs_indices)} rows x payloads {lo}..{hi} bits, {mismatches} mismatches"
    if first_bad:
        detail += f" (first: I_TBS {first_bad[0]}, {first_bad[1]} bits: {first_bad[2]} vs {first_bad[3]})"
    return Check("min_rbs vs brute-force scan", mismatches == 0, detail)


def check_brr_bandwidth_invariance(table: TbsTable) -> Check:
    sp = cm.ServiceParams()
    q = McsScheme.for_modulation(Modulation.QPSK)
    worst = 0.0
    cases = 0
    for k, s in ((1550, 4), (1550, 20), (18000, 40)):
        f = cm.FlatScenario(k)
        g = cm.GroupedScenario.with_group_size(k, s)
        ref = cm.brr(f, g, q, q, sp, table)
        for mode in EtaMode:
            tdd = reference_tdd(mode)
            for bw in ChannelBandwidth:
                ratio = cm.gamma_grouped(g, bw, tdd, q, sp, table) / cm.gamma_flat(f, bw, tdd, q, sp, table)
                worst = max(worst, abs(float(ratio - ref)))
                cases += 1
    return Check("BRR bandwidth cancellation", worst <= 1e-12, f"{cases} cases, max deviation {worst:.3g}")


def check_tables(data_dir=None, table=None) -> list[Check]:
    out = []
    for name in TABLE_K:
        cmp = compare_table(name, data_dir=data_dir, table=table)
        matched = sum(c.match for c in cmp.cells)
        out.append(
            Check(
                f"{name} reproduction",
                cmp.passed,
                f"{matched}/{len(cmp.cells)} match, {len(cmp.exempted)} exempt, {len(cmp.mismatches)} mismatches",
            )
        )
    return out


def check_enumeration_fixture(data_dir=None) -> Check:
    fixture = data_path(ENUMERATION_FILE, data_dir).read_text()
    fresh = enumeration_csv(data_dir)
    return Check("MCS enumeration fixture", fixture == fresh, "fixture equals a fresh scan" if fixture == fresh else "fixture is stale")


def check_defaults(data_dir=None) -> Check:
    rows = read_enumeration(data_dir)
    bad = []
    for mod in (Modulation.QAM16, Modulation.QAM64):
        ok = {int(r["i_tbs"]) for r in rows if r["modulation"] == mod.value and r["satisfies_all"] == "true"}
        if DEFAULT_I_TBS[mod] not in ok:
            bad.append(f"{mod.value} default {DEFAULT_I_TBS[mod]} not in {sorted(ok)}")
    return Check("default TBS indices", not bad, "; ".join(bad) or "16QAM and 64QAM defaults satisfy every cell")


def _guard(name, fn, *args) -> list[Check]:
    try:
        res = fn(*args)
    except AmiLteError as exc:
        return [Check(name, False, f"{type(exc).__name__}: {exc}")]
    return res if isinstance(res, list) else [res]


def run_checks(data_dir=None, oracle: bool = True) -> list[Check]:
    checks = _guard("data file checksums", check_checksums, data_dir)
    try:
        table = TbsTable.load(data_dir=data_dir)
    except AmiLteError as exc:
        return checks + [Check("TBS table load", False, f"{type(exc).__name__}: {exc}")]
    checks += _guard("TBS table monotonicity", check_tbs_table, table)
    if oracle:
        checks += _guard("min_rbs vs brute-force scan", check_min_rbs_oracle, table)
    checks += _guard("BRR bandwidth cancellation", check_brr_bandwidth_invariance, table)
    checks += _guard("golden correction overlay", corrections_consistent, data_dir)
    checks += _guard("table reproduction", check_tables, data_dir, table)
    checks += _guard("MCS enumeration fixture", check_enumeration_fixture, data_dir)
    checks += _guard("default TBS indices", check_defaults, data_dir)
    return checks

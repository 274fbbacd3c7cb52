"""Scenario files, result emission and the embedded golden tables.

Scenario files are TOML. Durations and message sizes are strings with an
explicit unit (``"15 min"``, ``"100 byte"``); anything not listed in the
schema is rejected.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import re
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import tomli_w

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import capacity_model as cm
from .errors import InvalidConfigurationError, ScenarioError
from .lte_phy import (
    ChannelBandwidth,
    EtaMode,
    McsScheme,
    Modulation,
    TddUplinkShare,
    data_path,
    rb_capacity,
    verify_checksum,
)
from .sched_sim import BackgroundLoadModel, LoadMode, StaggerPolicy
from .units import exact, format_duration, parse_duration, parse_size_bits


class Architecture(enum.Enum):
    FLAT = "flat"
    GROUPED = "grouped"


@dataclass(frozen=True)
class SweepAxes:
    k_sm_total: tuple[int, ...] = ()
    sms_per_dc: tuple[Fraction, ...] = ()
    bandwidth: tuple[ChannelBandwidth, ...] = ()
    modulation: tuple[Modulation, ...] = ()

    def is_empty(self) -> bool:
        return not (self.k_sm_total or self.sms_per_dc or self.bandwidth or self.modulation)


@dataclass(frozen=True)
class SimulationBlock:
    duration: Fraction = Fraction(3600)
    background_occupancy: float = 0.0
    background_mode: LoadMode = LoadMode.DETERMINISTIC_STRIPE
    seed: int = 0
    stagger: StaggerPolicy = StaggerPolicy.UNIFORM

    def load_model(self, seed: int | None = None) -> BackgroundLoadModel:
        return BackgroundLoadModel(
            self.background_occupancy, self.seed if seed is None else seed, self.background_mode
        )


@dataclass(frozen=True)
class ScenarioFile:
    architectures: tuple[Architecture, ...]
    k_sm_total: int
    sms_per_dc: Fraction | None = None
    k_dc_total: Fraction | None = None
    l_sm_bits: Fraction = Fraction(cm.DEFAULT_L_SM_BITS)
    t_sm: Fraction = Fraction(cm.DEFAULT_T_SM)
    t_dc: Fraction = Fraction(cm.DEFAULT_T_DC)
    t_sm_sched: Fraction = Fraction(cm.DEFAULT_T_SM_SCHED)
    t_service: Fraction = Fraction(cm.DEFAULT_T_SERVICE)
    n_tti: int = cm.DEFAULT_N_TTI
    bandwidth: ChannelBandwidth = ChannelBandwidth.BW_10
    tdd_configuration: int = 1
    eta_mode: EtaMode = EtaMode.TABLE_REPRODUCTION
    modulation: Modulation = Modulation.QPSK
    i_tbs_override: dict = field(default_factory=dict)
    sweep: SweepAxes = field(default_factory=SweepAxes)
    simulation: SimulationBlock | None = None

    @property
    def tdd(self) -> TddUplinkShare:
        return TddUplinkShare.from_configuration(self.tdd_configuration, self.eta_mode)

    @property
    def service(self) -> cm.ServiceParams:
        return cm.ServiceParams(t_service=self.t_service, n_tti=self.n_tti)

    def mcs(self, modulation: Modulation | None = None) -> McsScheme:
        mod = modulation or self.modulation
        return McsScheme.for_modulation(mod, self.i_tbs_override.get(mod))

    def flat(self) -> cm.FlatScenario:
        return cm.FlatScenario(self.k_sm_total, self.l_sm_bits, self.t_sm)

    def grouped(self) -> cm.GroupedScenario:
        kw = dict(l_sm_bits=self.l_sm_bits, t_dc=self.t_dc, t_sm_sched=self.t_sm_sched)
        if self.k_dc_total is not None:
            return cm.GroupedScenario(self.k_sm_total, self.k_dc_total, **kw)
        if self.sms_per_dc is None:
            raise InvalidConfigurationError("grouped architecture needs sms_per_dc or k_dc_total")
        return cm.GroupedScenario.with_group_size(self.k_sm_total, self.sms_per_dc, **kw)


def expand_sweep(sf: ScenarioFile) -> list[ScenarioFile]:
    """One scenario per point of the sweep grid, in K, SMs/DC, bandwidth, modulation order."""
    sw = sf.sweep
    ks = sw.k_sm_total or (sf.k_sm_total,)
    sizes = sw.sms_per_dc or (None,)
    bws = sw.bandwidth or (sf.bandwidth,)
    mods = sw.modulation or (sf.modulation,)
    out = []
    for k, s, bw, mod in itertools.product(ks, sizes, bws, mods):
        point = replace(sf, k_sm_total=k, bandwidth=bw, modulation=mod, sweep=SweepAxes())
        if s is not None:
            point = replace(point, sms_per_dc=s, k_dc_total=None)
        out.append(point)
    return out


_TOP_KEYS = {
    "architecture", "k_sm_total", "sms_per_dc", "k_dc_total", "message_size", "t_sm", "t_dc",
    "t_sm_sched", "t_service", "n_tti", "bandwidth_mhz", "tdd_configuration", "eta_mode",
    "modulation", "mcs_override", "sweep", "simulation",
}
_SWEEP_KEYS = {"k_sm_total", "sms_per_dc", "bandwidth_mhz", "modulation"}
_SIM_KEYS = {"duration", "background_occupancy", "background_mode", "seed", "stagger"}


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    for key in table:
        if key not in allowed:
            name = f"{where}.{key}" if where else key
            raise ScenarioError(f"unknown key {key!r} in scenario{' [' + where + ']' if where else ''}", field=name)


def _field(name, fn, value):
    try:
        return fn(value)
    except ScenarioError:
        raise
    except (InvalidConfigurationError, ValueError, TypeError, ZeroDivisionError) as exc:
        raise ScenarioError(f"{name}: {exc}", field=name) from None


def _duration(v):
    if not isinstance(v, str):
        raise InvalidConfigurationError(f"{v!r} needs an explicit unit, e.g. '15 min' or '900 s'")
    return parse_duration(v)


def _size(v):
    if not isinstance(v, str):
        raise InvalidConfigurationError(f"{v!r} needs an explicit unit, e.g. '100 byte'")
    return parse_size_bits(v)


def _count(v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise InvalidConfigurationError(f"expected a non-negative integer, got {v!r}")
    return v


def _positive(v):
    if isinstance(v, bool):
        raise InvalidConfigurationError(f"expected a number, got {v!r}")
    x = exact(v)
    if x <= 0:
        raise InvalidConfigurationError(f"must be positive, got {v!r}")
    return x


def _enum(cls):
    def conv(v):
        if not isinstance(v, str):
            raise InvalidConfigurationError(f"expected a string, got {v!r}")
        for m in cls:
            if v.lower() == m.value.lower() or v.upper() == m.name:
                return m
        raise InvalidConfigurationError(f"{v!r} not one of {[m.value for m in cls]}")

    return conv


def _list(v, conv):
    if not isinstance(v, list):
        raise InvalidConfigurationError(f"expected a list, got {v!r}")
    return tuple(conv(x) for x in v)


def _line_of(exc) -> int | None:
    line = getattr(exc, "lineno", None)
    if line is None:
        m = re.search(r"line (\d+)", str(exc))
        line = int(m.group(1)) if m else None
    return line


def parse_scenario(text: str) -> ScenarioFile:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = _line_of(exc)
        raise ScenarioError(f"syntax error at line {line}: {exc}", line=line) from None

    _reject_unknown(raw, _TOP_KEYS, "")
    if "k_sm_total" not in raw:
        raise ScenarioError("missing required key 'k_sm_total'", field="k_sm_total")
    kw = {"k_sm_total": _field("k_sm_total", _count, raw["k_sm_total"])}

    if "sms_per_dc" in raw and "k_dc_total" in raw:
        raise ScenarioError("give either sms_per_dc or k_dc_total, not both", field="k_dc_total")
    if "sms_per_dc" in raw:
        kw["sms_per_dc"] = _field("sms_per_dc", _positive, raw["sms_per_dc"])
    if "k_dc_total" in raw:
        kw["k_dc_total"] = _field("k_dc_total", _positive, raw["k_dc_total"])

    if "architecture" in raw:
        arch = raw["architecture"]
        conv = _enum(Architecture)
        archs = _field("architecture", lambda v: _list(v, conv) if isinstance(v, list) else (conv(v),), arch)
        if not archs:
            raise ScenarioError("architecture list is empty", field="architecture")
    else:
        grouped = "sms_per_dc" in kw or "k_dc_total" in kw
        archs = (Architecture.GROUPED,) if grouped else (Architecture.FLAT,)
    kw["architectures"] = tuple(sorted(set(archs), key=lambda a: a.value))

    simple = {
        "message_size": ("l_sm_bits", _size),
        "t_sm": ("t_sm", _duration),
        "t_dc": ("t_dc", _duration),
        "t_sm_sched": ("t_sm_sched", _duration),
        "t_service": ("t_service", _duration),
        "n_tti": ("n_tti", _count),
        "bandwidth_mhz": ("bandwidth", ChannelBandwidth.from_mhz),
        "tdd_configuration": ("tdd_configuration", _count),
        "eta_mode": ("eta_mode", _enum(EtaMode)),
        "modulation": ("modulation", Modulation.parse),
    }
    for key, (attr, conv) in simple.items():
        if key in raw:
            kw[attr] = _field(key, conv, raw[key])

    if "mcs_override" in raw:
        over = raw["mcs_override"]
        if not isinstance(over, dict):
            raise ScenarioError("mcs_override must be a table", field="mcs_override")
        kw["i_tbs_override"] = {
            _field(f"mcs_override.{k}", Modulation.parse, k): _field(f"mcs_override.{k}", _count, v)
            for k, v in over.items()
        }

    if "sweep" in raw:
        sw = raw["sweep"]
        if not isinstance(sw, dict):
            raise ScenarioError("sweep must be a table", field="sweep")
        _reject_unknown(sw, _SWEEP_KEYS, "sweep")
        kw["sweep"] = SweepAxes(
            k_sm_total=_field("sweep.k_sm_total", lambda v: _list(v, _count), sw.get("k_sm_total", [])),
            sms_per_dc=_field("sweep.sms_per_dc", lambda v: _list(v, _positive), sw.get("sms_per_dc", [])),
            bandwidth=_field(
                "sweep.bandwidth_mhz", lambda v: _list(v, ChannelBandwidth.from_mhz), sw.get("bandwidth_mhz", [])
            ),
            modulation=_field("sweep.modulation", lambda v: _list(v, Modulation.parse), sw.get("modulation", [])),
        )

    if "simulation" in raw:
        sim = raw["simulation"]
        if not isinstance(sim, dict):
            raise ScenarioError("simulation must be a table", field="simulation")
        _reject_unknown(sim, _SIM_KEYS, "simulation")
        skw = {}
        if "duration" in sim:
            skw["duration"] = _field("simulation.duration", _duration, sim["duration"])
        if "background_occupancy" in sim:
            skw["background_occupancy"] = _field(
                "simulation.background_occupancy", lambda v: float(exact(v)), sim["background_occupancy"]
            )
        if "background_mode" in sim:
            skw["background_mode"] = _field("simulation.background_mode", _enum(LoadMode), sim["background_mode"])
        if "seed" in sim:
            skw["seed"] = _field("simulation.seed", _count, sim["seed"])
        if "stagger" in sim:
            skw["stagger"] = _field("simulation.stagger", _enum(StaggerPolicy), sim["stagger"])
        kw["simulation"] = _field("simulation", lambda s: SimulationBlock(**s), skw)
        if not 0 <= kw["simulation"].background_occupancy <= 1:
            raise ScenarioError("background_occupancy must lie in [0, 1]", field="simulation.background_occupancy")

    sf = ScenarioFile(**kw)
    _validate(sf)
    return sf


def _validate(sf: ScenarioFile) -> None:
    if sf.t_sm_sched < sf.t_dc:
        raise ScenarioError(
            f"t_sm_sched ({format_duration(sf.t_sm_sched)}) must not be shorter than t_dc ({format_duration(sf.t_dc)})",
            field="t_sm_sched",
        )
    if Architecture.GROUPED in sf.architectures and sf.sms_per_dc is None and sf.k_dc_total is None:
        if not sf.sweep.sms_per_dc:
            raise ScenarioError("grouped architecture needs sms_per_dc or k_dc_total", field="sms_per_dc")
    if sf.tdd_configuration not in range(7):
        raise ScenarioError("tdd_configuration must be 0..6", field="tdd_configuration")
    _field("t_service", lambda _: sf.service, None)
    for mod in set(sf.i_tbs_override) | {sf.modulation}:
        _field(f"mcs_override.{mod.value}", lambda m: sf.mcs(m), mod)


def dump_scenario(sf: ScenarioFile) -> str:
    """Canonical TOML text for a scenario (all defaults written out)."""

    def num(x: Fraction):
        return int(x) if x.denominator == 1 else float(x)

    doc = {
        "architecture": [a.value for a in sf.architectures],
        "k_sm_total": sf.k_sm_total,
    }
    if sf.sms_per_dc is not None:
        doc["sms_per_dc"] = num(sf.sms_per_dc)
    if sf.k_dc_total is not None:
        doc["k_dc_total"] = num(sf.k_dc_total)
    bits = sf.l_sm_bits
    doc["message_size"] = f"{_fmt_number(bits / 8)} byte" if bits % 8 == 0 else f"{_fmt_number(bits)} bit"
    for key in ("t_sm", "t_dc", "t_sm_sched", "t_service"):
        doc[key] = format_duration(getattr(sf, key))
    doc.update(
        n_tti=sf.n_tti,
        bandwidth_mhz=num(sf.bandwidth.value),
        tdd_configuration=sf.tdd_configuration,
        eta_mode=sf.eta_mode.value,
        modulation=sf.modulation.value,
    )
    if sf.i_tbs_override:
        doc["mcs_override"] = {m.value: i for m, i in sorted(sf.i_tbs_override.items(), key=lambda kv: kv[0].value)}
    if not sf.sweep.is_empty():
        sw = {}
        if sf.sweep.k_sm_total:
            sw["k_sm_total"] = list(sf.sweep.k_sm_total)
        if sf.sweep.sms_per_dc:
            sw["sms_per_dc"] = [num(x) for x in sf.sweep.sms_per_dc]
        if sf.sweep.bandwidth:
            sw["bandwidth_mhz"] = [num(b.value) for b in sf.sweep.bandwidth]
        if sf.sweep.modulation:
            sw["modulation"] = [m.value for m in sf.sweep.modulation]
        doc["sweep"] = sw
    if sf.simulation is not None:
        s = sf.simulation
        doc["simulation"] = {
            "duration": format_duration(s.duration),
            "background_occupancy": s.background_occupancy,
            "background_mode": s.background_mode.value,
            "seed": s.seed,
            "stagger": s.stagger.value,
        }
    return tomli_w.dumps(doc)


# ---------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class ResultRow:
    architecture: Architecture
    k_sm_total: int
    sms_per_dc: Fraction | None
    bandwidth: ChannelBandwidth
    modulation: Modulation
    n_rb_per_node: int
    gamma: Fraction
    brr: Fraction | None = None

    @property
    def overload(self) -> bool:
        return self.gamma > 1

    @property
    def column(self) -> str:
        if self.architecture is Architecture.FLAT:
            return "flat"
        return _fmt_number(self.sms_per_dc)


def _fmt_number(x) -> str:
    x = exact(x)
    if x.denominator == 1:
        return str(x.numerator)
    return format(Decimal(x.numerator) / Decimal(x.denominator), "f")


def _fixed(x: Fraction, places: int) -> str:
    d = Decimal(x.numerator) / Decimal(x.denominator)
    return str(d.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def round_percent(percent: Fraction, decimals: int, mode: str = "two-stage") -> Decimal:
    """Round a percentage for display.

    ``half-up`` rounds once. ``two-stage`` first rounds half-up to one extra
    decimal and then to ``decimals``; the reference tables were produced
    this way (e.g. 0.04449 -> 0.0445 -> 0.045).
    """
    exact_value = Decimal(percent.numerator) / Decimal(percent.denominator)
    q = Decimal(1).scaleb(-decimals)
    if mode == "half-up":
        return exact_value.quantize(q, rounding=ROUND_HALF_UP)
    if mode != "two-stage":
        raise ValueError(f"unknown rounding mode {mode!r}")
    first = exact_value.quantize(q / 10, rounding=ROUND_HALF_UP)
    return first.quantize(q, rounding=ROUND_HALF_UP)


def format_cell(gamma: Fraction, decimals: int, mode: str = "two-stage") -> str:
    if gamma > 1:
        return "-"
    return str(round_percent(gamma * 100, decimals, mode))


CSV_COLUMNS = [
    "architecture", "K_total", "sms_per_dc", "bw_mhz", "modulation",
    "n_rb_per_node", "gamma_percent", "brr", "overload_flag",
]


def emit_results(rows, fmt: str = "csv", decimals: int = 3) -> str:
    rows = list(rows)
    fmt = fmt.lower()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([
                r.architecture.value,
                r.k_sm_total,
                "" if r.sms_per_dc is None else _fmt_number(r.sms_per_dc),
                r.bandwidth.label,
                r.modulation.value,
                r.n_rb_per_node,
                _fixed(r.gamma * 100, 6),
                "" if r.brr is None else _fixed(r.brr, 6),
                str(r.overload).lower(),
            ])
        return buf.getvalue()
    if fmt == "table":
        return format_table(rows, decimals)
    raise ValueError(f"unknown format {fmt!r}")


def _column_key(col: str):
    return (0, 0) if col == "flat" else (1, Fraction(col))


def format_table(rows, decimals: int = 3, cells: dict | None = None, mode: str = "two-stage") -> str:
    """Aligned text in the reference layout: bandwidth rows, modulation groups.

    ``cells`` may map (bw, modulation, column) to pre-rendered strings.
    """
    rows = list(rows)
    rendered = dict(cells or {})
    for r in rows:
        rendered.setdefault((r.bandwidth, r.modulation, r.column), format_cell(r.gamma, decimals, mode))
    bws = sorted({k[0] for k in rendered}, key=lambda b: b.value)
    mods = [m for m in Modulation if any(k[1] is m for k in rendered)]
    cols = sorted({k[2] for k in rendered}, key=_column_key)
    group = [f"{c.upper() if c == 'flat' else 'SMs/DC=' + c}" for c in cols]
    header1 = ["System BW"] + [m.value if i == 0 else "" for m in mods for i in range(len(cols))]
    header2 = [""] + group * len(mods)
    body = []
    for bw in bws:
        line = [f"{bw.label} MHz ({rb_capacity(bw)} RBs)"]
        for m in mods:
            for c in cols:
                line.append(rendered.get((bw, m, c), ""))
        body.append(line)
    table = [header1, header2] + body
    if not body:
        table = [header1, header2]
    widths = [max(len(row[i]) for row in table) for i in range(len(header1))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, widths)).rstrip() for row in table) + "\n"


# ---------------------------------------------------------------------------
# Golden data

GOLDEN_FILES = {"table2": "golden_table2.csv", "table3": "golden_table3.csv"}
CORRECTIONS_FILE = "golden_corrections.csv"
ENUMERATION_FILE = "mcs_enumeration.csv"
TABLE_K = {"table2": 1550, "table3": 18000}
TABLE_DECIMALS = {"table2": 3, "table3": 2}


@dataclass(frozen=True)
class GoldenCell:
    table: str
    bandwidth: ChannelBandwidth
    modulation: Modulation
    column: str
    printed: str

    @property
    def is_overload(self) -> bool:
        return self.printed == "-"

    @property
    def value(self) -> Decimal | None:
        return None if self.is_overload else Decimal(self.printed)

    @property
    def decimals(self) -> int:
        if self.is_overload:
            return TABLE_DECIMALS[self.table]
        return -self.value.as_tuple().exponent

    @property
    def key(self):
        return (self.table, self.bandwidth, self.modulation, self.column)


def _data_rows(name, data_dir):
    text = data_path(name, data_dir).read_text()
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def load_golden(table: str, data_dir=None, verify: bool = True) -> list[GoldenCell]:
    name = GOLDEN_FILES[table]
    if verify:
        verify_checksum(name, data_dir)
    return [
        GoldenCell(
            table,
            ChannelBandwidth.from_mhz(r["bw_mhz"]),
            Modulation.parse(r["modulation"]),
            r["column"],
            r["printed"].strip(),
        )
        for r in _data_rows(name, data_dir)
    ]


@dataclass(frozen=True)
class Correction:
    table: str
    bandwidth: ChannelBandwidth
    modulation: Modulation
    column: str
    printed: str
    corrected: str
    reason: str

    @property
    def key(self):
        return (self.table, self.bandwidth, self.modulation, self.column)


def load_corrections(data_dir=None, verify: bool = True) -> list[Correction]:
    if verify:
        verify_checksum(CORRECTIONS_FILE, data_dir)
    return [
        Correction(
            r["table"],
            ChannelBandwidth.from_mhz(r["bw_mhz"]),
            Modulation.parse(r["modulation"]),
            r["column"],
            r["printed"],
            r["corrected"],
            r["reason"],
        )
        for r in _data_rows(CORRECTIONS_FILE, data_dir)
    ]


def corrected_golden(table: str, data_dir=None) -> list[GoldenCell]:
    """Verbatim table with the correction overlay applied."""
    fixes = {c.key: c.corrected for c in load_corrections(data_dir)}
    return [replace(c, printed=fixes.get(c.key, c.printed)) for c in load_golden(table, data_dir)]


def inverse_bandwidth_outliers(cells: list[GoldenCell]) -> list[GoldenCell]:
    """Printed cells that break the 1/N_RB scaling shared by their column.

    Within one (modulation, column) group the product value * N_RB must be
    the same for every bandwidth. Each printed value is widened by the
    worst-case error of the two-stage rounding (0.5 + 0.05 units in the last
    digit); cells outside the largest mutually consistent subset are returned.
    """
    flagged = []
    groups = itertools.groupby(
        sorted((c for c in cells if not c.is_overload), key=lambda c: (c.table, c.modulation.value, c.column)),
        key=lambda c: (c.table, c.modulation.value, c.column),
    )
    for _, members in groups:
        members = list(members)
        if len(members) < 3:
            continue
        spans = []
        for c in members:
            unit = Decimal("0.55").scaleb(-c.decimals)
            n = rb_capacity(c.bandwidth)
            spans.append(((c.value - unit) * n, (c.value + unit) * n))
        points = [p for span in spans for p in span]
        depth = {p: sum(lo <= p <= hi for lo, hi in spans) for p in points}
        best = max(depth.values())
        if best < 2:
            continue
        consistent = set()
        for p, d in depth.items():
            if d == best:
                consistent |= {i for i, (lo, hi) in enumerate(spans) if lo <= p <= hi}
        flagged += [c for i, c in enumerate(members) if i not in consistent]
    return flagged


def read_enumeration(data_dir=None, verify: bool = True) -> list[dict]:
    if verify:
        verify_checksum(ENUMERATION_FILE, data_dir)
    return _data_rows(ENUMERATION_FILE, data_dir)

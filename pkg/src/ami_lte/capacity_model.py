"""Closed-form uplink bandwidth consumption for flat and grouped AMI deployments.

All arithmetic is exact (``fractions.Fraction``); callers convert to float
only for display.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .errors import InfeasibleError, InvalidConfigurationError, UndefinedRatioError
from .lte_phy import (
    TTI,
    ChannelBandwidth,
    McsScheme,
    TbsTable,
    TddUplinkShare,
    default_tbs_table,
    rb_capacity,
    uplink_share,
)
from .units import exact

# Reference configuration
DEFAULT_L_SM_BITS = 800  # 100 byte
DEFAULT_T_SM = 900  # 15 min
DEFAULT_T_DC = 900
DEFAULT_T_SM_SCHED = 3600  # 60 min
DEFAULT_T_SERVICE = 1
DEFAULT_N_TTI = 8
SLOTS_PER_TTI = 2


@dataclass(frozen=True)
class ServiceParams:
    t_service: Fraction = Fraction(DEFAULT_T_SERVICE)
    n_tti: int = DEFAULT_N_TTI
    n_ts_tti: int = SLOTS_PER_TTI
    tti: Fraction = TTI

    def __post_init__(self):
        object.__setattr__(self, "t_service", exact(self.t_service))
        object.__setattr__(self, "tti", exact(self.tti))
        if self.t_service <= 0:
            raise InvalidConfigurationError("t_service must be positive")
        if self.n_tti < 1:
            raise InvalidConfigurationError("n_tti must be at least 1")
        if self.n_ts_tti != SLOTS_PER_TTI:
            raise InvalidConfigurationError("an LTE TTI has exactly 2 slots")
        if self.tti != TTI:
            raise InvalidConfigurationError("TTI is fixed at 1 ms")
        if self.n_tti * self.tti > self.t_service:
            raise InvalidConfigurationError("n_tti TTIs do not fit inside t_service")


@dataclass(frozen=True)
class FlatScenario:
    k_sm_total: int
    l_sm_bits: Fraction = Fraction(DEFAULT_L_SM_BITS)
    t_sm: Fraction = Fraction(DEFAULT_T_SM)

    def __post_init__(self):
        object.__setattr__(self, "l_sm_bits", exact(self.l_sm_bits))
        object.__setattr__(self, "t_sm", exact(self.t_sm))
        if self.k_sm_total < 0:
            raise InvalidConfigurationError("k_sm_total must be non-negative")
        if self.l_sm_bits <= 0:
            raise InvalidConfigurationError("l_sm_bits must be positive")
        if self.t_sm <= 0:
            raise InvalidConfigurationError("t_sm must be positive")


@dataclass(frozen=True)
class GroupedScenario:
    """Meters aggregated behind data concentrators.

    ``k_dc_total`` is real-valued on purpose: 1550 meters at 20 per DC is
    77.5 concentrators in the closed form.
    """

    k_sm_total: int
    k_dc_total: Fraction
    l_sm_bits: Fraction = Fraction(DEFAULT_L_SM_BITS)
    t_dc: Fraction = Fraction(DEFAULT_T_DC)
    t_sm_sched: Fraction = Fraction(DEFAULT_T_SM_SCHED)

    def __post_init__(self):
        for name in ("k_dc_total", "l_sm_bits", "t_dc", "t_sm_sched"):
            object.__setattr__(self, name, exact(getattr(self, name)))
        if self.k_sm_total < 0:
            raise InvalidConfigurationError("k_sm_total must be non-negative")
        if self.k_dc_total <= 0:
            raise InvalidConfigurationError("k_dc_total must be positive")
        if self.l_sm_bits <= 0:
            raise InvalidConfigurationError("l_sm_bits must be positive")
        if self.t_dc <= 0:
            raise InvalidConfigurationError("t_dc must be positive")
        if self.t_sm_sched < self.t_dc:
            raise InvalidConfigurationError(
                "t_sm_sched must not be shorter than t_dc (a meter cannot report more often than its DC is polled)"
            )

    @classmethod
    def with_group_size(cls, k_sm_total: int, sms_per_dc, **kw) -> GroupedScenario:
        sms_per_dc = exact(sms_per_dc)
        if sms_per_dc <= 0:
            raise InvalidConfigurationError("sms_per_dc must be positive")
        return cls(k_sm_total, Fraction(k_sm_total) / sms_per_dc, **kw)

    @property
    def k_sm_dc(self) -> Fraction:
        return Fraction(self.k_sm_total) / self.k_dc_total


@dataclass(frozen=True)
class CapacityReport:
    n_rb_per_node: int
    payload_bits: Fraction
    gamma: Fraction
    sharing_count: Fraction
    details: dict = field(default_factory=dict, compare=False)

    @property
    def overload(self) -> bool:
        return self.gamma > 1

    @property
    def gamma_percent(self) -> Fraction:
        return self.gamma * 100


def required_rate(payload_bits, sp: ServiceParams) -> Fraction:
    payload_bits = exact(payload_bits)
    if payload_bits <= 0:
        raise InvalidConfigurationError("payload must be positive")
    return payload_bits / (sp.n_tti * sp.tti * sp.n_ts_tti)


def min_rbs(payload_bits, mcs: McsScheme, sp: ServiceParams, table: TbsTable | None = None) -> int:
    """Smallest RB count whose rate meets the payload's required rate."""
    table = table or default_tbs_table()
    need = required_rate(payload_bits, sp) * TTI  # bits per TTI
    n = table.smallest_prb(mcs.i_tbs, need)
    if n is None:
        raise InfeasibleError(
            f"{exact(payload_bits)} bits needs more than {table.max_prb} RBs at {mcs}"
        )
    return n


def readings_per_poll(g: GroupedScenario) -> Fraction:
    return g.k_sm_dc * g.t_dc / g.t_sm_sched


def dc_payload_bits(g: GroupedScenario) -> Fraction:
    return g.l_sm_bits * (1 + readings_per_poll(g))


def _consumption(nodes, n_rb, period, bw, tdd, sp) -> Fraction:
    return (
        Fraction(nodes) ** 2 * n_rb * sp.t_service**2
        / (rb_capacity(bw) * Fraction(period) ** 2 * uplink_share(tdd))
    )


def flat_report(
    f: FlatScenario,
    bw: ChannelBandwidth,
    tdd: TddUplinkShare,
    mcs: McsScheme,
    sp: ServiceParams,
    table: TbsTable | None = None,
) -> CapacityReport:
    n_rb = min_rbs(f.l_sm_bits, mcs, sp, table)
    return CapacityReport(
        n_rb_per_node=n_rb,
        payload_bits=f.l_sm_bits,
        gamma=_consumption(f.k_sm_total, n_rb, f.t_sm, bw, tdd, sp),
        sharing_count=f.t_sm / sp.t_service,
    )


def grouped_report(
    g: GroupedScenario,
    bw: ChannelBandwidth,
    tdd: TddUplinkShare,
    mcs: McsScheme,
    sp: ServiceParams,
    table: TbsTable | None = None,
) -> CapacityReport:
    payload = dc_payload_bits(g)
    n_rb = min_rbs(payload, mcs, sp, table)
    return CapacityReport(
        n_rb_per_node=n_rb,
        payload_bits=payload,
        gamma=_consumption(g.k_dc_total, n_rb, g.t_dc, bw, tdd, sp),
        sharing_count=g.t_dc / sp.t_service,
        details={"readings_per_poll": readings_per_poll(g)},
    )


def gamma_flat(f, bw, tdd, mcs, sp, table=None) -> Fraction:
    return flat_report(f, bw, tdd, mcs, sp, table).gamma


def gamma_grouped(g, bw, tdd, mcs, sp, table=None) -> Fraction:
    return grouped_report(g, bw, tdd, mcs, sp, table).gamma


def brr(
    f: FlatScenario,
    g: GroupedScenario,
    mcs_flat: McsScheme,
    mcs_grouped: McsScheme,
    sp: ServiceParams,
    table: TbsTable | None = None,
) -> Fraction:
    """Grouped over flat consumption.

    Uses the bandwidth-free form N_DC * T_SM^2 / (K_SM_DC^2 * N_SM * T_DC^2);
    channel bandwidth and uplink share cancel out of the ratio.
    """
    if f.k_sm_total != g.k_sm_total:
        raise InvalidConfigurationError(
            f"flat ({f.k_sm_total}) and grouped ({g.k_sm_total}) meter counts differ"
        )
    if f.k_sm_total == 0:
        raise UndefinedRatioError("flat consumption is zero; BRR undefined")
    n_sm = min_rbs(f.l_sm_bits, mcs_flat, sp, table)
    n_dc = min_rbs(dc_payload_bits(g), mcs_grouped, sp, table)
    return n_dc * f.t_sm**2 / (g.k_sm_dc**2 * n_sm * g.t_dc**2)


def brr_equal_periods(g: GroupedScenario, mcs_flat, mcs_grouped, sp, table=None) -> Fraction:
    """Reduced form valid when meters and concentrators share period and TTI budget."""
    if g.k_sm_total == 0:
        raise UndefinedRatioError("no meters; BRR undefined")
    n_sm = min_rbs(g.l_sm_bits, mcs_flat, sp, table)
    n_dc = min_rbs(dc_payload_bits(g), mcs_grouped, sp, table)
    return Fraction(n_dc) / (g.k_sm_dc**2 * n_sm)

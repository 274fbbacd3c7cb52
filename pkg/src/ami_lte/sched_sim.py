"""TTI-granular simulation of AMI uplink scheduling.

The grouped schedule polls each data concentrator every ``t_dc``; a poll
produces one job carrying the TC message plus the next round-robin slice of
member readings. A job needs ``n_rb`` RBs on each of ``n_tti`` uplink TTIs.
RBs come from the free pool first and, failing that, are taken from mobile
users (marked SHARED).

The clock is an integer TTI counter. ``Simulation.advance_tti`` steps one TTI
at a time; ``Simulation.run`` jumps over idle TTIs but executes the same
per-TTI logic, so both paths yield identical metrics.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .capacity_model import FlatScenario, GroupedScenario, ServiceParams, min_rbs
from .errors import InfeasibleError, InvalidConfigurationError, SchedulingError
from .lte_phy import (
    ChannelBandwidth,
    McsScheme,
    TbsTable,
    TddUplinkShare,
    rb_capacity,
    uplink_share,
)
from .units import exact


class Slot(enum.IntEnum):
    FREE = 0
    UE = 1
    AMI = 2
    SHARED = 3


_FREE = bytes([Slot.FREE])
_UE = bytes([Slot.UE])


class LoadMode(enum.Enum):
    DETERMINISTIC_STRIPE = "stripe"
    SEEDED_RANDOM = "random"


class StaggerPolicy(enum.Enum):
    UNIFORM = "uniform"
    ALL_AT_ONCE = "all-at-once"


@dataclass(frozen=True)
class BackgroundLoadModel:
    """Mobile-user RB occupancy applied to every uplink TTI before AMI allocation."""

    occupancy: float = 0.0
    seed: int = 0
    mode: LoadMode = LoadMode.DETERMINISTIC_STRIPE

    def __post_init__(self):
        if not 0.0 <= self.occupancy <= 1.0:
            raise InvalidConfigurationError("background occupancy must lie in [0, 1]")

    def apply(self, slots: bytearray, tti_index: int) -> None:
        n = len(slots)
        if self.occupancy == 0.0 or n == 0:
            return
        if self.mode is LoadMode.DETERMINISTIC_STRIPE:
            # contiguous block rotating one RB per TTI; nested in occupancy
            m = math.floor(self.occupancy * n + 0.5)
            start = tti_index % n
            for k in range(m):
                slots[(start + k) % n] = Slot.UE
        else:
            # per-TTI stream keyed on (seed, tti) so visiting order is irrelevant
            u = np.random.default_rng([self.seed, tti_index]).random(n)
            for i in np.flatnonzero(u < self.occupancy):
                slots[i] = Slot.UE


@dataclass
class RbGridTti:
    tti_index: int
    is_uplink: bool
    slots: bytearray

    @classmethod
    def empty(cls, tti_index: int, is_uplink: bool, n_rb: int) -> RbGridTti:
        return cls(tti_index, is_uplink, bytearray(n_rb))

    def count(self, state: Slot) -> int:
        return self.slots.count(bytes([state]))

    def marks(self) -> list[Slot]:
        return [Slot(s) for s in self.slots]


class AllocationKind(enum.Enum):
    DIRECT = "direct"
    SHARED = "shared"
    MIXED = "mixed"


@dataclass(frozen=True)
class Allocation:
    kind: AllocationKind
    free_ids: tuple[int, ...]
    shared_ids: tuple[int, ...]

    @property
    def rb_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.free_ids + self.shared_ids))


class GridFullError(SchedulingError):
    """Not enough FREE plus UE slots left in this TTI."""


def _lowest(slots: bytearray, mark: bytes, k: int) -> list[int]:
    found, pos = [], 0
    while len(found) < k:
        i = slots.find(mark, pos)
        if i < 0:
            break
        found.append(i)
        pos = i + 1
    return found


def allocate_for_dc(grid: RbGridTti, n_rb_needed: int) -> Allocation:
    """Reserve ``n_rb_needed`` RBs in ``grid``, lowest index first.

    Free RBs are used first; any shortfall is taken from UE-held RBs, which
    become SHARED. The grid is left untouched if neither suffices.
    """
    if not grid.is_uplink:
        raise SchedulingError(f"TTI {grid.tti_index} is not an uplink subframe")
    if n_rb_needed < 1:
        raise SchedulingError("need at least one RB")
    if n_rb_needed > len(grid.slots):
        raise InfeasibleError(f"{n_rb_needed} RBs requested from a {len(grid.slots)}-RB grid")
    free = _lowest(grid.slots, _FREE, n_rb_needed)
    shared = []
    if len(free) < n_rb_needed:
        shared = _lowest(grid.slots, _UE, n_rb_needed - len(free))
        if len(free) + len(shared) < n_rb_needed:
            raise GridFullError(
                f"TTI {grid.tti_index}: only {len(free) + len(shared)} of {n_rb_needed} RBs available"
            )
    for i in free:
        grid.slots[i] = Slot.AMI
    for i in shared:
        grid.slots[i] = Slot.SHARED
    if not shared:
        kind = AllocationKind.DIRECT
    elif not free:
        kind = AllocationKind.SHARED
    else:
        kind = AllocationKind.MIXED
    return Allocation(kind, tuple(free), tuple(shared))


@dataclass
class Concentrator:
    id: int
    members: tuple[int, ...]
    rr_cursor: int = 0
    credit: Fraction = Fraction(0)


@dataclass
class TransmissionJob:
    node_id: int
    poll_tti: int
    payload_bits: Fraction
    readings: tuple[int, ...]
    n_rb: int = 0
    remaining: int = 0


@dataclass
class Deployment:
    scenario: GroupedScenario
    concentrators: list[Concentrator]
    tdd: TddUplinkShare
    bw: ChannelBandwidth
    mcs: McsScheme
    sp: ServiceParams
    stagger: tuple[Fraction, ...]
    load: BackgroundLoadModel = field(default_factory=BackgroundLoadModel)


def to_ttis(seconds, tti: Fraction, what: str) -> int:
    n = exact(seconds) / tti
    if n.denominator != 1:
        raise InvalidConfigurationError(f"{what} = {exact(seconds)} s is not a whole number of TTIs")
    return int(n)


def _group_sizes(k_total: int, k_dc: Fraction) -> list[int]:
    n_dc = math.ceil(k_dc)
    if n_dc == 0 or k_total == 0:
        return []
    if k_dc.denominator != 1:
        # fractional concentrator count: full groups plus one partial group
        size = round(Fraction(k_total) / k_dc)
        rest = k_total - (n_dc - 1) * size
        if size > 0 and 0 < rest <= size:
            return [size] * (n_dc - 1) + [rest]
    base, extra = divmod(k_total, n_dc)
    return [base + 1] * extra + [base] * (n_dc - extra)


def build_deployment(
    g: GroupedScenario,
    bw: ChannelBandwidth,
    tdd: TddUplinkShare,
    mcs: McsScheme,
    sp: ServiceParams,
    load: BackgroundLoadModel | None = None,
    seed: int | None = None,
    stagger: StaggerPolicy = StaggerPolicy.UNIFORM,
) -> Deployment:
    """Partition meters into ceil(k_dc_total) groups and stagger their polls."""
    load = load or BackgroundLoadModel()
    if seed is not None:
        load = replace(load, seed=seed)
    sizes = _group_sizes(g.k_sm_total, g.k_dc_total) if g.k_sm_total else []
    dcs, next_sm = [], 0
    for i, size in enumerate(sizes):
        dcs.append(Concentrator(i, tuple(range(next_sm, next_sm + size))))
        next_sm += size
    t_dc_tti = to_ttis(g.t_dc, sp.tti, "t_dc")
    if stagger is StaggerPolicy.UNIFORM:
        offsets = tuple(Fraction(i * t_dc_tti // len(dcs)) * sp.tti for i in range(len(dcs)))
    else:
        offsets = tuple(Fraction(0) for _ in dcs)
    return Deployment(g, dcs, tdd, bw, mcs, sp, offsets, load)


def poll_dc(dc: Concentrator, now, g: GroupedScenario) -> TransmissionJob:
    """Build the job a concentrator sends when polled at ``now`` (seconds).

    Readings per poll are fractional in general; a credit accumulator carries
    the remainder so the long-run mean matches the closed form exactly.
    """
    m = len(dc.members)
    ratio = Fraction(m) * g.t_dc / g.t_sm_sched
    total = ratio + dc.credit
    r = math.floor(total)
    dc.credit = total - r
    picked = tuple(dc.members[(dc.rr_cursor + k) % m] for k in range(r)) if m else ()
    if m:
        dc.rr_cursor = (dc.rr_cursor + r) % m
    return TransmissionJob(
        node_id=dc.id,
        poll_tti=int(exact(now) * 1000),
        payload_bits=g.l_sm_bits * (1 + r),
        readings=picked,
    )


@dataclass(frozen=True)
class LatencySummary:
    count: int
    min: float
    mean: float
    p50: float
    p95: float
    max: float

    @classmethod
    def from_ttis(cls, values: list[int], tti: Fraction) -> LatencySummary:
        if not values:
            return cls(0, 0.0, 0.0, 0.0, 0.0, 0.0)
        v = sorted(values)
        t = float(tti)

        def rank(q):
            return v[max(0, math.ceil(q * len(v)) - 1)] * t

        return cls(len(v), v[0] * t, float(Fraction(sum(v), len(v)) * tti), rank(0.5), rank(0.95), v[-1] * t)


@dataclass(frozen=True)
class SimMetrics:
    mean_uplink_rb_utilization_ami: float
    gamma_equivalent: float
    per_transmission_latency: LatencySummary
    coverage: dict[int, tuple[int, ...]]
    shared_rb_tti_count: int
    displaced_ue_rb_ttis: int
    deadline_misses: int
    transmissions: int
    completed: int
    unserved_transmissions: int
    blocked_job_ttis: int
    tc_counts: dict[int, int]
    overload: bool
    overload_reason: str = ""

    def coverage_exact(self, warmup_windows: int = 0) -> bool:
        """Every meter delivered exactly once in each complete window after warm-up."""
        return all(all(c == 1 for c in counts[warmup_windows:]) for counts in self.coverage.values())

    def summary_rows(self) -> list[tuple[str, str]]:
        lat = self.per_transmission_latency
        return [
            ("transmissions", str(self.transmissions)),
            ("completed", str(self.completed)),
            ("unserved_transmissions", str(self.unserved_transmissions)),
            ("mean_uplink_rb_utilization_ami", f"{self.mean_uplink_rb_utilization_ami:.9f}"),
            ("gamma_equivalent", f"{self.gamma_equivalent:.9f}"),
            ("latency_count", str(lat.count)),
            ("latency_min_s", f"{lat.min:.3f}"),
            ("latency_mean_s", f"{lat.mean:.6f}"),
            ("latency_p50_s", f"{lat.p50:.3f}"),
            ("latency_p95_s", f"{lat.p95:.3f}"),
            ("latency_max_s", f"{lat.max:.3f}"),
            ("deadline_misses", str(self.deadline_misses)),
            ("shared_rb_tti_count", str(self.shared_rb_tti_count)),
            ("displaced_ue_rb_ttis", str(self.displaced_ue_rb_ttis)),
            ("blocked_job_ttis", str(self.blocked_job_ttis)),
            ("coverage_meters", str(len(self.coverage))),
            ("coverage_exact", str(self.coverage_exact()).lower()),
            ("overload", str(self.overload).lower()),
            ("overload_reason", self.overload_reason),
        ]


@dataclass
class _Node:
    id: int
    phase_tti: int
    period_tti: int
    make_job: object  # callable(now_seconds) -> TransmissionJob


class Simulation:
    """Mutable simulation state. One instance per run; not thread-safe."""

    def __init__(
        self,
        nodes: list[_Node],
        *,
        bw: ChannelBandwidth,
        tdd: TddUplinkShare,
        mcs: McsScheme,
        sp: ServiceParams,
        load: BackgroundLoadModel,
        duration,
        coverage_window,
        abort_on_infeasible: bool,
        table: TbsTable | None = None,
    ):
        self.bw, self.tdd, self.mcs, self.sp, self.load = bw, tdd, mcs, sp, load
        self.table = table
        self.n_rb_cell = rb_capacity(bw)
        self.pattern = [c == "U" for c in tdd.subframe_pattern()]
        frame = len(self.pattern)
        self._next_ul = [
            next((k for k in range(frame) if self.pattern[(i + k) % frame]), None) for i in range(frame)
        ]
        self.duration = exact(duration)
        self.duration_tti = to_ttis(self.duration, sp.tti, "duration")
        self.cutoff_tti = self.duration_tti + to_ttis(sp.t_service, sp.tti, "t_service")
        self.window_tti = to_ttis(coverage_window, sp.tti, "coverage window")
        self.n_windows = self.duration_tti // self.window_tti
        self.abort_on_infeasible = abort_on_infeasible
        self.nodes = nodes
        self.tti_index = 0
        self._heap = [(n.phase_tti, n.id) for n in nodes if n.phase_tti < self.duration_tti]
        heapq.heapify(self._heap)
        self._by_id = {n.id: n for n in nodes}
        self._rb_cache: dict[Fraction, int] = {}
        self.active: list[TransmissionJob] = []
        self.last_activity = 0
        # accumulators
        self.ami_rb_ttis = 0
        self.shared_rb_tti_count = 0
        self.displaced = 0
        self.blocked = 0
        self.latencies: list[int] = []
        self.deadline_misses = 0
        self.polled_jobs = 0
        self.polled_rbs = 0
        self.unserved = 0
        self.infeasible_note = ""
        self.tc_counts = {n.id: 0 for n in nodes}
        self.coverage: dict[int, list[int]] = {}

    def register_meters(self, meter_ids):
        for sm in meter_ids:
            self.coverage[sm] = [0] * self.n_windows

    def is_uplink(self, t: int) -> bool:
        return self.pattern[t % len(self.pattern)]

    def _rbs_for(self, job: TransmissionJob) -> int:
        n = self._rb_cache.get(job.payload_bits)
        if n is None:
            try:
                n = min_rbs(job.payload_bits, self.mcs, self.sp, self.table)
            except InfeasibleError:
                n = math.inf
            self._rb_cache[job.payload_bits] = n
        return n

    def _start_polls(self, t: int) -> None:
        while self._heap and self._heap[0][0] == t:
            _, node_id = heapq.heappop(self._heap)
            node = self._by_id[node_id]
            job = node.make_job(t * self.sp.tti)
            nxt = t + node.period_tti
            if nxt < self.duration_tti:
                heapq.heappush(self._heap, (nxt, node_id))
            n = self._rbs_for(job)
            if n > self.n_rb_cell:
                msg = (
                    f"node {node_id}: {job.payload_bits} bits needs "
                    f"{'more than 100' if n == math.inf else n} RBs at {self.mcs}, "
                    f"but {self.bw} offers {self.n_rb_cell}"
                )
                if self.abort_on_infeasible:
                    raise InfeasibleError(f"DC {node_id} cannot be scheduled: {msg}")
                self.unserved += 1
                self.infeasible_note = msg
                continue
            job.n_rb = n
            job.remaining = self.sp.n_tti
            self.polled_jobs += 1
            self.polled_rbs += n
            self.active.append(job)

    def _make_grid(self, t: int) -> RbGridTti:
        up = self.is_uplink(t)
        grid = RbGridTti.empty(t, up, self.n_rb_cell)
        if up:
            self.load.apply(grid.slots, t)
        return grid

    def _serve(self, grid: RbGridTti) -> None:
        t = grid.tti_index
        still = []
        for job in self.active:
            avail = self.n_rb_cell - grid.slots.count(bytes([Slot.AMI])) - grid.slots.count(bytes([Slot.SHARED]))
            if avail < job.n_rb:
                self.blocked += 1
                still.append(job)
                continue
            alloc = allocate_for_dc(grid, job.n_rb)
            self.ami_rb_ttis += job.n_rb
            if alloc.shared_ids:
                self.shared_rb_tti_count += 1
                self.displaced += len(alloc.shared_ids)
            job.remaining -= 1
            if job.remaining:
                still.append(job)
            else:
                self._complete(job, t)
        self.active = still
        self.last_activity = t + 1

    def _complete(self, job: TransmissionJob, t: int) -> None:
        lat = t + 1 - job.poll_tti
        self.latencies.append(lat)
        if lat * self.sp.tti > self.sp.t_service:
            self.deadline_misses += 1
        self.tc_counts[job.node_id] += 1
        w = job.poll_tti // self.window_tti
        if w < self.n_windows:
            for sm in job.readings:
                self.coverage[sm][w] += 1

    def _step(self, t: int) -> RbGridTti:
        self._start_polls(t)
        grid = self._make_grid(t)
        if grid.is_uplink and self.active:
            self._serve(grid)
        return grid

    def advance_tti(self) -> RbGridTti:
        """Process the current TTI and return its final grid."""
        grid = self._step(self.tti_index)
        self.tti_index += 1
        return grid

    @property
    def finished(self) -> bool:
        return (not self._heap and not self.active) or self.tti_index >= self.cutoff_tti

    def _next_event(self) -> int | None:
        t = self.tti_index
        cand = self._heap[0][0] if self._heap else None
        if self.active:
            k = self._next_ul[t % len(self.pattern)]
            if k is not None:
                cand = t + k if cand is None else min(cand, t + k)
        return cand

    def run(self) -> SimMetrics:
        while True:
            t = self._next_event()
            if t is None or t >= self.cutoff_tti:
                break
            self.tti_index = t
            self.advance_tti()
        return self.metrics()

    def _uplink_ttis_before(self, h: int) -> int:
        frame = len(self.pattern)
        full, part = divmod(h, frame)
        return full * sum(self.pattern) + sum(self.pattern[:part])

    def metrics(self) -> SimMetrics:
        unserved = self.unserved + len(self.active)
        horizon = max(self.duration_tti, self.last_activity)
        ul = self._uplink_ttis_before(horizon)
        util = self.ami_rb_ttis / (ul * self.n_rb_cell) if ul else 0.0
        if self.polled_jobs:
            rate = Fraction(self.polled_jobs) * self.sp.t_service / self.duration
            mean_rb = Fraction(self.polled_rbs, self.polled_jobs)
            gamma_eq = rate**2 * mean_rb / (self.n_rb_cell * uplink_share(self.tdd))
        else:
            gamma_eq = Fraction(0)
        reasons = []
        if gamma_eq >= 1:
            reasons.append(f"modelled consumption {float(gamma_eq) * 100:.2f}% of uplink bandwidth")
        if unserved:
            reasons.append(f"{unserved} transmissions unserved")
            if self.infeasible_note:
                reasons.append(self.infeasible_note)
        return SimMetrics(
            mean_uplink_rb_utilization_ami=util,
            gamma_equivalent=float(gamma_eq),
            per_transmission_latency=LatencySummary.from_ttis(self.latencies, self.sp.tti),
            coverage={sm: tuple(c) for sm, c in self.coverage.items()},
            shared_rb_tti_count=self.shared_rb_tti_count,
            displaced_ue_rb_ttis=self.displaced,
            deadline_misses=self.deadline_misses,
            transmissions=self.polled_jobs + self.unserved,
            completed=len(self.latencies),
            unserved_transmissions=unserved,
            blocked_job_ttis=self.blocked,
            tc_counts=dict(self.tc_counts),
            overload=bool(reasons),
            overload_reason="; ".join(reasons),
        )


def grouped_simulation(dep: Deployment, duration, table: TbsTable | None = None) -> Simulation:
    g, sp = dep.scenario, dep.sp
    period = to_ttis(g.t_dc, sp.tti, "t_dc")
    nodes = []
    for dc, offset in zip(dep.concentrators, dep.stagger):
        phase = to_ttis(offset, sp.tti, "phase offset")
        if not 0 <= phase < period:
            raise InvalidConfigurationError(f"DC {dc.id} phase offset outside [0, t_dc)")
        nodes.append(_Node(dc.id, phase, period, lambda now, dc=dc: poll_dc(dc, now, g)))
    sim = Simulation(
        nodes,
        bw=dep.bw,
        tdd=dep.tdd,
        mcs=dep.mcs,
        sp=sp,
        load=dep.load,
        duration=duration,
        coverage_window=g.t_sm_sched,
        abort_on_infeasible=True,
        table=table,
    )
    sim.register_meters(sm for dc in dep.concentrators for sm in dc.members)
    return sim


def run(dep: Deployment, duration, table: TbsTable | None = None) -> SimMetrics:
    """Simulate a grouped deployment for ``duration`` seconds."""
    if dep.concentrators and exact(duration) < dep.scenario.t_sm_sched:
        raise InvalidConfigurationError("duration must cover at least one t_sm_sched window")
    return grouped_simulation(dep, duration, table).run()


def flat_simulation(
    f: FlatScenario,
    bw: ChannelBandwidth,
    tdd: TddUplinkShare,
    mcs: McsScheme,
    sp: ServiceParams,
    load: BackgroundLoadModel | None = None,
    duration=None,
    stagger: StaggerPolicy = StaggerPolicy.UNIFORM,
    table: TbsTable | None = None,
) -> Simulation:
    period = to_ttis(f.t_sm, sp.tti, "t_sm")
    k = f.k_sm_total
    nodes = []
    for i in range(k):
        phase = i * period // k if stagger is StaggerPolicy.UNIFORM else 0
        job = lambda now, i=i: TransmissionJob(i, int(exact(now) * 1000), f.l_sm_bits, (i,))  # noqa: E731
        nodes.append(_Node(i, phase, period, job))
    sim = Simulation(
        nodes,
        bw=bw,
        tdd=tdd,
        mcs=mcs,
        sp=sp,
        load=load or BackgroundLoadModel(),
        duration=f.t_sm if duration is None else duration,
        coverage_window=f.t_sm,
        abort_on_infeasible=False,
        table=table,
    )
    sim.register_meters(range(k))
    return sim


def simulate_flat(f, bw, tdd, mcs, sp, load=None, duration=None, stagger=StaggerPolicy.UNIFORM, table=None) -> SimMetrics:
    """Every meter is its own transmitter with period ``t_sm``.

    Capacity shortfall is reported through ``overload`` and
    ``unserved_transmissions`` instead of aborting.
    """
    return flat_simulation(f, bw, tdd, mcs, sp, load, duration, stagger, table).run()

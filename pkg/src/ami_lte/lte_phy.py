"""Static LTE uplink resource model.

Channel bandwidth to RB count, TDD uplink share, MCS to transport block
size and the resulting per-TTI rate. Everything here is immutable.
"""

from __future__ import annotations

import bisect
import csv
import enum
import functools
import hashlib
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .errors import ChecksumError, InvalidConfigurationError, TbsLookupError

TTI = Fraction(1, 1000)  # seconds
MAX_PRB = 100
TBS_FILE = "tbs_ul.csv"
CHECKSUM_FILE = "SHA256SUMS"


class ChannelBandwidth(enum.Enum):
    BW_1_4 = Fraction(7, 5)
    BW_3 = Fraction(3)
    BW_5 = Fraction(5)
    BW_10 = Fraction(10)
    BW_15 = Fraction(15)
    BW_20 = Fraction(20)

    @classmethod
    def from_mhz(cls, mhz) -> ChannelBandwidth:
        from .units import exact

        try:
            return cls(exact(mhz))
        except (ValueError, TypeError):
            raise InvalidConfigurationError(
                f"unsupported channel bandwidth {mhz!r} MHz; choose one of 1.4, 3, 5, 10, 15, 20"
            ) from None

    @property
    def mhz(self) -> float:
        return float(self.value)

    @property
    def label(self) -> str:
        return f"{self.mhz:g}"

    def __str__(self):
        return f"{self.label} MHz"


_RB_CAPACITY = {
    ChannelBandwidth.BW_1_4: 6,
    ChannelBandwidth.BW_3: 15,
    ChannelBandwidth.BW_5: 25,
    ChannelBandwidth.BW_10: 50,
    ChannelBandwidth.BW_15: 75,
    ChannelBandwidth.BW_20: 100,
}


def rb_capacity(bw: ChannelBandwidth) -> int:
    """Number of uplink resource blocks offered by a channel bandwidth."""
    return _RB_CAPACITY[bw]


class EtaMode(enum.Enum):
    # uplink subframes over all subframes in the frame
    AS_PRINTED = "as-printed"
    # uplink subframes over non-special subframes; the reference tables use this
    TABLE_REPRODUCTION = "table-reproduction"


# 36.211 Table 4.2-2, 5 ms and 10 ms switch-point configurations.
TDD_CONFIGURATIONS = {
    0: "DSUUUDSUUU",
    1: "DSUUDDSUUD",
    2: "DSUDDDSUDD",
    3: "DSUUUDDDDD",
    4: "DSUUDDDDDD",
    5: "DSUDDDDDDD",
    6: "DSUUUDSUUD",
}


@dataclass(frozen=True)
class TddUplinkShare:
    n_sf_uplink: int = 4
    n_sf_frame: int = 10
    n_sf_special: int = 2
    accounting_mode: EtaMode = EtaMode.TABLE_REPRODUCTION
    pattern: str | None = None

    def __post_init__(self):
        if self.n_sf_uplink < 1 or self.n_sf_frame < 1 or self.n_sf_special < 0:
            raise InvalidConfigurationError(f"invalid subframe counts in {self}")
        if self.n_sf_uplink + self.n_sf_special > self.n_sf_frame:
            raise InvalidConfigurationError(
                "uplink + special subframes exceed the frame length "
                f"({self.n_sf_uplink} + {self.n_sf_special} > {self.n_sf_frame})"
            )
        if self.pattern is not None:
            p = self.pattern
            if (
                len(p) != self.n_sf_frame
                or set(p) - set("DSU")
                or p.count("U") != self.n_sf_uplink
                or p.count("S") != self.n_sf_special
            ):
                raise InvalidConfigurationError(
                    f"subframe pattern {p!r} disagrees with the subframe counts"
                )

    @classmethod
    def from_configuration(cls, index: int, mode: EtaMode = EtaMode.TABLE_REPRODUCTION):
        try:
            p = TDD_CONFIGURATIONS[index]
        except KeyError:
            raise InvalidConfigurationError(f"unknown TDD configuration {index}") from None
        return cls(p.count("U"), len(p), p.count("S"), mode, p)

    def with_mode(self, mode: EtaMode) -> TddUplinkShare:
        return TddUplinkShare(self.n_sf_uplink, self.n_sf_frame, self.n_sf_special, mode, self.pattern)

    def subframe_pattern(self) -> str:
        """The repeating D/S/U pattern used by the simulator."""
        if self.pattern is not None:
            return self.pattern
        if self.n_sf_frame == 10:
            for p in TDD_CONFIGURATIONS.values():
                if p.count("U") == self.n_sf_uplink and p.count("S") == self.n_sf_special:
                    return p
        # no standard match: specials first, then uplink, downlink fills the rest
        n_dl = self.n_sf_frame - self.n_sf_uplink - self.n_sf_special
        return "S" * self.n_sf_special + "U" * self.n_sf_uplink + "D" * n_dl


def uplink_share(tdd: TddUplinkShare) -> Fraction:
    if tdd.accounting_mode is EtaMode.AS_PRINTED:
        return Fraction(tdd.n_sf_uplink, tdd.n_sf_frame)
    usable = tdd.n_sf_frame - tdd.n_sf_special
    if usable == 0:
        raise InvalidConfigurationError("frame has no non-special subframes")
    return Fraction(tdd.n_sf_uplink, usable)


class Modulation(enum.Enum):
    QPSK = "QPSK"
    QAM16 = "16QAM"
    QAM64 = "64QAM"

    @classmethod
    def parse(cls, text: str) -> Modulation:
        key = text.strip().upper().replace(" ", "").replace("-", "")
        for m in cls:
            if key in (m.value, m.name):
                return m
        raise InvalidConfigurationError(f"unknown modulation {text!r}")

    @property
    def order(self) -> int:
        return {Modulation.QPSK: 2, Modulation.QAM16: 4, Modulation.QAM64: 6}[self]


# 36.213 Table 8.6.1-1 (PUSCH), I_MCS 0..28: (modulation, I_TBS)
UPLINK_MCS_TABLE = tuple(
    [(Modulation.QPSK, i) for i in range(0, 11)]
    + [(Modulation.QAM16, i - 1) for i in range(11, 21)]
    + [(Modulation.QAM64, i - 2) for i in range(21, 29)]
)

# QPSK index is fixed by the reference setup (I_MCS = 9). The others are the
# lowest TBS indices that reproduce the reference 16QAM/64QAM cells; see
# data/mcs_enumeration.csv for every satisfying index.
DEFAULT_I_TBS = {Modulation.QPSK: 9, Modulation.QAM16: 14, Modulation.QAM64: 23}


@dataclass(frozen=True)
class McsScheme:
    modulation: Modulation
    i_mcs: int
    i_tbs: int

    def __post_init__(self):
        if not 0 <= self.i_mcs < len(UPLINK_MCS_TABLE):
            raise InvalidConfigurationError(f"I_MCS {self.i_mcs} outside 0..28")
        if UPLINK_MCS_TABLE[self.i_mcs] != (self.modulation, self.i_tbs):
            raise InvalidConfigurationError(
                f"I_MCS {self.i_mcs} maps to {UPLINK_MCS_TABLE[self.i_mcs]}, "
                f"not ({self.modulation.value}, I_TBS {self.i_tbs})"
            )

    @classmethod
    def from_i_mcs(cls, i_mcs: int) -> McsScheme:
        if not 0 <= i_mcs < len(UPLINK_MCS_TABLE):
            raise InvalidConfigurationError(f"I_MCS {i_mcs} outside 0..28")
        mod, i_tbs = UPLINK_MCS_TABLE[i_mcs]
        return cls(mod, i_mcs, i_tbs)

    @classmethod
    def for_modulation(cls, modulation: Modulation, i_tbs: int | None = None) -> McsScheme:
        """Scheme for a modulation, using the package default TBS index unless given."""
        if i_tbs is None:
            i_tbs = DEFAULT_I_TBS[modulation]
        for i_mcs, entry in enumerate(UPLINK_MCS_TABLE):
            if entry == (modulation, i_tbs):
                return cls(modulation, i_mcs, i_tbs)
        raise InvalidConfigurationError(
            f"I_TBS {i_tbs} is not reachable with {modulation.value} on the uplink"
        )

    def __str__(self):
        return f"{self.modulation.value}(I_MCS={self.i_mcs}, I_TBS={self.i_tbs})"


def data_path(name: str, data_dir: Path | str | None = None) -> Path:
    if data_dir is not None:
        return Path(data_dir) / name
    return Path(str(resources.files("ami_lte") / "data" / name))


def read_checksums(data_dir=None) -> dict[str, str]:
    sums = {}
    for line in data_path(CHECKSUM_FILE, data_dir).read_text().splitlines():
        if line.strip():
            digest, name = line.split(maxsplit=1)
            sums[name.lstrip("*")] = digest
    return sums


def verify_checksum(name: str, data_dir=None) -> None:
    expected = read_checksums(data_dir).get(name)
    if expected is None:
        raise ChecksumError(name, "<no entry>", "<unchecked>")
    actual = hashlib.sha256(data_path(name, data_dir).read_bytes()).hexdigest()
    if actual != expected:
        raise ChecksumError(name, expected, actual)


class TbsTable:
    """Transport block sizes in bits per TTI, indexed by (I_TBS, N_PRB)."""

    def __init__(self, rows: dict[int, tuple[int, ...]]):
        if not rows:
            raise InvalidConfigurationError("empty TBS table")
        widths = {len(r) for r in rows.values()}
        if len(widths) != 1:
            raise InvalidConfigurationError("ragged TBS table")
        self._rows = {i: tuple(r) for i, r in rows.items()}
        self.max_prb = widths.pop()

    @classmethod
    def load(cls, path=None, *, verify=True, data_dir=None) -> TbsTable:
        if path is None:
            if verify:
                verify_checksum(TBS_FILE, data_dir)
            path = data_path(TBS_FILE, data_dir)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            prbs = [int(h) for h in header[1:]]
            if prbs != list(range(1, len(prbs) + 1)):
                raise InvalidConfigurationError(f"{path}: PRB columns must be 1..N in order")
            rows = {int(r[0]): tuple(int(v) for v in r[1:]) for r in reader if r}
        return cls(rows)

    @property
    def tbs_indices(self) -> list[int]:
        return sorted(self._rows)

    def row(self, i_tbs: int) -> tuple[int, ...]:
        try:
            return self._rows[i_tbs]
        except KeyError:
            raise TbsLookupError(f"I_TBS {i_tbs} not in table") from None

    def bits(self, i_tbs: int, n_prb: int) -> int:
        row = self.row(i_tbs)
        if not 1 <= n_prb <= len(row):
            raise TbsLookupError(f"N_PRB {n_prb} outside 1..{len(row)}")
        return row[n_prb - 1]

    def smallest_prb(self, i_tbs: int, min_bits) -> int | None:
        """Fewest PRBs whose block holds at least ``min_bits``; None if none does."""
        row = self.row(i_tbs)
        n = bisect.bisect_left(row, min_bits)
        return n + 1 if n < len(row) else None


@functools.lru_cache(maxsize=1)
def default_tbs_table() -> TbsTable:
    return TbsTable.load()


def transport_block_bits(mcs: McsScheme, n_prb: int, table: TbsTable | None = None) -> int:
    return (table or default_tbs_table()).bits(mcs.i_tbs, n_prb)


def achievable_rate(mcs: McsScheme, n_prb: int, table: TbsTable | None = None) -> Fraction:
    """Bits per second carried by ``n_prb`` RBs, one transport block per TTI."""
    return Fraction(transport_block_bits(mcs, n_prb, table)) / TTI

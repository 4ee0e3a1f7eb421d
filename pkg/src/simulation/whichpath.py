"""
Which-path detection
Sends emission events through the biprism split onto two timestamping detectors
"""
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, NamedTuple, Optional

import numpy as np
import pandas as pd

from src.simulation.emitter import EmissionEvents, Origin
from src.utils.errors import ParameterDomainError
from src.utils.logging_config import get_logger

logger = get_logger("whichpath")


class Channel(IntEnum):
    PATH1 = 1
    PATH2 = 2


class TimestampRecord(NamedTuple):
    channel: Channel
    time: float
    pulse_index: int


@dataclass(frozen=True)
class TimestampStream:
    """Two-channel photodetection record against the trigger clock"""
    channel: np.ndarray
    time_ns: np.ndarray
    pulse_index: np.ndarray
    n_triggers: int
    rep_period_ns: float
    seed: Optional[int] = None
    # origin is simulation truth, kept for diagnostics only (not serialized)
    origin: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.time_ns.size and self.time_ns[0] < 0:
            raise ParameterDomainError("timestamps must be >= 0")
        if self.time_ns.size > 1 and np.any(np.diff(self.time_ns) < 0):
            raise ParameterDomainError("timestamps must be sorted by time")

    def __len__(self) -> int:
        return int(self.time_ns.size)

    def __iter__(self) -> Iterator[TimestampRecord]:
        for channel, time, pulse in zip(self.channel, self.time_ns, self.pulse_index):
            yield TimestampRecord(Channel(int(channel)), float(time), int(pulse))

    @property
    def total_time_s(self) -> float:
        return self.n_triggers * self.rep_period_ns * 1e-9

    @property
    def n1(self) -> int:
        return int(np.count_nonzero(self.channel == Channel.PATH1))

    @property
    def n2(self) -> int:
        return int(np.count_nonzero(self.channel == Channel.PATH2))

    def times_on(self, channel: Channel) -> np.ndarray:
        return self.time_ns[self.channel == channel]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "channel": self.channel.astype(np.int64),
            "time_ns": self.time_ns,
            "pulse_index": self.pulse_index,
        })

    def metadata(self) -> dict:
        return {
            "n_triggers": self.n_triggers,
            "rep_period_ns": self.rep_period_ns,
            "total_time_s": self.total_time_s,
            "seed": self.seed,
        }


def split_and_detect(events: EmissionEvents, split_ratio: float = 0.5, rng_seed: int = 0) -> TimestampStream:
    """Assign every event to Path1 with probability split_ratio, else Path2

    One record per event; the assignment never looks at the event origin.
    """
    if not 0.0 <= split_ratio <= 1.0:
        raise ParameterDomainError(f"split_ratio must lie in [0, 1], got {split_ratio}")

    rng = np.random.default_rng(rng_seed)
    to_path1 = rng.random(len(events)) < split_ratio
    channel = np.where(to_path1, Channel.PATH1, Channel.PATH2).astype(np.int8)

    stream = TimestampStream(
        channel=channel,
        time_ns=events.time_ns,
        pulse_index=events.pulse_index,
        n_triggers=events.n_pulses,
        rep_period_ns=events.rep_period_ns,
        seed=rng_seed,
        origin=events.origin,
    )
    logger.debug(f"Split {len(events):,} events: N1={stream.n1:,}, N2={stream.n2:,}")
    return stream


def origin_contingency(stream: TimestampStream) -> np.ndarray:
    """2x2 table of (origin, channel) counts; rows Signal/Background, columns Path1/Path2"""
    if stream.origin is None:
        raise ParameterDomainError("stream carries no origin labels")
    table = np.zeros((2, 2), dtype=np.int64)
    for row, origin in enumerate((Origin.SIGNAL, Origin.BACKGROUND)):
        mask = stream.origin == origin
        table[row, 0] = np.count_nonzero(stream.channel[mask] == Channel.PATH1)
        table[row, 1] = np.count_nonzero(stream.channel[mask] == Channel.PATH2)
    return table

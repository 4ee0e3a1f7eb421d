"""
Start-stop delay histogram between consecutive detections on opposite paths
"""
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from src.simulation.whichpath import Channel, TimestampStream
from src.utils.errors import ParameterDomainError
from src.utils.logging_config import get_logger

logger = get_logger("coincidence")

MIN_WINDOW_PERIODS = 5


@dataclass(frozen=True)
class DelayHistogram:
    """Counts per delay bin; bin centres are integer multiples of bin_width_ns"""
    bin_width_ns: float
    centers_ns: np.ndarray
    counts: np.ndarray
    rep_period_ns: float

    def __post_init__(self):
        if self.centers_ns.shape != self.counts.shape:
            raise ParameterDomainError("centers and counts must have the same length")
        if np.any(self.counts < 0):
            raise ParameterDomainError("histogram counts must be >= 0")

    def __len__(self) -> int:
        return int(self.counts.size)

    @property
    def bins(self) -> Iterator[Tuple[float, int]]:
        return zip(self.centers_ns.tolist(), self.counts.tolist())

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def half_span_ns(self) -> float:
        return float(self.centers_ns[-1]) if self.counts.size else 0.0

    @property
    def periods_in_window(self) -> int:
        """Largest k such that the peak at k*T_rep lies completely inside the histogram"""
        return int(math.floor((self.half_span_ns - self.rep_period_ns / 2) / self.rep_period_ns + 1e-9))

    def merge(self, other: "DelayHistogram") -> "DelayHistogram":
        """Sum of two histograms with identical binning"""
        if (
            not math.isclose(self.bin_width_ns, other.bin_width_ns)
            or not math.isclose(self.rep_period_ns, other.rep_period_ns)
            or self.centers_ns.shape != other.centers_ns.shape
            or not np.allclose(self.centers_ns, other.centers_ns)
        ):
            raise ParameterDomainError("cannot merge histograms with different binning")
        return DelayHistogram(
            bin_width_ns=self.bin_width_ns,
            centers_ns=self.centers_ns,
            counts=self.counts + other.counts,
            rep_period_ns=self.rep_period_ns,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"delay_ns": self.centers_ns, "count": self.counts})


def aligned_bin_width(bin_width_ns: float, rep_period_ns: float) -> float:
    """Closest bin width that divides the repetition period exactly"""
    if not bin_width_ns > 0:
        raise ParameterDomainError(f"bin width must be positive, got {bin_width_ns} ns")
    n_bins = max(1, round(rep_period_ns / bin_width_ns))
    aligned = rep_period_ns / n_bins
    if not math.isclose(aligned, bin_width_ns, rel_tol=1e-9):
        logger.warning(
            f"Bin width {bin_width_ns} ns adjusted to {aligned:.6f} ns so that T_rep = {rep_period_ns} ns "
            f"falls on a bin centre"
        )
    return aligned


def empty_histogram(bin_width_ns: float, window_ns: float, rep_period_ns: float) -> DelayHistogram:
    width = aligned_bin_width(bin_width_ns, rep_period_ns)
    half_bins = int(math.ceil((window_ns + rep_period_ns / 2) / width - 1e-9))
    centers = np.arange(-half_bins, half_bins + 1) * width
    return DelayHistogram(
        bin_width_ns=width,
        centers_ns=centers,
        counts=np.zeros(centers.size, dtype=np.int64),
        rep_period_ns=rep_period_ns,
    )


def start_stop_delays(channel: np.ndarray, time_ns: np.ndarray) -> np.ndarray:
    """Signed delay from every detection to the next detection on the other path

    Positive when the start is on Path1, negative when it is on Path2. Starts
    with no later detection on the other path contribute nothing.
    """
    delays = []
    for start, sign in ((Channel.PATH1, 1.0), (Channel.PATH2, -1.0)):
        start_idx = np.flatnonzero(channel == start)
        stop_idx = np.flatnonzero(channel != start)
        nxt = np.searchsorted(stop_idx, start_idx, side="right")
        has_stop = nxt < stop_idx.size
        stops = stop_idx[nxt[has_stop]]
        delays.append(sign * (time_ns[stops] - time_ns[start_idx[has_stop]]))
    return np.concatenate(delays)


def delay_histogram(stream: TimestampStream, bin_width_ns: float = 2.0,
                    window_ns: Optional[float] = None) -> DelayHistogram:
    """Histogram of start-stop delays over +/-(window + T_rep/2)

    window_ns defaults to 5 repetition periods.
    """
    period = stream.rep_period_ns
    if window_ns is None:
        window_ns = MIN_WINDOW_PERIODS * period
    if 2 * window_ns < MIN_WINDOW_PERIODS * period:
        raise ParameterDomainError(
            f"window {window_ns} ns must cover at least {MIN_WINDOW_PERIODS} repetition periods in total"
        )

    hist = empty_histogram(bin_width_ns, window_ns, period)
    if len(stream) == 0:
        return hist

    delays = start_stop_delays(stream.channel, stream.time_ns)
    width = hist.bin_width_ns
    half_bins = (hist.counts.size - 1) // 2
    index = np.floor(delays / width + 0.5).astype(np.int64) + half_bins
    index = index[(index >= 0) & (index < hist.counts.size)]
    counts = np.bincount(index, minlength=hist.counts.size).astype(np.int64)

    logger.debug(f"Delay histogram: {delays.size:,} delays, {int(counts.sum()):,} inside the window")
    return DelayHistogram(
        bin_width_ns=width,
        centers_ns=hist.centers_ns,
        counts=counts,
        rep_period_ns=period,
    )

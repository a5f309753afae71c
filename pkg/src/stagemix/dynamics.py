"""Loss-curve stability analytics: windowed statistics, spike detection, transitions.

All windowed quantities slide over logged records in order, not over raw step
numbers, so irregular logging intervals shrink no window; `gap_report` makes
the irregularity visible instead. A window of size u ending at logged position
t covers positions t - u + 1 .. t inclusive. Its mean and population standard
deviation (divide by u) classify the newest point only: position t is a spike
when its loss lies strictly outside mean +/- 2 std of its own window. A trace
of T records therefore yields exactly T - u + 1 decisions.

The streaming RollingWindow and the batch window_stats run the same kernel on
identically ordered buffers, so their outputs are bit-identical, not merely
close. The kernel treats an all-equal window specially (std exactly 0.0, mean
exactly the shared value) so that float summation error cannot conjure a
nonzero threshold width out of a flat window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TraceError

DEFAULT_WINDOW = 50
SPIKE_SIGMA = 2.0

# Rows per kernel invocation; bounds the materialized chunk to ~32 MB of
# float64 regardless of window size.
_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True)
class LossTrace:
    """A logged training-loss series: per record a global step, stage index, loss."""

    steps: np.ndarray
    stages: np.ndarray
    losses: np.ndarray

    @classmethod
    def from_records(cls, records) -> "LossTrace":
        records = list(records)
        trace = cls(
            steps=np.array([r[0] for r in records], dtype=np.int64),
            stages=np.array([r[1] for r in records], dtype=np.int64),
            losses=np.array([r[2] for r in records], dtype=np.float64),
        )
        trace.validate()
        return trace

    def __len__(self) -> int:
        return len(self.steps)

    def validate(self) -> None:
        if len(self.steps) == 0:
            raise TraceError("loss trace is empty")
        if not (len(self.steps) == len(self.stages) == len(self.losses)):
            raise TraceError("loss trace arrays have mismatched lengths")
        diffs = np.diff(self.steps)
        if len(diffs) and diffs.min() <= 0:
            at = int(np.argmax(diffs <= 0))
            raise TraceError(
                f"steps must be strictly increasing; record {at + 1} has step"
                f" {int(self.steps[at + 1])} after {int(self.steps[at])}"
            )
        stage_diffs = np.diff(self.stages)
        if len(stage_diffs) and stage_diffs.min() < 0:
            at = int(np.argmax(stage_diffs < 0))
            raise TraceError(
                f"stages must be non-decreasing; record {at + 1} has stage"
                f" {int(self.stages[at + 1])} after {int(self.stages[at])}"
            )
        if self.stages.min() < 1:
            raise TraceError(f"stage indices must be >= 1, got {int(self.stages.min())}")
        if not np.isfinite(self.losses).all():
            at = int(np.argmin(np.isfinite(self.losses)))
            raise TraceError(f"loss at step {int(self.steps[at])} is not finite")

    def stage_list(self) -> list[int]:
        present = [int(self.stages[0])]
        for value in self.stages:
            if value != present[-1]:
                present.append(int(value))
        return present


def _window_mean_std(block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row mean and population std of a 2-D block, flat rows forced exact."""
    mean = block.mean(axis=1)
    centered = block - mean[:, None]
    std = np.sqrt((centered * centered).mean(axis=1))
    flat = block.max(axis=1) == block.min(axis=1)
    mean = np.where(flat, block[:, 0], mean)
    std = np.where(flat, 0.0, std)
    return mean, std


@dataclass(frozen=True)
class WindowStats:
    """Mean/std of every length-`window` window, labeled by window-end step."""

    window: int
    steps: np.ndarray
    means: np.ndarray
    stds: np.ndarray

    def __len__(self) -> int:
        return len(self.steps)


def _check_window(window: int, length: int, name: str = "window") -> None:
    if not isinstance(window, int) or isinstance(window, bool) or window < 1:
        raise ValueError(f"{name} must be a positive integer, got {window!r}")
    if window > length:
        raise ValueError(f"{name} {window} exceeds the trace length {length}")


def window_stats(trace: LossTrace, window: int = DEFAULT_WINDOW) -> WindowStats:
    """Batch windowed statistics, chunked so temporaries stay bounded."""
    _check_window(window, len(trace))
    view = np.lib.stride_tricks.sliding_window_view(trace.losses, window)
    rows = len(view)
    means = np.empty(rows, dtype=np.float64)
    stds = np.empty(rows, dtype=np.float64)
    chunk = max(1, _CHUNK_CELLS // window)
    for start in range(0, rows, chunk):
        stop = min(start + chunk, rows)
        means[start:stop], stds[start:stop] = _window_mean_std(view[start:stop])
    return WindowStats(window=window, steps=trace.steps[window - 1 :].copy(), means=means, stds=stds)


class RollingWindow:
    """Streaming counterpart of window_stats; outputs bit-identical values.

    Push values in logged order; once `window` values have arrived, each push
    updates mean/std for the window ending at that value. The buffer keeps
    chronological order so the kernel sums in exactly the batch order.
    """

    def __init__(self, window: int):
        if not isinstance(window, int) or isinstance(window, bool) or window < 1:
            raise ValueError(f"window must be a positive integer, got {window!r}")
        self.window = window
        self._buf = np.empty(window, dtype=np.float64)
        self._count = 0
        self.mean = None
        self.std = None

    @property
    def ready(self) -> bool:
        return self._count >= self.window

    def push(self, value: float) -> bool:
        if self._count < self.window:
            self._buf[self._count] = value
            self._count += 1
        else:
            self._buf[:-1] = self._buf[1:]
            self._buf[-1] = value
        if self.ready:
            mean, std = _window_mean_std(self._buf[None, :])
            self.mean = float(mean[0])
            self.std = float(std[0])
            return True
        return False


@dataclass(frozen=True)
class SpikeReport:
    """Spike decisions for every window of a trace."""

    window: int
    n_windows: int
    spike_steps: tuple[int, ...]
    frequency: float
    indicators: np.ndarray
    stats: WindowStats

    def as_dict(self) -> dict:
        return {
            "window": self.window,
            "windows_tested": self.n_windows,
            "spikes": len(self.spike_steps),
            "spike_steps": list(self.spike_steps),
            "spike_frequency": self.frequency,
        }


def detect_spikes(trace: LossTrace, window: int = DEFAULT_WINDOW) -> SpikeReport:
    """Flag every logged point lying strictly outside mean +/- 2 std of its window."""
    stats = window_stats(trace, window)
    tested = trace.losses[window - 1 :]
    width = SPIKE_SIGMA * stats.stds
    indicators = (tested > stats.means + width) | (tested < stats.means - width)
    spike_steps = tuple(int(s) for s in stats.steps[indicators])
    return SpikeReport(
        window=window,
        n_windows=len(stats),
        spike_steps=spike_steps,
        frequency=len(spike_steps) / len(stats),
        indicators=indicators,
        stats=stats,
    )


def spike_frequency(trace: LossTrace, window: int = DEFAULT_WINDOW) -> float:
    return detect_spikes(trace, window).frequency


def local_fluctuation(trace: LossTrace, window: int = DEFAULT_WINDOW) -> float:
    """Mean of the windowed std series: the "how noisy is this curve" scalar."""
    return float(window_stats(trace, window).stds.mean())


def global_std(trace: LossTrace) -> float:
    _, std = _window_mean_std(trace.losses[None, :])
    return float(std[0])


@dataclass(frozen=True)
class Transition:
    """One stage boundary, measured at the nearest logged records."""

    from_stage: int
    to_stage: int
    step_before: int
    step_after: int
    loss_before: float
    loss_after: float
    ratio: float


@dataclass(frozen=True)
class TransitionReport:
    transitions: tuple[Transition, ...]

    def max_abs_ratio(self) -> float:
        return max(abs(t.ratio) for t in self.transitions)

    def as_dict(self) -> dict:
        return {
            "transitions": [
                {
                    "from_stage": t.from_stage,
                    "to_stage": t.to_stage,
                    "step_before": t.step_before,
                    "step_after": t.step_after,
                    "loss_before": t.loss_before,
                    "loss_after": t.loss_after,
                    "ratio": t.ratio,
                }
                for t in self.transitions
            ],
            "max_abs_ratio": self.max_abs_ratio(),
        }


def stage_transition_ratio(trace: LossTrace) -> TransitionReport:
    """Relative loss change across each stage boundary.

    The boundary is measured at the last logged record of the earlier stage
    and the first logged record of the later one, so sparse logging widens the
    measurement gap rather than inventing values.
    """
    boundaries = np.flatnonzero(np.diff(trace.stages) != 0)
    if len(boundaries) == 0:
        raise ValueError("trace has a single stage; there is no transition to measure")
    transitions = []
    for i in boundaries:
        before = float(trace.losses[i])
        after = float(trace.losses[i + 1])
        if before == 0.0:
            raise ValueError(
                f"transition ratio undefined: loss at step {int(trace.steps[i])} is 0"
            )
        transitions.append(
            Transition(
                from_stage=int(trace.stages[i]),
                to_stage=int(trace.stages[i + 1]),
                step_before=int(trace.steps[i]),
                step_after=int(trace.steps[i + 1]),
                loss_before=before,
                loss_after=after,
                ratio=(after - before) / before,
            )
        )
    return TransitionReport(transitions=tuple(transitions))


@dataclass(frozen=True)
class GapReport:
    """Logging-interval regularity: windows ignore gaps, this reports them."""

    modal_spacing: int
    max_spacing: int
    irregular_count: int

    @property
    def regular(self) -> bool:
        return self.irregular_count == 0

    def as_dict(self) -> dict:
        return {
            "modal_spacing": self.modal_spacing,
            "max_spacing": self.max_spacing,
            "irregular_count": self.irregular_count,
            "regular": self.regular,
        }


def gap_report(trace: LossTrace) -> GapReport:
    diffs = np.diff(trace.steps)
    if len(diffs) == 0:
        return GapReport(modal_spacing=0, max_spacing=0, irregular_count=0)
    values, counts = np.unique(diffs, return_counts=True)
    modal = int(values[np.argmax(counts)])
    return GapReport(
        modal_spacing=modal,
        max_spacing=int(diffs.max()),
        irregular_count=int((diffs != modal).sum()),
    )


@dataclass(frozen=True)
class StabilitySummary:
    """The three stability indicators for one trace, plus their ingredients."""

    window: int
    spike_window: int
    loss_std: float
    global_loss_std: float
    spike_frequency: float
    n_windows: int
    n_spikes: int
    transition_stability: float | None
    transitions: tuple[Transition, ...]
    gaps: GapReport

    def as_dict(self) -> dict:
        return {
            "window": self.window,
            "spike_window": self.spike_window,
            "loss_std": self.loss_std,
            "global_loss_std": self.global_loss_std,
            "spike_frequency": self.spike_frequency,
            "windows_tested": self.n_windows,
            "spikes": self.n_spikes,
            "transition_stability": self.transition_stability,
            "transitions": TransitionReport(self.transitions).as_dict()["transitions"]
            if self.transitions
            else [],
            "gaps": self.gaps.as_dict(),
        }


def stability_summary(
    trace: LossTrace, window: int = DEFAULT_WINDOW, spike_window: int | None = None
) -> StabilitySummary:
    """Fluctuation, spike frequency, and transition stability in one pass.

    Fluctuation (loss std) is the mean windowed std; spike frequency uses its
    own window (same size by default); transition stability is the largest
    absolute relative loss change across a stage boundary, None for
    single-stage traces.
    """
    if spike_window is None:
        spike_window = window
    _check_window(window, len(trace))
    _check_window(spike_window, len(trace), name="spike window")
    fluctuation_stats = window_stats(trace, window)
    spikes = detect_spikes(trace, spike_window)
    if np.any(np.diff(trace.stages) != 0):
        transition_report = stage_transition_ratio(trace)
        transitions = transition_report.transitions
        stability = transition_report.max_abs_ratio()
    else:
        transitions = ()
        stability = None
    return StabilitySummary(
        window=window,
        spike_window=spike_window,
        loss_std=float(fluctuation_stats.stds.mean()),
        global_loss_std=global_std(trace),
        spike_frequency=spikes.frequency,
        n_windows=spikes.n_windows,
        n_spikes=len(spikes.spike_steps),
        transition_stability=stability,
        transitions=transitions,
        gaps=gap_report(trace),
    )

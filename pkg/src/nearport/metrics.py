"""Round-trip latency and frame-rate measurement from echoed timestamps.

Every received frame carries the client timestamp of the pose it was
rendered from, unmodified, plus the server's render time. RTL is therefore
a single-clock subtraction (receive_time - echoed_timestamp) with no clock
sync; frame rate comes from receive-time intervals. Summaries use
nearest-rank percentiles so every reported number is an observed sample.

The fps ambiguity note: a stereo client receives one stream per eye, so
"frames per second" can mean per-label or combined across labels. Both are
reported; CSV headers say which is which.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from math import ceil
from pathlib import Path
from typing import Optional

CSV_HEADER = ["label", "receive_time_ms", "echoed_timestamp_ms", "rtl_ms", "render_time_ms"]


class MetricsError(Exception):
    pass


class ClockSkew(MetricsError):
    """Frame appears to arrive before its pose was sent; sample quarantined."""


class InsufficientData(MetricsError):
    pass


class EmptyLog(MetricsError):
    pass


@dataclass(frozen=True)
class FrameSample:
    label: int
    receive_time_ms: float
    echoed_timestamp_ms: float
    render_time_ms: float

    @property
    def rtl_ms(self) -> float:
        return self.receive_time_ms - self.echoed_timestamp_ms


@dataclass(frozen=True)
class FpsPoint:
    t_ms: float
    inst_fps: float
    windowed_fps: float


@dataclass(frozen=True)
class LabelStats:
    sample_count: int
    mean_rtl_ms: float
    min_rtl_ms: float
    max_rtl_ms: float
    p50_rtl_ms: float
    p95_rtl_ms: float
    mean_fps: float
    mean_render_time_ms: float
    render_fraction: float


@dataclass(frozen=True)
class MetricsSummary:
    per_label: dict[int, LabelStats]
    aggregate: LabelStats  # mean_fps here is combined across labels
    dropped_pose_count: int = 0

    def lines(self) -> list[str]:
        """key=value lines for the summary footer file."""
        out = [
            "# fps note: per-label values are one stream (one eye); "
            "aggregate mean_fps is combined across all labels",
            f"dropped_pose_count={self.dropped_pose_count}",
        ]
        items = [("aggregate", self.aggregate)] + [
            (f"label{lab}", st) for lab, st in sorted(self.per_label.items())
        ]
        for name, st in items:
            out.append(
                f"{name}: samples={st.sample_count} mean_rtl_ms={st.mean_rtl_ms:.3f} "
                f"min_rtl_ms={st.min_rtl_ms:.3f} max_rtl_ms={st.max_rtl_ms:.3f} "
                f"p50_rtl_ms={st.p50_rtl_ms:.3f} p95_rtl_ms={st.p95_rtl_ms:.3f} "
                f"mean_fps={st.mean_fps:.3f} mean_render_ms={st.mean_render_time_ms:.3f} "
                f"render_fraction={st.render_fraction:.4f}"
            )
        return out


def nearest_rank(sorted_values: list[float], pct: float) -> float:
    """Nearest-rank percentile: no interpolation, always an observed value."""
    rank = max(1, ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


class MetricsLog:
    """Append-only frame log; concurrent append, snapshot-based reads."""

    def __init__(self):
        self._lock = threading.Lock()
        self._samples: list[FrameSample] = []
        self._quarantined: list[FrameSample] = []
        self.termination_reason: Optional[str] = None

    def record_frame(self, sample: FrameSample) -> None:
        """Append one sample; ClockSkew quarantines it instead of storing."""
        if sample.receive_time_ms < sample.echoed_timestamp_ms:
            with self._lock:
                self._quarantined.append(sample)
            raise ClockSkew(
                f"receive {sample.receive_time_ms} < echoed {sample.echoed_timestamp_ms}"
            )
        with self._lock:
            self._samples.append(sample)

    def samples(self, label: Optional[int] = None) -> list[FrameSample]:
        with self._lock:
            snap = list(self._samples)
        if label is None:
            return snap
        return [s for s in snap if s.label == label]

    @property
    def quarantined(self) -> list[FrameSample]:
        with self._lock:
            return list(self._quarantined)

    def labels(self) -> list[int]:
        return sorted({s.label for s in self.samples()})

    def __len__(self) -> int:
        with self._lock:
            return len(self._samples)

    def frame_rate(self, label: int, window_ms: float = 500.0) -> list[FpsPoint]:
        """Instantaneous fps (1000 / inter-arrival gap) with sliding-window mean.

        Arrivals sharing one receive timestamp (delivery bursts) collapse to
        a single arrival event: a zero gap has no defined instantaneous rate.
        """
        samples = sorted(self.samples(label), key=lambda s: s.receive_time_ms)
        if len(samples) < 2:
            raise InsufficientData(f"label {label} has {len(samples)} samples, need >= 2")
        times = []
        for s in samples:
            if not times or s.receive_time_ms > times[-1]:
                times.append(s.receive_time_ms)
        if len(times) < 2:
            raise InsufficientData(f"label {label}: all samples share one receive time")
        points: list[FpsPoint] = []
        inst = [(times[i], 1000.0 / (times[i] - times[i - 1])) for i in range(1, len(times))]
        lo = 0
        acc = 0.0
        for i, (t, f) in enumerate(inst):
            acc += f
            while inst[lo][0] <= t - window_ms:
                acc -= inst[lo][1]
                lo += 1
            points.append(FpsPoint(t, f, acc / (i - lo + 1)))
        return points

    def _label_stats(self, samples: list[FrameSample]) -> LabelStats:
        rtls = sorted(s.rtl_ms for s in samples)
        n = len(rtls)
        mean_rtl = sum(rtls) / n
        mean_render = sum(s.render_time_ms for s in samples) / n
        times = sorted(s.receive_time_ms for s in samples)
        span = times[-1] - times[0]
        fps = (n - 1) * 1000.0 / span if n >= 2 and span > 0 else 0.0
        return LabelStats(
            sample_count=n,
            mean_rtl_ms=mean_rtl,
            min_rtl_ms=rtls[0],
            max_rtl_ms=rtls[-1],
            p50_rtl_ms=nearest_rank(rtls, 50),
            p95_rtl_ms=nearest_rank(rtls, 95),
            mean_fps=fps,
            mean_render_time_ms=mean_render,
            render_fraction=mean_render / mean_rtl if mean_rtl > 0 else 0.0,
        )

    def summarize(self, dropped_pose_count: int = 0) -> MetricsSummary:
        snap = self.samples()
        if not snap:
            raise EmptyLog("no frame samples recorded")
        per_label = {
            lab: self._label_stats([s for s in snap if s.label == lab])
            for lab in sorted({s.label for s in snap})
        }
        agg = self._label_stats(snap)
        combined_fps = sum(st.mean_fps for st in per_label.values())
        agg = LabelStats(
            sample_count=agg.sample_count,
            mean_rtl_ms=agg.mean_rtl_ms,
            min_rtl_ms=agg.min_rtl_ms,
            max_rtl_ms=agg.max_rtl_ms,
            p50_rtl_ms=agg.p50_rtl_ms,
            p95_rtl_ms=agg.p95_rtl_ms,
            mean_fps=combined_fps,
            mean_render_time_ms=agg.mean_render_time_ms,
            render_fraction=agg.render_fraction,
        )
        return MetricsSummary(per_label=per_label, aggregate=agg,
                              dropped_pose_count=dropped_pose_count)

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for s in self.samples():
                writer.writerow(
                    [s.label, repr(s.receive_time_ms), repr(s.echoed_timestamp_ms),
                     repr(s.rtl_ms), repr(s.render_time_ms)]
                )

    @classmethod
    def import_csv(cls, path) -> "MetricsLog":
        log = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != CSV_HEADER:
                raise MetricsError(f"unexpected CSV header {header}")
            for row in reader:
                log.record_frame(
                    FrameSample(int(row[0]), float(row[1]), float(row[2]), float(row[4]))
                )
        return log

    def write_summary(self, path, dropped_pose_count: int = 0) -> None:
        Path(path).write_text(
            "\n".join(self.summarize(dropped_pose_count).lines()) + "\n", encoding="utf-8"
        )

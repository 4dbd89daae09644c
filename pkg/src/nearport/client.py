"""Headless client: streams stereo pose packets, logs returned frames.

The client clock is the only timestamp authority: poses are stamped with
local monotonic milliseconds, the server echoes them untouched, and RTL is
a subtraction on this one clock. Head motion comes from a trace file
(CSV: t_ms,tx,ty,tz,qx,qy,qz,qw with a unit quaternion), sampled at the
configured pose rate with linear translation interpolation and spherical
rotation interpolation. An optional constant-velocity extrapolator shifts
the head pose forward by a configurable horizon before the stereo eye
poses are derived, so both eyes stay consistent.
"""

from __future__ import annotations

import csv
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .geometry import Pose, StereoRig, stereo_eye_poses
from .metrics import ClockSkew, FrameSample, MetricsLog
from .protocol import (
    FramePacket,
    HelloMessage,
    IntrinsicsMessage,
    PingMessage,
    PongMessage,
    PosePacket,
    decode_message,
    encode_message,
)

log = logging.getLogger("nearport.client")

TRACE_HEADER = ["t_ms", "tx", "ty", "tz", "qx", "qy", "qz", "qw"]


class TraceError(Exception):
    pass


@dataclass(frozen=True)
class TraceEntry:
    t_ms: float
    head_pose: Pose


@dataclass
class ClientConfig:
    pose_rate_hz: float = 60.0
    ipd_m: float = 0.064
    predictor: str = "none"  # "none" | "cv"
    prediction_horizon_ms: float = 0.0
    viewpoint_labels: tuple[int, ...] = (0, 1)
    client_id: str = "nearport-client"
    duration_ms: Optional[float] = None  # default: trace span
    linger_ms: float = 500.0  # wait for in-flight frames after the last tick
    heartbeat_period_ms: float = 0.0  # 0 disables PING
    dump_frames_dir: Optional[Path] = None

    def validate(self) -> None:
        if not 0 < self.pose_rate_hz <= 1000:
            raise ValueError("pose_rate_hz must be in (0, 1000]")
        if self.prediction_horizon_ms < 0:
            raise ValueError("prediction_horizon_ms must be >= 0")
        if self.predictor not in ("none", "cv"):
            raise ValueError(f"unknown predictor {self.predictor!r}")
        if not self.viewpoint_labels:
            raise ValueError("need at least one viewpoint label")


def load_trace(path) -> list[TraceEntry]:
    """Parse a trace CSV; timestamps must be strictly increasing."""
    entries: list[TraceEntry] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceError(f"{path}: empty trace")
        if [h.strip() for h in header] != TRACE_HEADER:
            raise TraceError(f"{path}: row 1: expected header {','.join(TRACE_HEADER)}")
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 8:
                raise TraceError(f"{path}: row {rowno}: expected 8 fields, got {len(row)}")
            try:
                vals = [float(x) for x in row]
            except ValueError as e:
                raise TraceError(f"{path}: row {rowno}: {e}") from None
            q = np.array(vals[4:8])
            norm = np.linalg.norm(q)
            if not 0.99 < norm < 1.01:
                raise TraceError(f"{path}: row {rowno}: quaternion norm {norm:.4f} not ~1")
            pose = Pose.from_quaternion(*(q / norm), vals[1:4])
            if entries and vals[0] <= entries[-1].t_ms:
                raise TraceError(f"{path}: row {rowno}: timestamps must be strictly increasing")
            entries.append(TraceEntry(vals[0], pose))
    if not entries:
        raise TraceError(f"{path}: no trace entries")
    return entries


def save_trace(path, entries: Sequence[TraceEntry]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for e in entries:
            q = Rotation.from_matrix(e.head_pose.rotation).as_quat()
            t = e.head_pose.translation
            writer.writerow([repr(float(e.t_ms))] + [repr(float(x)) for x in (*t, *q)])


def sample_trace(entries: Sequence[TraceEntry], t_ms: float) -> Pose:
    """Pose at time t: lerp translation, slerp rotation, clamped at the ends."""
    if not entries:
        raise TraceError("empty trace")
    if t_ms <= entries[0].t_ms:
        return entries[0].head_pose
    if t_ms >= entries[-1].t_ms:
        return entries[-1].head_pose
    times = [e.t_ms for e in entries]
    hi = int(np.searchsorted(times, t_ms, side="right"))
    lo = hi - 1
    a, b = entries[lo], entries[hi]
    frac = (t_ms - a.t_ms) / (b.t_ms - a.t_ms)
    trans = (1 - frac) * a.head_pose.translation + frac * b.head_pose.translation
    rots = Rotation.from_matrix(np.stack([a.head_pose.rotation, b.head_pose.rotation]))
    rot = Slerp([0.0, 1.0], rots)(frac).as_matrix()
    return Pose(rot, trans, check=False)


def predict_pose(history: Sequence[tuple[float, Pose]], horizon_ms: float) -> Pose:
    """Constant-velocity extrapolation of the newest pose by horizon_ms.

    Velocity (linear and angular) comes from the last two history entries;
    with a single entry the pose is returned unchanged. The extrapolated
    rotation is re-orthonormalized so the result satisfies pose invariants.
    """
    if not history:
        raise ValueError("history must have at least one entry")
    t2, p2 = history[-1]
    if len(history) == 1 or horizon_ms == 0:
        return Pose(p2.rotation.copy(), p2.translation.copy(), check=False)
    t1, p1 = history[-2]
    dt = t2 - t1
    if dt <= 0:
        return Pose(p2.rotation.copy(), p2.translation.copy(), check=False)
    scale = horizon_ms / dt
    trans = p2.translation + (p2.translation - p1.translation) * scale
    delta = p2.rotation @ p1.rotation.T  # world-frame rotation over dt
    rotvec = Rotation.from_matrix(delta).as_rotvec()
    rot = Rotation.from_rotvec(rotvec * scale).as_matrix() @ p2.rotation
    return Pose(rot, trans, check=False).orthonormalized()


def eye_poses_for_labels(
    head: Pose, labels: Sequence[int], ipd_m: float
) -> dict[int, Pose]:
    """Map viewpoint labels to camera poses: two labels form a stereo pair
    (first = left eye, second = right), any other count shares the head pose."""
    if len(labels) == 2 and ipd_m > 0:
        left, right = stereo_eye_poses(StereoRig(head, ipd_m))
        return {labels[0]: left, labels[1]: right}
    return {lab: head for lab in labels}


def now_ms() -> int:
    return time.monotonic_ns() // 1_000_000


class ReplaySession:
    """Handshake plus replay loop over an already-connected transport."""

    def __init__(self, config: ClientConfig, transport):
        config.validate()
        self.config = config
        self.transport = transport
        self.intrinsics: dict[int, IntrinsicsMessage] = {}
        self.log = MetricsLog()
        self.sent_timestamps: dict[int, int] = {}
        self._disconnected = threading.Event()
        self._frames_dumped = 0

    def handshake(self, timeout_s: float = 10.0) -> None:
        """Send HELLO, collect one IntrinsicsMessage per announced label."""
        hello = HelloMessage(self.config.client_id, tuple(self.config.viewpoint_labels))
        self.transport.send_message(encode_message(hello))
        deadline = time.monotonic() + timeout_s
        while len(self.intrinsics) < len(self.config.viewpoint_labels):
            if time.monotonic() > deadline:
                raise TimeoutError("handshake timed out waiting for intrinsics")
            data = self.transport.recv_message()
            if data is None:
                raise ConnectionError("server closed during handshake")
            msg = decode_message(data)
            if isinstance(msg, IntrinsicsMessage):
                self.intrinsics[msg.viewpoint_label] = msg
            else:
                log.warning("ignoring %s during handshake", type(msg).__name__)

    def _receive_loop(self) -> None:
        while not self._disconnected.is_set():
            try:
                data = self.transport.recv_message()
            except (OSError, ValueError):
                break
            if data is None:
                break
            try:
                msg = decode_message(data)
            except Exception as e:  # tolerate garbage frames, keep measuring
                log.warning("undecodable message dropped: %s", e)
                continue
            if isinstance(msg, FramePacket):
                sample = FrameSample(
                    msg.viewpoint_label, now_ms(), msg.echoed_timestamp_ms, msg.render_time_ms
                )
                try:
                    self.log.record_frame(sample)
                except ClockSkew as e:
                    log.warning("clock skew sample quarantined: %s", e)
                    continue
                if self.config.dump_frames_dir is not None:
                    self._dump_frame(msg)
            elif isinstance(msg, PongMessage):
                pass
        self._disconnected.set()

    def _dump_frame(self, frame: FramePacket) -> None:
        from .images import write_frame_packet

        self._frames_dumped += 1
        path = Path(self.config.dump_frames_dir) / (
            f"label{frame.viewpoint_label}_{self._frames_dumped:05d}.ppm"
        )
        write_frame_packet(path, frame)

    def _stamp(self, label: int) -> int:
        ts = now_ms()
        last = self.sent_timestamps.get(label)
        if last is not None and ts <= last:
            ts = last + 1
        self.sent_timestamps[label] = ts
        return ts

    def run(self, trace: Sequence[TraceEntry]) -> MetricsLog:
        """Tick at pose_rate_hz through the trace; returns the metrics log."""
        cfg = self.config
        duration = cfg.duration_ms
        if duration is None:
            duration = trace[-1].t_ms - trace[0].t_ms
        if duration <= 0:
            raise TraceError("replay duration is not positive; give duration_ms")
        n_ticks = max(1, int(cfg.pose_rate_hz * duration / 1000.0))
        period_s = 1.0 / cfg.pose_rate_hz

        receiver = threading.Thread(target=self._receive_loop, daemon=True, name="frame-recv")
        receiver.start()
        history: list[tuple[float, Pose]] = []
        heartbeat_due = 0.0
        start = time.monotonic()
        try:
            for k in range(n_ticks):
                target = start + k * period_s
                delay = target - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                if self._disconnected.is_set():
                    self.log.termination_reason = "connection lost"
                    break
                elapsed_ms = (time.monotonic() - start) * 1000.0
                head = sample_trace(trace, trace[0].t_ms + elapsed_ms)
                history.append((elapsed_ms, head))
                if len(history) > 8:
                    del history[0]
                if cfg.predictor == "cv" and cfg.prediction_horizon_ms > 0:
                    head = predict_pose(history, cfg.prediction_horizon_ms)
                eyes = eye_poses_for_labels(head, cfg.viewpoint_labels, cfg.ipd_m)
                for lab in cfg.viewpoint_labels:
                    packet = PosePacket.from_matrix(lab, self._stamp(lab), eyes[lab].matrix())
                    self.transport.send_message(encode_message(packet))
                if cfg.heartbeat_period_ms > 0 and elapsed_ms >= heartbeat_due:
                    self.transport.send_message(encode_message(PingMessage(int(elapsed_ms))))
                    heartbeat_due = elapsed_ms + cfg.heartbeat_period_ms
        except (OSError, ConnectionError) as e:
            self.log.termination_reason = f"connection lost: {e}"
        if self.log.termination_reason is None:
            # Collect in-flight frames before tearing down.
            time.sleep(cfg.linger_ms / 1000.0)
        self._disconnected.set()
        try:
            self.transport.close()
        except OSError:
            pass
        receiver.join(timeout=2.0)
        return self.log


def run_replay(config: ClientConfig, trace: Sequence[TraceEntry], transport) -> MetricsLog:
    """Handshake then replay `trace` over an already-connected transport."""
    session = ReplaySession(config, transport)
    session.handshake()
    return session.run(trace)

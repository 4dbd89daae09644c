"""Wire protocol for all client<->server traffic.

Every message is one frame on the wire:

    +-----------+----------+-----------+---------------+-------------------+
    | magic(4B) | ver (1B) | type (1B) | payload_len   |  payload          |
    | "NARP"    | u8 = 1   | u8        | u32 LE, bytes |  type-specific    |
    +-----------+----------+-----------+---------------+-------------------+

All multibyte fields are little-endian; the 4x4 pose matrix is row-major
camera-to-world (camera looks along -Z, +Y up, +X right), translation in
meters. Float fields are 32-bit on the wire; message constructors coerce
them so that decode(encode(m)) == m holds exactly.

Payload layouts (field order = declaration order below):

    HELLO      (0x01)  client_id_len u16, client_id utf-8,
                       viewpoint_count u8, labels u8 * count
    INTRINSICS (0x02)  label u8, width u16, height u16, fx fy cx cy f32
    POSE       (0x03)  label u8, timestamp_ms u64, pose 16 * f32
    FRAME      (0x04)  label u8, echoed_timestamp_ms u64, render_time_ms f32,
                       width u16, height u16, encoding u8, image_len u32,
                       image bytes
    PING/PONG  (0x05/0x06)  nonce u64
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Union

import numpy as np

MAGIC = b"NARP"
VERSION = 1
HEADER_SIZE = 10

_HEADER = struct.Struct("<4sBBI")
_INTRINSICS = struct.Struct("<BHH4f")
_POSE = struct.Struct("<BQ16f")
_FRAME_HEAD = struct.Struct("<BQfHHBI")
_NONCE = struct.Struct("<Q")

_U8 = 0xFF
_U16 = 0xFFFF
_U32 = 0xFFFFFFFF
_U64 = 0xFFFFFFFFFFFFFFFF


class MessageType(IntEnum):
    HELLO = 0x01
    INTRINSICS = 0x02
    POSE = 0x03
    FRAME = 0x04
    PING = 0x05
    PONG = 0x06


class FrameEncoding(IntEnum):
    RAW_RGB8 = 0
    PNG = 1


class ProtocolError(Exception):
    """Base class for all codec errors."""


class InvariantViolation(ProtocolError):
    """A message field violates its declared invariant; nothing was encoded."""


class BadMagic(ProtocolError):
    """First bytes are not the NARP magic; resynchronize or drop the link."""


class UnsupportedVersion(ProtocolError):
    """Header version differs from 1; drop the link."""


class UnknownType(ProtocolError):
    """Unknown msg_type byte; drop the link."""


class TruncatedPayload(ProtocolError):
    """Buffer ends before the declared payload does; wait for more bytes."""


class LengthMismatch(ProtocolError):
    """Payload length is inconsistent with its content; drop the message."""


def _f32(x: float) -> float:
    """Round a float to its 32-bit value so wire round-trips are exact."""
    return float(np.float32(x))


def _check_uint(name: str, value: int, limit: int) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise InvariantViolation(f"{name} must be an integer, got {value!r}")
    if not 0 <= value <= limit:
        raise InvariantViolation(f"{name}={value} out of range [0, {limit}]")


@dataclass(frozen=True)
class HelloMessage:
    """Client announcement: identity plus one label per viewpoint stream."""

    client_id: str
    viewpoint_labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "viewpoint_labels", tuple(self.viewpoint_labels))

    @property
    def viewpoint_count(self) -> int:
        return len(self.viewpoint_labels)

    def validate(self) -> None:
        if len(self.client_id.encode("utf-8")) > _U16:
            raise InvariantViolation("client_id longer than 65535 bytes")
        if self.viewpoint_count < 1:
            raise InvariantViolation("viewpoint_count must be >= 1")
        if self.viewpoint_count > _U8:
            raise InvariantViolation("viewpoint_count must fit in u8")
        for lab in self.viewpoint_labels:
            _check_uint("viewpoint_label", lab, _U8)
        if len(set(self.viewpoint_labels)) != self.viewpoint_count:
            raise InvariantViolation(f"duplicate viewpoint labels: {self.viewpoint_labels}")


@dataclass(frozen=True)
class IntrinsicsMessage:
    """Pinhole parameters the client must use for one viewpoint camera."""

    viewpoint_label: int
    width_px: int
    height_px: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, _f32(getattr(self, name)))

    def validate(self) -> None:
        _check_uint("viewpoint_label", self.viewpoint_label, _U8)
        _check_uint("width_px", self.width_px, _U16)
        _check_uint("height_px", self.height_px, _U16)
        if self.width_px <= 0 or self.height_px <= 0:
            raise InvariantViolation("image dimensions must be positive")
        if not (self.fx > 0 and self.fy > 0):
            raise InvariantViolation("focal lengths must be positive")
        if not (0 <= self.cx < self.width_px and 0 <= self.cy < self.height_px):
            raise InvariantViolation("principal point outside image bounds")
        for name in ("fx", "fy", "cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise InvariantViolation(f"{name} is not finite")


@dataclass(frozen=True)
class PosePacket:
    """Labeled, client-timestamped camera-to-world pose for one viewpoint."""

    viewpoint_label: int
    timestamp_ms: int
    pose: tuple[float, ...]  # 16 row-major f32 values

    def __post_init__(self):
        vals = np.asarray(self.pose, dtype=np.float32).reshape(16)
        object.__setattr__(self, "pose", tuple(float(v) for v in vals))

    @classmethod
    def from_matrix(cls, viewpoint_label: int, timestamp_ms: int, matrix) -> "PosePacket":
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise InvariantViolation(f"pose matrix must be 4x4, got {m.shape}")
        return cls(viewpoint_label, timestamp_ms, tuple(m.reshape(16)))

    def matrix(self) -> np.ndarray:
        return np.asarray(self.pose, dtype=np.float64).reshape(4, 4)

    def validate(self) -> None:
        _check_uint("viewpoint_label", self.viewpoint_label, _U8)
        _check_uint("timestamp_ms", self.timestamp_ms, _U64)
        m = self.matrix()
        if not np.all(np.isfinite(m)):
            raise InvariantViolation("pose matrix contains non-finite values")
        if not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=1e-6):
            raise InvariantViolation(f"pose bottom row must be (0,0,0,1), got {m[3]}")
        r = m[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-4):
            raise InvariantViolation("pose rotation block is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-4:
            raise InvariantViolation("pose rotation block must have det +1")


@dataclass(frozen=True)
class FramePacket:
    """Rendered image plus the unmodified timestamp of the pose it came from."""

    viewpoint_label: int
    echoed_timestamp_ms: int
    render_time_ms: float
    width_px: int
    height_px: int
    encoding: int
    image: bytes = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "render_time_ms", _f32(self.render_time_ms))
        object.__setattr__(self, "image", bytes(self.image))

    @property
    def image_len(self) -> int:
        return len(self.image)

    def validate(self) -> None:
        _check_uint("viewpoint_label", self.viewpoint_label, _U8)
        _check_uint("echoed_timestamp_ms", self.echoed_timestamp_ms, _U64)
        _check_uint("width_px", self.width_px, _U16)
        _check_uint("height_px", self.height_px, _U16)
        if self.encoding not in (FrameEncoding.RAW_RGB8, FrameEncoding.PNG):
            raise InvariantViolation(f"unknown frame encoding {self.encoding}")
        if not (math.isfinite(self.render_time_ms) and self.render_time_ms >= 0):
            raise InvariantViolation("render_time_ms must be finite and >= 0")
        if self.image_len > _U32:
            raise InvariantViolation("image exceeds u32 length")
        if self.encoding == FrameEncoding.RAW_RGB8:
            expected = 3 * self.width_px * self.height_px
            if self.image_len != expected:
                raise InvariantViolation(
                    f"RAW_RGB8 image_len {self.image_len} != 3*w*h = {expected}"
                )


@dataclass(frozen=True)
class PingMessage:
    nonce: int

    def validate(self) -> None:
        _check_uint("nonce", self.nonce, _U64)


@dataclass(frozen=True)
class PongMessage:
    nonce: int

    def validate(self) -> None:
        _check_uint("nonce", self.nonce, _U64)


Message = Union[
    HelloMessage, IntrinsicsMessage, PosePacket, FramePacket, PingMessage, PongMessage
]

_TYPE_OF = {
    HelloMessage: MessageType.HELLO,
    IntrinsicsMessage: MessageType.INTRINSICS,
    PosePacket: MessageType.POSE,
    FramePacket: MessageType.FRAME,
    PingMessage: MessageType.PING,
    PongMessage: MessageType.PONG,
}


def _encode_payload(msg: Message) -> bytes:
    if isinstance(msg, HelloMessage):
        cid = msg.client_id.encode("utf-8")
        return (
            struct.pack("<H", len(cid))
            + cid
            + struct.pack("<B", msg.viewpoint_count)
            + bytes(msg.viewpoint_labels)
        )
    if isinstance(msg, IntrinsicsMessage):
        return _INTRINSICS.pack(
            msg.viewpoint_label, msg.width_px, msg.height_px, msg.fx, msg.fy, msg.cx, msg.cy
        )
    if isinstance(msg, PosePacket):
        return _POSE.pack(msg.viewpoint_label, msg.timestamp_ms, *msg.pose)
    if isinstance(msg, FramePacket):
        head = _FRAME_HEAD.pack(
            msg.viewpoint_label,
            msg.echoed_timestamp_ms,
            msg.render_time_ms,
            msg.width_px,
            msg.height_px,
            msg.encoding,
            msg.image_len,
        )
        return head + msg.image
    if isinstance(msg, (PingMessage, PongMessage)):
        return _NONCE.pack(msg.nonce)
    raise InvariantViolation(f"not a protocol message: {type(msg).__name__}")


def encode_message(msg: Message) -> bytes:
    """Serialize one message, header included.

    Raises InvariantViolation if any field invariant fails; nothing is
    emitted for invalid messages.
    """
    msg_type = _TYPE_OF.get(type(msg))
    if msg_type is None:
        raise InvariantViolation(f"not a protocol message: {type(msg).__name__}")
    msg.validate()
    payload = _encode_payload(msg)
    return _HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


class _Reader:
    """Cursor over a payload; under/overruns surface as LengthMismatch."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise LengthMismatch(
                f"payload needs {self.pos + n} bytes but only {len(self.data)} present"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct) -> tuple:
        return st.unpack(self.take(st.size))

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise LengthMismatch(
                f"{len(self.data) - self.pos} trailing bytes after payload fields"
            )


def decode_header(data: bytes) -> tuple[int, int]:
    """Validate a frame header, returning (msg_type, payload_len).

    Accepts at least HEADER_SIZE bytes; extra bytes are ignored. Used by
    transports to learn how many payload bytes to read next.
    """
    if data[: min(len(data), 4)] != MAGIC[: min(len(data), 4)]:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < HEADER_SIZE:
        raise TruncatedPayload(f"header needs {HEADER_SIZE} bytes, got {len(data)}")
    _, version, msg_type, payload_len = _HEADER.unpack(data[:HEADER_SIZE])
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} not supported (expected {VERSION})")
    if msg_type not in MessageType._value2member_map_:
        raise UnknownType(f"unknown msg_type 0x{msg_type:02x}")
    return msg_type, payload_len


def decode_message(data: bytes) -> Message:
    """Decode exactly one message from `data`.

    Inverse of encode_message on its range. Any strict prefix of a valid
    encoding raises TruncatedPayload; trailing or internally inconsistent
    bytes raise LengthMismatch.
    """
    msg_type, payload_len = decode_header(data)
    if len(data) < HEADER_SIZE + payload_len:
        raise TruncatedPayload(
            f"payload_len={payload_len} but only {len(data) - HEADER_SIZE} payload bytes"
        )
    if len(data) > HEADER_SIZE + payload_len:
        raise LengthMismatch(
            f"{len(data) - HEADER_SIZE - payload_len} bytes beyond declared payload"
        )
    return decode_payload(msg_type, data[HEADER_SIZE:])


def decode_payload(msg_type: int, payload: bytes) -> Message:
    """Decode a payload whose header was already consumed by the transport."""
    r = _Reader(payload)
    if msg_type == MessageType.HELLO:
        (id_len,) = r.unpack(struct.Struct("<H"))
        try:
            client_id = r.take(id_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise LengthMismatch(f"client_id is not valid UTF-8: {e}") from None
        (count,) = r.unpack(struct.Struct("<B"))
        labels = tuple(r.take(count))
        r.expect_end()
        msg: Message = HelloMessage(client_id, labels)
    elif msg_type == MessageType.INTRINSICS:
        vals = r.unpack(_INTRINSICS)
        r.expect_end()
        msg = IntrinsicsMessage(*vals)
    elif msg_type == MessageType.POSE:
        vals = r.unpack(_POSE)
        r.expect_end()
        msg = PosePacket(vals[0], vals[1], vals[2:])
    elif msg_type == MessageType.FRAME:
        label, echoed, render_ms, w, h, enc, image_len = r.unpack(_FRAME_HEAD)
        image = r.take(image_len)
        r.expect_end()
        msg = FramePacket(label, echoed, render_ms, w, h, enc, image)
    elif msg_type in (MessageType.PING, MessageType.PONG):
        (nonce,) = r.unpack(_NONCE)
        r.expect_end()
        msg = PingMessage(nonce) if msg_type == MessageType.PING else PongMessage(nonce)
    else:
        raise UnknownType(f"unknown msg_type 0x{msg_type:02x}")
    return msg

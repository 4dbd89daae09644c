"""Rendering server: per-viewpoint mailbox -> renderer worker -> sender.

Connection lifecycle: the client opens a byte stream (raw TCP or the
browser-mapped WebSocket port) and sends HELLO announcing its viewpoint
labels. The server answers with one IntrinsicsMessage per label, spins up
one channel per label (single-slot pose mailbox, a renderer worker thread,
a sender thread with a small drop-oldest queue), and enters STREAMING.
Incoming poses are routed by label into the matching mailbox, where a new
pose overwrites any unrendered one; each worker loops take -> render ->
enqueue frame with no idle gap, so it always renders the freshest pose and
frame cadence is set by render time, not pose rate.

A slow renderer on one label never delays another label: channels share
nothing but the transport, and each sender preserves FIFO order for its
own frames.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from .geometry import CameraIntrinsics, Pose
from .mailbox import MailboxClosed, ViewpointMailbox
from .protocol import (
    FrameEncoding,
    FramePacket,
    HelloMessage,
    PingMessage,
    PongMessage,
    PosePacket,
    ProtocolError,
    decode_message,
    encode_message,
)
from .renderer import Renderer
from .transport import FramedSocketTransport, TransportClosed
from . import websocket as ws

log = logging.getLogger("nearport.server")


class SessionError(Exception):
    pass


class DuplicateLabel(SessionError):
    pass


class TooManyViewpoints(SessionError):
    pass


class UnknownLabel(SessionError):
    """Pose carried a label the session never announced; dropped and counted."""


class NotStreaming(SessionError):
    pass


class SessionState(Enum):
    HANDSHAKING = "handshaking"
    STREAMING = "streaming"
    CLOSED = "closed"


def _encode_png(image) -> bytes:
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image.as_array(), "RGB").save(buf, format="PNG")
    return buf.getvalue()


@dataclass
class ServerConfig:
    intrinsics: CameraIntrinsics
    renderer_factory: Callable[[int], Renderer]
    max_viewpoints: int = 4
    sender_queue_len: int = 8
    heartbeat_stall_ms: float = 0.0  # benchmark artifact; 0 disables
    frame_encoding: int = FrameEncoding.RAW_RGB8


@dataclass
class ChannelCounters:
    poses_dispatched: int = 0
    frames_sent: int = 0
    frames_rendered: int = 0
    render_failures: int = 0
    sender_drops: int = 0


class _Sender:
    """Bounded FIFO frame queue + writer thread; overflow drops the oldest."""

    def __init__(self, label: int, transport, maxlen: int, counters: ChannelCounters,
                 on_transport_closed: Callable[[], None]):
        self.label = label
        self.transport = transport
        self.counters = counters
        self.on_transport_closed = on_transport_closed
        self._queue: deque[FramePacket] = deque()
        self._maxlen = maxlen
        self._cv = threading.Condition()
        self._stopped = False
        self.thread = threading.Thread(
            target=self._run, daemon=True, name=f"sender-{label}"
        )

    def enqueue(self, frame: FramePacket) -> None:
        if frame.viewpoint_label != self.label:
            raise SessionError(
                f"frame label {frame.viewpoint_label} enqueued on sender {self.label}"
            )
        with self._cv:
            if self._stopped:
                return
            if len(self._queue) >= self._maxlen:
                self._queue.popleft()
                self.counters.sender_drops += 1
            self._queue.append(frame)
            self._cv.notify()

    def _run(self) -> None:
        while True:
            with self._cv:
                while not self._queue and not self._stopped:
                    self._cv.wait()
                if self._stopped and not self._queue:
                    return
                frame = self._queue.popleft()
            try:
                self.transport.send_message(encode_message(frame))
            except (TransportClosed, ConnectionError, OSError):
                self.on_transport_closed()
                return
            with self._cv:
                self.counters.frames_sent += 1

    def stop(self) -> None:
        with self._cv:
            self._stopped = True
            self._cv.notify_all()


class _Channel:
    """Everything serving one viewpoint label."""

    def __init__(self, label: int, renderer: Renderer, session: "Session"):
        self.label = label
        self.renderer = renderer
        self.session = session
        self.mailbox: ViewpointMailbox[PosePacket] = ViewpointMailbox()
        self.counters = ChannelCounters()
        self.sender = _Sender(
            label,
            session.transport,
            session.config.sender_queue_len,
            self.counters,
            session.close,
        )
        self.worker = threading.Thread(
            target=worker_loop,
            args=(label, self.mailbox, renderer, session.config, self.sender),
            daemon=True,
            name=f"worker-{label}",
        )

    def start(self) -> None:
        self.sender.thread.start()
        self.worker.start()

    def stop(self) -> None:
        self.mailbox.close()
        self.sender.stop()


def worker_loop(
    label: int,
    mailbox: ViewpointMailbox,
    renderer: Renderer,
    config: ServerConfig,
    sender: _Sender,
) -> None:
    """Take freshest pose -> render -> enqueue frame, until the mailbox closes.

    The echoed timestamp is copied from the rendered pose unmodified; render
    failures skip the frame and keep the loop alive.
    """
    counters = sender.counters
    while True:
        try:
            packet = mailbox.take()
        except MailboxClosed:
            return
        try:
            pose = Pose.from_matrix(packet.matrix(), check=False)
            image = renderer.render(config.intrinsics, pose)
        except Exception:
            counters.render_failures += 1
            log.warning("event=render_failure label=%d", label, exc_info=True)
            continue
        counters.frames_rendered += 1
        if config.frame_encoding == FrameEncoding.PNG:
            payload = _encode_png(image)
        else:
            payload = image.pixels
        frame = FramePacket(
            viewpoint_label=label,
            echoed_timestamp_ms=packet.timestamp_ms,
            render_time_ms=image.render_time_ms,
            width_px=image.width_px,
            height_px=image.height_px,
            encoding=config.frame_encoding,
            image=payload,
        )
        sender.enqueue(frame)


class Session:
    """One connected client: handshake, pose routing, per-label channels."""

    _ids = iter(range(1, 1 << 31))

    def __init__(self, transport, config: ServerConfig):
        self.transport = transport
        self.config = config
        self.state = SessionState.HANDSHAKING
        self.client_id: Optional[str] = None
        self.channels: dict[int, _Channel] = {}
        self.dropped_poses = 0
        self._lock = threading.Lock()
        self.session_id = next(Session._ids)

    def handle_hello(self, msg: HelloMessage) -> None:
        """Create one channel per label, send intrinsics, enter STREAMING."""
        if self.state != SessionState.HANDSHAKING:
            raise SessionError(f"HELLO in state {self.state.value}")
        labels = msg.viewpoint_labels
        if len(set(labels)) != len(labels):
            raise DuplicateLabel(f"duplicate labels in HELLO: {labels}")
        if len(labels) > self.config.max_viewpoints:
            raise TooManyViewpoints(
                f"{len(labels)} viewpoints exceeds cap {self.config.max_viewpoints}"
            )
        self.client_id = msg.client_id
        for label in labels:
            self.transport.send_message(
                encode_message(self.config.intrinsics.to_message(label))
            )
            self.channels[label] = _Channel(label, self.config.renderer_factory(label), self)
        for channel in self.channels.values():
            channel.start()
        self.state = SessionState.STREAMING
        log.info(
            "event=handshake session=%d client=%s labels=%s",
            self.session_id, self.client_id, list(labels),
        )

    def dispatch_pose(self, packet: PosePacket) -> None:
        """Route a pose into its label's mailbox (overwriting any pending one)."""
        if self.state != SessionState.STREAMING:
            raise NotStreaming(f"pose in state {self.state.value}")
        channel = self.channels.get(packet.viewpoint_label)
        if channel is None:
            with self._lock:
                self.dropped_poses += 1
            raise UnknownLabel(f"no channel for label {packet.viewpoint_label}")
        channel.mailbox.put(packet)
        channel.counters.poses_dispatched += 1

    def handle_ping(self, msg: PingMessage) -> None:
        # Optional stall reproduces connection-check interruptions: the
        # receiver (this thread) pauses, so pose dispatch stops briefly.
        if self.config.heartbeat_stall_ms > 0:
            time.sleep(self.config.heartbeat_stall_ms / 1000.0)
        self.transport.send_message(encode_message(PongMessage(msg.nonce)))

    def receive_loop(self) -> None:
        """Read messages until EOF or protocol violation; then close."""
        try:
            while self.state != SessionState.CLOSED:
                data = self.transport.recv_message()
                if data is None:
                    break
                msg = decode_message(data)
                if isinstance(msg, HelloMessage):
                    self.handle_hello(msg)
                elif isinstance(msg, PosePacket):
                    try:
                        self.dispatch_pose(msg)
                    except UnknownLabel:
                        pass  # already counted
                elif isinstance(msg, PingMessage):
                    self.handle_ping(msg)
                elif isinstance(msg, PongMessage):
                    pass
                else:
                    log.warning("event=unexpected_message type=%s", type(msg).__name__)
        except (ProtocolError, SessionError, TransportClosed, ConnectionError, OSError) as e:
            log.info("event=session_error session=%d error=%s", self.session_id, e)
        finally:
            self.close()

    def close(self) -> None:
        with self._lock:
            if self.state == SessionState.CLOSED:
                return
            self.state = SessionState.CLOSED
        for channel in self.channels.values():
            channel.stop()
        try:
            self.transport.close()
        except OSError:
            pass
        counts = {
            lab: (c.counters.poses_dispatched, c.counters.frames_sent)
            for lab, c in self.channels.items()
        }
        log.info(
            "event=session_closed session=%d poses/frames=%s dropped=%d",
            self.session_id, counts, self.dropped_poses,
        )


_MIME = {".html": "text/html", ".js": "text/javascript", ".css": "text/css",
         ".map": "application/json", ".png": "image/png"}


class NearportServer:
    """Accepts raw-TCP and WebSocket clients; one Session per connection."""

    def __init__(
        self,
        config: ServerConfig,
        host: str = "127.0.0.1",
        tcp_port: int = 9750,
        ws_port: int = 9751,
        viewer_dir: Optional[Path] = None,
    ):
        self.config = config
        self.host = host
        self.tcp_port = tcp_port
        self.ws_port = ws_port
        self.viewer_dir = Path(viewer_dir) if viewer_dir else None
        self.sessions: list[Session] = []
        self._listeners: list = []
        self._threads: list[threading.Thread] = []
        self._stopping = threading.Event()

    def start(self) -> None:
        tcp = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        tcp.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        tcp.bind((self.host, self.tcp_port))
        tcp.listen(8)
        self.tcp_port = tcp.getsockname()[1]

        wss = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        wss.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        wss.bind((self.host, self.ws_port))
        wss.listen(8)
        self.ws_port = wss.getsockname()[1]

        self._listeners = [tcp, wss]
        for sock, kind in ((tcp, "tcp"), (wss, "ws")):
            t = threading.Thread(
                target=self._accept_loop, args=(sock, kind), daemon=True,
                name=f"accept-{kind}",
            )
            t.start()
            self._threads.append(t)
        log.info(
            "event=listening host=%s tcp_port=%d ws_port=%d",
            self.host, self.tcp_port, self.ws_port,
        )

    def _accept_loop(self, listener, kind: str) -> None:
        while not self._stopping.is_set():
            try:
                sock, _addr = listener.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            if kind == "tcp":
                self._start_session(FramedSocketTransport(sock))
            else:
                threading.Thread(
                    target=self._handle_ws_socket, args=(sock,), daemon=True,
                    name="ws-handshake",
                ).start()

    def _handle_ws_socket(self, sock) -> None:
        try:
            request_line, headers = ws.read_http_request(sock)
        except ws.WebSocketError:
            sock.close()
            return
        if headers.get("upgrade", "").lower() == "websocket":
            try:
                ws.complete_handshake(sock, headers)
            except ws.WebSocketError:
                sock.close()
                return
            self._start_session(ws.WebSocketTransport(sock))
        else:
            self._serve_static(sock, request_line)

    def _serve_static(self, sock, request_line: str) -> None:
        try:
            parts = request_line.split()
            path = parts[1].split("?", 1)[0] if len(parts) >= 2 else "/"
            if path == "/":
                path = "/index.html"
            body, ctype = None, "text/plain"
            if self.viewer_dir is not None:
                target = (self.viewer_dir / path.lstrip("/")).resolve()
                if str(target).startswith(str(self.viewer_dir.resolve())) and target.is_file():
                    body = target.read_bytes()
                    ctype = _MIME.get(target.suffix, "application/octet-stream")
            if body is None:
                body = b"not found"
                head = f"HTTP/1.1 404 Not Found\r\nContent-Length: {len(body)}\r\n\r\n"
            else:
                head = (
                    f"HTTP/1.1 200 OK\r\nContent-Type: {ctype}\r\n"
                    f"Content-Length: {len(body)}\r\nConnection: close\r\n\r\n"
                )
            sock.sendall(head.encode("ascii") + body)
        except OSError:
            pass
        finally:
            sock.close()

    def _start_session(self, transport) -> None:
        session = Session(transport, self.config)
        self.sessions.append(session)
        threading.Thread(
            target=session.receive_loop, daemon=True,
            name=f"session-{session.session_id}",
        ).start()

    def shutdown(self) -> None:
        self._stopping.set()
        for listener in self._listeners:
            try:
                listener.close()
            except OSError:
                pass
        for session in self.sessions:
            session.close()

    def serve_forever(self) -> None:
        try:
            while not self._stopping.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.shutdown()

"""Minimal RFC 6455 WebSocket framing for the browser-mapped socket.

Just enough of the protocol for this system: HTTP/1.1 upgrade handshake,
binary messages (client frames masked, server frames unmasked), ping/pong,
close, and fragmented messages on receive. One protocol message travels as
one binary WebSocket message with identical bytes, header included, so the
browser client and the raw TCP client share a single codec.

The handshake reader also recognizes plain HTTP GETs so the serving side
can answer them (used to serve the bundled viewer's static files).
"""

from __future__ import annotations

import base64
import hashlib
import os
import socket
import struct
import threading
from typing import Optional

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WebSocketError(ConnectionError):
    pass


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            raise WebSocketError("socket closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def encode_frame(payload: bytes, opcode: int = OP_BINARY, mask: bool = False) -> bytes:
    head = bytearray([0x80 | opcode])  # FIN always set; we never fragment sends
    n = len(payload)
    mask_bit = 0x80 if mask else 0
    if n < 126:
        head.append(mask_bit | n)
    elif n < 1 << 16:
        head.append(mask_bit | 126)
        head += struct.pack(">H", n)
    else:
        head.append(mask_bit | 127)
        head += struct.pack(">Q", n)
    if mask:
        key = os.urandom(4)
        head += key
        masked = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return bytes(head) + masked
    return bytes(head) + payload


def read_frame(sock: socket.socket) -> tuple[int, bool, bytes]:
    """Read one frame: (opcode, fin, unmasked payload)."""
    b0, b1 = _recv_exact(sock, 2)
    fin = bool(b0 & 0x80)
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    n = b1 & 0x7F
    if n == 126:
        (n,) = struct.unpack(">H", _recv_exact(sock, 2))
    elif n == 127:
        (n,) = struct.unpack(">Q", _recv_exact(sock, 8))
    key = _recv_exact(sock, 4) if masked else None
    payload = _recv_exact(sock, n) if n else b""
    if key is not None:
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return opcode, fin, payload


def read_http_request(sock: socket.socket, limit: int = 65536) -> tuple[str, dict[str, str]]:
    """Read one HTTP request head: (request line, lower-cased headers)."""
    data = b""
    while b"\r\n\r\n" not in data:
        if len(data) > limit:
            raise WebSocketError("oversized HTTP request head")
        chunk = sock.recv(4096)
        if not chunk:
            raise WebSocketError("socket closed during HTTP request")
        data += chunk
    head = data.split(b"\r\n\r\n", 1)[0].decode("latin-1")
    lines = head.split("\r\n")
    headers: dict[str, str] = {}
    for line in lines[1:]:
        if ":" in line:
            k, v = line.split(":", 1)
            headers[k.strip().lower()] = v.strip()
    return lines[0], headers


def complete_handshake(sock: socket.socket, headers: dict[str, str]) -> None:
    """Answer an Upgrade: websocket request (request line already consumed)."""
    key = headers.get("sec-websocket-key")
    if key is None:
        raise WebSocketError("missing Sec-WebSocket-Key")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
        "\r\n"
    )
    sock.sendall(response.encode("ascii"))


class WebSocketTransport:
    """Message transport over an upgraded socket; mirrors FramedSocketTransport."""

    def __init__(self, sock: socket.socket, mask_sends: bool = False):
        self.sock = sock
        self.mask_sends = mask_sends  # client endpoints must mask
        self._send_lock = threading.Lock()
        self._closed = False

    def send_message(self, data: bytes) -> None:
        try:
            with self._send_lock:
                self.sock.sendall(encode_frame(data, OP_BINARY, mask=self.mask_sends))
        except OSError as e:
            raise ConnectionError(str(e)) from e

    def recv_message(self) -> Optional[bytes]:
        """One complete binary message, reassembling fragments; None on close."""
        assembled = b""
        while True:
            try:
                opcode, fin, payload = read_frame(self.sock)
            except (WebSocketError, OSError):
                return None
            if opcode == OP_CLOSE:
                self._send_close()
                return None
            if opcode == OP_PING:
                with self._send_lock:
                    try:
                        self.sock.sendall(encode_frame(payload, OP_PONG, mask=self.mask_sends))
                    except OSError:
                        return None
                continue
            if opcode == OP_PONG:
                continue
            if opcode in (OP_BINARY, OP_TEXT, OP_CONT):
                assembled += payload
                if fin:
                    return assembled

    def _send_close(self) -> None:
        if self._closed:
            return
        try:
            with self._send_lock:
                self.sock.sendall(encode_frame(b"", OP_CLOSE, mask=self.mask_sends))
        except OSError:
            pass

    def close(self) -> None:
        if self._closed:
            return
        self._send_close()
        self._closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def connect_ws(host: str, port: int, timeout_s: float = 5.0) -> WebSocketTransport:
    """Client-side connect + handshake (used by tests and tools)."""
    sock = socket.create_connection((host, port), timeout=timeout_s)
    sock.settimeout(timeout_s)
    key = base64.b64encode(os.urandom(16)).decode("ascii")
    request = (
        f"GET / HTTP/1.1\r\nHost: {host}:{port}\r\n"
        "Upgrade: websocket\r\nConnection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
    )
    sock.sendall(request.encode("ascii"))
    status, headers = read_http_request(sock)
    if "101" not in status:
        sock.close()
        raise WebSocketError(f"handshake rejected: {status}")
    if headers.get("sec-websocket-accept") != accept_key(key):
        sock.close()
        raise WebSocketError("bad Sec-WebSocket-Accept")
    sock.settimeout(None)
    return WebSocketTransport(sock, mask_sends=True)

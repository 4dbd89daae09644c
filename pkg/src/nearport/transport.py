"""Byte-stream transport: protocol frames over a reliable ordered socket.

Each encoded message is written as-is; the 10-byte header's payload_len
delimits messages on the receive side. recv_message returns one complete
encoded message (header included) or None on clean EOF.
"""

from __future__ import annotations

import socket
import threading
from typing import Optional

from .protocol import HEADER_SIZE, TruncatedPayload, decode_header


class TransportClosed(ConnectionError):
    pass


def recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    """Read exactly n bytes; None on EOF at a message boundary (nothing read)."""
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            if got == 0:
                return None
            raise TruncatedPayload(f"connection closed mid-message ({got}/{n} bytes)")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class FramedSocketTransport:
    """One protocol message per send/recv over a TCP socket; send is locked
    so concurrent senders interleave at message granularity."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._send_lock = threading.Lock()
        self._closed = False

    def send_message(self, data: bytes) -> None:
        try:
            with self._send_lock:
                self.sock.sendall(data)
        except OSError as e:
            raise TransportClosed(str(e)) from e

    def recv_message(self) -> Optional[bytes]:
        try:
            header = recv_exact(self.sock, HEADER_SIZE)
        except OSError:
            return None
        if header is None:
            return None
        _, payload_len = decode_header(header)
        if payload_len == 0:
            return header
        payload = recv_exact(self.sock, payload_len)
        if payload is None:
            raise TruncatedPayload("connection closed before payload")
        return header + payload

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def connect_tcp(host: str, port: int, timeout_s: float = 5.0) -> FramedSocketTransport:
    sock = socket.create_connection((host, port), timeout=timeout_s)
    sock.settimeout(None)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return FramedSocketTransport(sock)

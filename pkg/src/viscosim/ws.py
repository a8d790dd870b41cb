"""Small RFC 6455 WebSocket layer: handshake plus text/close/ping frames.

Enough protocol for a browser client and for test clients; no extensions,
no fragmentation.  Handshakes can over-read into the first frames, so both
sides hand back a buffered :class:`WsConnection` that owns the socket.
"""
from __future__ import annotations

import base64
import hashlib
import os
import socket
import struct

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_TEXT = 0x1
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def encode_frame(payload: bytes, opcode: int = OP_TEXT, mask: bool = False) -> bytes:
    head = bytes([0x80 | opcode])
    n = len(payload)
    mask_bit = 0x80 if mask else 0x00
    if n < 126:
        head += bytes([mask_bit | n])
    elif n < (1 << 16):
        head += bytes([mask_bit | 126]) + struct.pack(">H", n)
    else:
        head += bytes([mask_bit | 127]) + struct.pack(">Q", n)
    if mask:
        key = os.urandom(4)
        masked = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return head + key + masked
    return head + payload


class WsConnection:
    """One endpoint of an upgraded connection (buffered reads)."""

    def __init__(self, sock: socket.socket, leftover: bytes = b"", mask_sends: bool = False):
        self.sock = sock
        self.buf = leftover
        self.mask_sends = mask_sends

    def _read_exact(self, n: int) -> bytes:
        while len(self.buf) < n:
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("socket closed mid-frame")
            self.buf += chunk
        out, self.buf = self.buf[:n], self.buf[n:]
        return out

    def recv_frame(self) -> tuple[int, bytes]:
        b0, b1 = self._read_exact(2)
        opcode = b0 & 0x0F
        masked = bool(b1 & 0x80)
        n = b1 & 0x7F
        if n == 126:
            n = struct.unpack(">H", self._read_exact(2))[0]
        elif n == 127:
            n = struct.unpack(">Q", self._read_exact(8))[0]
        key = self._read_exact(4) if masked else None
        payload = self._read_exact(n) if n else b""
        if key:
            payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
        return opcode, payload

    def recv_text(self) -> str | None:
        """Next text payload, answering pings; None once the peer closes."""
        while True:
            opcode, payload = self.recv_frame()
            if opcode == OP_TEXT:
                return payload.decode("utf-8")
            if opcode == OP_PING:
                self.sock.sendall(encode_frame(payload, OP_PONG, self.mask_sends))
                continue
            if opcode == OP_CLOSE:
                try:
                    self.sock.sendall(encode_frame(b"", OP_CLOSE, self.mask_sends))
                except OSError:
                    pass
                return None

    def send_text(self, text: str) -> None:
        self.sock.sendall(encode_frame(text.encode("utf-8"), OP_TEXT, self.mask_sends))

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def _read_head(sock: socket.socket) -> tuple[bytes, bytes]:
    """HTTP header block and any bytes that arrived after it."""
    data = b""
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise ConnectionError("peer closed during handshake")
        data += chunk
        if len(data) > 65536:
            raise ConnectionError("oversized handshake")
    head, _, rest = data.partition(b"\r\n\r\n")
    return head, rest


def server_handshake(conn: socket.socket) -> WsConnection:
    """Consume the HTTP upgrade request and reply with the accept."""
    head, rest = _read_head(conn)
    headers = {}
    for line in head.split(b"\r\n")[1:]:
        if b":" in line:
            k, v = line.split(b":", 1)
            headers[k.strip().lower().decode()] = v.strip().decode()
    key = headers.get("sec-websocket-key")
    if not key:
        conn.sendall(b"HTTP/1.1 400 Bad Request\r\n\r\n")
        raise ConnectionError("missing Sec-WebSocket-Key")
    resp = ("HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept_key(key)}\r\n\r\n")
    conn.sendall(resp.encode())
    return WsConnection(conn, rest, mask_sends=False)


def client_handshake(sock: socket.socket, host: str, path: str = "/") -> WsConnection:
    key = base64.b64encode(os.urandom(16)).decode()
    req = (f"GET {path} HTTP/1.1\r\n"
           f"Host: {host}\r\n"
           "Upgrade: websocket\r\n"
           "Connection: Upgrade\r\n"
           f"Sec-WebSocket-Key: {key}\r\n"
           "Sec-WebSocket-Version: 13\r\n\r\n")
    sock.sendall(req.encode())
    head, rest = _read_head(sock)
    if b" 101 " not in head.split(b"\r\n", 1)[0]:
        raise ConnectionError(f"handshake rejected: {head[:80]!r}")
    return WsConnection(sock, rest, mask_sends=True)

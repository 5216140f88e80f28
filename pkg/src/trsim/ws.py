"""Minimal WebSocket (RFC 6455) framing over asyncio streams.

The piloting service needs a persistent bidirectional channel that carries
length-prefixed JSON messages and that a browser can open; WebSocket frames
are exactly that.  Only what the bridge uses is implemented: text frames,
ping/pong, close, and server/client handshakes.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import os
import struct

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WsClosed(Exception):
    """Peer closed the channel."""


def _accept_value(key: str) -> str:
    digest = hashlib.sha1((key + _GUID).encode()).digest()
    return base64.b64encode(digest).decode()


async def _read_headers(reader: asyncio.StreamReader) -> tuple[str, dict]:
    request_line = (await reader.readline()).decode("latin1").strip()
    headers: dict[str, str] = {}
    while True:
        line = (await reader.readline()).decode("latin1")
        if line in ("\r\n", "\n", ""):
            break
        name, _, value = line.partition(":")
        headers[name.strip().lower()] = value.strip()
    return request_line, headers


async def server_handshake(reader: asyncio.StreamReader,
                           writer: asyncio.StreamWriter) -> str:
    """Accept an incoming WebSocket upgrade; returns the request path."""
    request_line, headers = await _read_headers(reader)
    parts = request_line.split()
    path = parts[1] if len(parts) >= 2 else "/"
    key = headers.get("sec-websocket-key")
    if headers.get("upgrade", "").lower() != "websocket" or not key:
        writer.write(b"HTTP/1.1 400 Bad Request\r\n\r\n")
        await writer.drain()
        raise WsClosed("not a websocket upgrade")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {_accept_value(key)}\r\n\r\n"
    )
    writer.write(response.encode("latin1"))
    await writer.drain()
    return path


async def client_handshake(reader: asyncio.StreamReader,
                           writer: asyncio.StreamWriter,
                           host: str, path: str = "/") -> None:
    key = base64.b64encode(os.urandom(16)).decode()
    request = (
        f"GET {path} HTTP/1.1\r\n"
        f"Host: {host}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n\r\n"
    )
    writer.write(request.encode("latin1"))
    await writer.drain()
    status_line, headers = await _read_headers(reader)
    if " 101 " not in status_line + " ":
        raise WsClosed(f"handshake rejected: {status_line}")
    if headers.get("sec-websocket-accept") != _accept_value(key):
        raise WsClosed("bad Sec-WebSocket-Accept")


def _encode_frame(opcode: int, payload: bytes, mask: bool) -> bytes:
    header = bytearray([0x80 | opcode])
    n = len(payload)
    mask_bit = 0x80 if mask else 0
    if n < 126:
        header.append(mask_bit | n)
    elif n < 1 << 16:
        header.append(mask_bit | 126)
        header += struct.pack(">H", n)
    else:
        header.append(mask_bit | 127)
        header += struct.pack(">Q", n)
    if mask:
        key = os.urandom(4)
        header += key
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return bytes(header) + payload


async def send_text(writer: asyncio.StreamWriter, text: str, mask: bool = False) -> None:
    writer.write(_encode_frame(OP_TEXT, text.encode(), mask))
    await writer.drain()


async def _send_control(writer: asyncio.StreamWriter, opcode: int,
                        payload: bytes = b"", mask: bool = False) -> None:
    writer.write(_encode_frame(opcode, payload, mask))
    await writer.drain()


async def _read_frame(reader: asyncio.StreamReader) -> tuple[int, bool, bytes]:
    try:
        head = await reader.readexactly(2)
    except (asyncio.IncompleteReadError, ConnectionResetError) as exc:
        raise WsClosed("connection dropped") from exc
    fin = bool(head[0] & 0x80)
    opcode = head[0] & 0x0F
    masked = bool(head[1] & 0x80)
    n = head[1] & 0x7F
    if n == 126:
        n = struct.unpack(">H", await reader.readexactly(2))[0]
    elif n == 127:
        n = struct.unpack(">Q", await reader.readexactly(8))[0]
    key = await reader.readexactly(4) if masked else None
    payload = await reader.readexactly(n) if n else b""
    if key:
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return opcode, fin, payload


async def recv_text(reader: asyncio.StreamReader,
                    writer: asyncio.StreamWriter, mask_replies: bool = False) -> str:
    """Next text message; replies to pings and raises WsClosed on close."""
    buffer = b""
    while True:
        opcode, fin, payload = await _read_frame(reader)
        if opcode == OP_CLOSE:
            try:
                await _send_control(writer, OP_CLOSE, payload, mask_replies)
            except (ConnectionResetError, RuntimeError):
                pass
            raise WsClosed("close frame received")
        if opcode == OP_PING:
            await _send_control(writer, OP_PONG, payload, mask_replies)
            continue
        if opcode == OP_PONG:
            continue
        if opcode in (OP_TEXT, OP_BINARY, OP_CONT):
            buffer += payload
            if fin:
                return buffer.decode()


async def send_close(writer: asyncio.StreamWriter, mask: bool = False) -> None:
    try:
        await _send_control(writer, OP_CLOSE, b"", mask)
    except (ConnectionResetError, RuntimeError):
        pass

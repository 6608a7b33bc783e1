"""Minimal server-side WebSocket (RFC 6455) over asyncio streams.

Only what the broker needs: the opening handshake, masked client frames,
binary messages, ping/pong, and close. One STOMP frame travels per binary
WebSocket message; no extensions, no subprotocol negotiation beyond
echoing an offered "stomp" token.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import struct

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WebSocketError(Exception):
    pass


async def server_handshake(
    reader: asyncio.StreamReader, writer: asyncio.StreamWriter, path: str
) -> None:
    """Read the HTTP upgrade request and reply 101, or fail."""
    request = await reader.readuntil(b"\r\n\r\n")
    lines = request.decode("latin-1").split("\r\n")
    parts = lines[0].split(" ")
    if len(parts) < 3 or parts[0] != "GET":
        raise WebSocketError("not a GET upgrade request")
    if parts[1].split("?")[0] != path:
        raise WebSocketError(f"unknown path {parts[1]!r}")
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            k, v = line.split(":", 1)
            headers[k.strip().lower()] = v.strip()
    key = headers.get("sec-websocket-key")
    if not key or "upgrade" not in headers.get("connection", "").lower():
        raise WebSocketError("missing upgrade headers")
    accept = base64.b64encode(
        hashlib.sha1((key + _GUID).encode("ascii")).digest()
    ).decode("ascii")
    response = [
        "HTTP/1.1 101 Switching Protocols",
        "Upgrade: websocket",
        "Connection: Upgrade",
        f"Sec-WebSocket-Accept: {accept}",
    ]
    offered = headers.get("sec-websocket-protocol", "")
    if "stomp" in [p.strip() for p in offered.split(",") if p.strip()]:
        response.append("Sec-WebSocket-Protocol: stomp")
    writer.write(("\r\n".join(response) + "\r\n\r\n").encode("latin-1"))
    await writer.drain()


async def read_message(
    reader: asyncio.StreamReader, writer: asyncio.StreamWriter
) -> bytes | None:
    """Read one complete data message; answer pings; None on close."""
    message = bytearray()
    while True:
        hdr = await reader.readexactly(2)
        fin = bool(hdr[0] & 0x80)
        opcode = hdr[0] & 0x0F
        masked = bool(hdr[1] & 0x80)
        length = hdr[1] & 0x7F
        if length == 126:
            (length,) = struct.unpack(">H", await reader.readexactly(2))
        elif length == 127:
            (length,) = struct.unpack(">Q", await reader.readexactly(8))
        if not masked:
            raise WebSocketError("client frames must be masked")
        mask = await reader.readexactly(4)
        payload = bytearray(await reader.readexactly(length))
        for i in range(length):
            payload[i] ^= mask[i % 4]

        if opcode == OP_CLOSE:
            return None
        if opcode == OP_PING:
            await send_frame(writer, OP_PONG, bytes(payload))
            continue
        if opcode == OP_PONG:
            continue
        message.extend(payload)
        if fin:
            return bytes(message)


async def send_frame(
    writer: asyncio.StreamWriter, opcode: int, payload: bytes
) -> None:
    """Send one unmasked (server-side) frame."""
    head = bytearray([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head.append(n)
    elif n < 1 << 16:
        head.append(126)
        head.extend(struct.pack(">H", n))
    else:
        head.append(127)
        head.extend(struct.pack(">Q", n))
    writer.write(bytes(head) + payload)
    await writer.drain()


async def send_close(writer: asyncio.StreamWriter, code: int = 1000) -> None:
    await send_frame(writer, OP_CLOSE, struct.pack(">H", code))

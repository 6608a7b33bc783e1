"""STOMP 1.2 frame model and wire codec.

Frames are NUL-terminated; non-empty bodies always carry a content-length
header so binary payloads (embedded NULs included) survive the wire.
Header escaping follows the 1.2 table and is applied to every frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

CLIENT_COMMANDS = frozenset(
    {"CONNECT", "SEND", "SUBSCRIBE", "UNSUBSCRIBE", "DISCONNECT"}
)
SERVER_COMMANDS = frozenset({"CONNECTED", "MESSAGE", "RECEIPT", "ERROR"})
ALL_COMMANDS = CLIENT_COMMANDS | SERVER_COMMANDS

_ESCAPE = {"\\": "\\\\", "\r": "\\r", "\n": "\\n", ":": "\\c"}
_UNESCAPE = {"\\": "\\", "r": "\r", "n": "\n", "c": ":"}


class StompError(Exception):
    """Protocol violation while encoding or decoding a frame."""


class IncompleteFrame(StompError):
    """The buffer ends before the frame does; feed more bytes."""


@dataclass
class StompFrame:
    command: str
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes = b""

    def header(self, name: str, default: str | None = None) -> str | None:
        """First value for ``name``, per the STOMP repeated-header rule."""
        for k, v in self.headers:
            if k == name:
                return v
        return default

    def with_header(self, name: str, value: str) -> "StompFrame":
        """Copy with ``name`` set (replacing any existing occurrences)."""
        headers = [(k, v) for k, v in self.headers if k != name]
        headers.append((name, value))
        return StompFrame(self.command, headers, self.body)


def _escape(text: str) -> str:
    return "".join(_ESCAPE.get(ch, ch) for ch in text)


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text) or text[i + 1] not in _UNESCAPE:
                raise StompError(f"invalid escape sequence in header: {text!r}")
            out.append(_UNESCAPE[text[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def encode_frame(frame: StompFrame, role: str | None = None) -> bytes:
    """Serialize a frame to wire bytes.

    ``role`` may be "client" or "server" to reject commands the sending
    side must not emit. content-length is inserted (or overwritten)
    whenever the body is non-empty.
    """
    if frame.command not in ALL_COMMANDS:
        raise StompError(f"unknown command {frame.command!r}")
    if role == "client" and frame.command not in CLIENT_COMMANDS:
        raise StompError(f"client may not send {frame.command}")
    if role == "server" and frame.command not in SERVER_COMMANDS:
        raise StompError(f"server may not send {frame.command}")

    headers = list(frame.headers)
    if frame.body:
        headers = [(k, v) for k, v in headers if k != "content-length"]
        headers.append(("content-length", str(len(frame.body))))

    lines = [frame.command]
    for name, value in headers:
        lines.append(f"{_escape(name)}:{_escape(value)}")
    head = "\n".join(lines) + "\n\n"
    return head.encode("utf-8") + frame.body + b"\x00"


def decode_frame(buf: bytes | bytearray, offset: int = 0) -> tuple[StompFrame, int]:
    """Parse one frame starting at ``offset``.

    Returns (frame, next_offset). Leading EOL bytes (heart-beats) are
    skipped. Raises IncompleteFrame when the buffer ends mid-frame and
    StompError on malformed input.
    """
    n = len(buf)
    i = offset
    while i < n and buf[i] in (0x0A, 0x0D):
        i += 1
    if i >= n:
        raise IncompleteFrame("no frame start")

    head_end = buf.find(b"\n\n", i)
    if head_end < 0:
        raise IncompleteFrame("header section not terminated")
    head = bytes(buf[i:head_end]).decode("utf-8")
    lines = head.split("\n")
    command = lines[0].rstrip("\r")
    if command not in ALL_COMMANDS:
        raise StompError(f"malformed command token {command!r}")

    headers: list[tuple[str, str]] = []
    for line in lines[1:]:
        line = line.rstrip("\r")
        sep = line.find(":")
        if sep < 0:
            raise StompError(f"header line without colon: {line!r}")
        headers.append((_unescape(line[:sep]), _unescape(line[sep + 1 :])))

    body_start = head_end + 2
    frame = StompFrame(command, headers)
    length = frame.header("content-length")
    if length is not None:
        try:
            nbytes = int(length)
        except ValueError:
            raise StompError(f"bad content-length {length!r}") from None
        end = body_start + nbytes
        if end + 1 > n:
            raise IncompleteFrame("body shorter than content-length")
        body = bytes(buf[body_start:end])
        if buf[end] != 0x00:
            raise StompError("content-length disagrees with frame terminator")
        frame.body = body
        return frame, end + 1

    end = buf.find(b"\x00", body_start)
    if end < 0:
        raise IncompleteFrame("missing terminating NUL")
    frame.body = bytes(buf[body_start:end])
    return frame, end + 1


class StompParser:
    """Incremental push parser: feed bytes, pull complete frames."""

    def __init__(self, max_frame_size: int = 16 * 1024 * 1024):
        self._buf = bytearray()
        self._max = max_frame_size

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)

    def frames(self):
        """Yield every complete frame currently buffered."""
        while True:
            try:
                frame, end = decode_frame(self._buf)
            except IncompleteFrame:
                if len(self._buf) > self._max:
                    raise StompError("frame exceeds size cap")
                # drop heart-beat noise so the buffer cannot grow unbounded
                if not self._buf.strip(b"\r\n"):
                    self._buf.clear()
                return
            if end > self._max:
                raise StompError("frame exceeds size cap")
            del self._buf[:end]
            yield frame

"""Embeddable in-memory STOMP 1.2 topic broker.

Topics only, at-most-once, no persistence. TCP carries the raw NUL-framed
protocol; WebSocket carries one STOMP frame per binary message. All
connections share one asyncio event loop, so routing for a topic is
naturally serialized and publisher order is preserved. Each connection
has an outbound queue drained by its own writer task.
"""

from __future__ import annotations

import asyncio
import itertools
import logging
import threading
from dataclasses import dataclass, field

from . import ws
from .frame import StompFrame, StompParser, StompError, encode_frame

log = logging.getLogger(__name__)

DEFAULT_TCP_PORT = 61613
DEFAULT_WS_PORT = 61614
WS_PATH = "/stomp"
MAX_FRAME_SIZE = 16 * 1024 * 1024

# headers the broker owns on MESSAGE frames; everything else passes through
_RESERVED = {"destination", "message-id", "subscription", "receipt", "content-length"}


@dataclass
class BrokerConfig:
    host: str = "127.0.0.1"
    tcp_port: int | None = DEFAULT_TCP_PORT
    ws_port: int | None = DEFAULT_WS_PORT
    max_frame_size: int = MAX_FRAME_SIZE


class _Connection:
    def __init__(self, broker: "Broker", send_bytes):
        self.broker = broker
        self.send_bytes = send_bytes  # coroutine fn(bytes)
        self.queue: asyncio.Queue[bytes | None] = asyncio.Queue()
        self.subscriptions: dict[str, str] = {}  # sub id -> destination
        self.connected = False
        self.closing = False

    def enqueue(self, frame: StompFrame) -> None:
        if not self.closing:
            self.queue.put_nowait(encode_frame(frame, role="server"))

    async def writer_loop(self) -> None:
        while True:
            data = await self.queue.get()
            if data is None:
                return
            try:
                await self.send_bytes(data)
            except (ConnectionError, OSError):
                return


class Broker:
    """Holds topic subscription tables and routes frames."""

    def __init__(self, config: BrokerConfig | None = None):
        self.config = config or BrokerConfig()
        # destination -> list of (connection, sub_id), in subscribe order
        self.topics: dict[str, list[tuple[_Connection, str]]] = {}
        self._message_ids = itertools.count(1)
        self._servers: list[asyncio.AbstractServer] = []

    # frame handling ---------------------------------------------------

    def _handle_frame(self, conn: _Connection, frame: StompFrame) -> None:
        receipt = frame.header("receipt")
        cmd = frame.command
        if cmd == "CONNECT":
            accept = frame.header("accept-version", "")
            if "1.2" not in accept.split(","):
                raise StompError("accept-version must include 1.2")
            conn.connected = True
            conn.enqueue(
                StompFrame("CONNECTED", [("version", "1.2"), ("heart-beat", "0,0")])
            )
            return
        if not conn.connected:
            raise StompError(f"{cmd} before CONNECT")
        if cmd == "SUBSCRIBE":
            sub_id = frame.header("id")
            dest = frame.header("destination")
            if not sub_id or not dest:
                raise StompError("SUBSCRIBE requires id and destination")
            if not dest.startswith("/topic/"):
                raise StompError(f"only /topic/ destinations exist: {dest!r}")
            if sub_id in conn.subscriptions:
                raise StompError(f"duplicate subscription id {sub_id!r}")
            conn.subscriptions[sub_id] = dest
            self.topics.setdefault(dest, []).append((conn, sub_id))
        elif cmd == "UNSUBSCRIBE":
            sub_id = frame.header("id")
            dest = conn.subscriptions.pop(sub_id, None)
            if dest is None:
                raise StompError(f"unknown subscription id {sub_id!r}")
            self.topics[dest].remove((conn, sub_id))
        elif cmd == "SEND":
            dest = frame.header("destination")
            if not dest or not dest.startswith("/topic/"):
                raise StompError(f"SEND requires a /topic/ destination: {dest!r}")
            self._route(dest, frame)
        elif cmd == "DISCONNECT":
            pass  # receipt (if any) goes out below, then the queue closes
        else:
            raise StompError(f"client may not send {cmd}")
        if receipt is not None:
            conn.enqueue(StompFrame("RECEIPT", [("receipt-id", receipt)]))
        if cmd == "DISCONNECT":
            conn.closing = True
            conn.queue.put_nowait(None)

    def _route(self, dest: str, frame: StompFrame) -> None:
        passthrough = [(k, v) for k, v in frame.headers if k not in _RESERVED]
        for conn, sub_id in self.topics.get(dest, []):
            headers = [
                ("destination", dest),
                ("message-id", str(next(self._message_ids))),
                ("subscription", sub_id),
            ] + passthrough
            conn.enqueue(StompFrame("MESSAGE", headers, frame.body))

    def _drop(self, conn: _Connection) -> None:
        for sub_id, dest in conn.subscriptions.items():
            try:
                self.topics[dest].remove((conn, sub_id))
            except (KeyError, ValueError):
                pass
        conn.subscriptions.clear()
        conn.closing = True
        conn.queue.put_nowait(None)

    async def _run_connection(self, conn: _Connection, read_chunks) -> None:
        writer_task = asyncio.ensure_future(conn.writer_loop())
        parser = StompParser(self.config.max_frame_size)
        try:
            async for chunk in read_chunks:
                parser.feed(chunk)
                for frame in parser.frames():
                    self._handle_frame(conn, frame)
        except StompError as exc:
            conn.enqueue(StompFrame("ERROR", [("message", str(exc))]))
        except (ConnectionError, asyncio.IncompleteReadError, OSError):
            pass
        finally:
            self._drop(conn)
            await writer_task

    # transports -------------------------------------------------------

    async def _tcp_client(self, reader, writer) -> None:
        async def send_bytes(data: bytes) -> None:
            writer.write(data)
            await writer.drain()

        async def chunks():
            while True:
                data = await reader.read(65536)
                if not data:
                    return
                yield data

        conn = _Connection(self, send_bytes)
        await self._run_connection(conn, chunks())
        writer.close()

    async def _ws_client(self, reader, writer) -> None:
        try:
            await ws.server_handshake(reader, writer, WS_PATH)
        except (ws.WebSocketError, asyncio.IncompleteReadError, ConnectionError):
            writer.close()
            return

        async def send_bytes(data: bytes) -> None:
            await ws.send_frame(writer, ws.OP_BINARY, data)

        async def chunks():
            while True:
                try:
                    message = await ws.read_message(reader, writer)
                except (ws.WebSocketError, asyncio.IncompleteReadError):
                    return
                if message is None:
                    return
                yield message

        conn = _Connection(self, send_bytes)
        await self._run_connection(conn, chunks())
        try:
            await ws.send_close(writer)
        except (ConnectionError, OSError):
            pass
        writer.close()

    async def start(self) -> None:
        cfg = self.config
        if cfg.tcp_port is not None:
            self._servers.append(
                await asyncio.start_server(self._tcp_client, cfg.host, cfg.tcp_port)
            )
        if cfg.ws_port is not None:
            self._servers.append(
                await asyncio.start_server(self._ws_client, cfg.host, cfg.ws_port)
            )

    async def stop(self) -> None:
        for server in self._servers:
            server.close()
            await server.wait_closed()
        self._servers.clear()


@dataclass
class BrokerHandle:
    """A broker running on a background thread, for embedding and tests."""

    broker: Broker
    thread: threading.Thread
    loop: asyncio.AbstractEventLoop
    _stopped: threading.Event = field(default_factory=threading.Event)

    def stop(self) -> None:
        if self._stopped.is_set():
            return
        self._stopped.set()

        async def shutdown():
            await self.broker.stop()
            current = asyncio.current_task()
            for task in asyncio.all_tasks():
                if task is not current:
                    task.cancel()

        asyncio.run_coroutine_threadsafe(shutdown(), self.loop).result(5)
        self.loop.call_soon_threadsafe(self.loop.stop)
        self.thread.join(timeout=5)

    def __enter__(self) -> "BrokerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def broker_serve(config: BrokerConfig | None = None) -> BrokerHandle:
    """Start a broker on a daemon thread and return its handle."""
    broker = Broker(config)
    loop = asyncio.new_event_loop()
    started: threading.Event = threading.Event()
    error: list[BaseException] = []

    def run() -> None:
        asyncio.set_event_loop(loop)
        try:
            loop.run_until_complete(broker.start())
        except BaseException as exc:  # bind failures surface to the caller
            error.append(exc)
            started.set()
            return
        started.set()
        loop.run_forever()
        loop.run_until_complete(loop.shutdown_asyncgens())
        loop.close()

    thread = threading.Thread(target=run, name="stomp-broker", daemon=True)
    thread.start()
    started.wait()
    if error:
        raise error[0]
    return BrokerHandle(broker=broker, thread=thread, loop=loop)

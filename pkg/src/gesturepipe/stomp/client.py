"""Blocking STOMP client used by every pipeline component.

A background reader thread demultiplexes MESSAGE frames into per-
subscription queues and completes pending receipts. The client handle
itself is meant for one foreground thread; components are single event
loops by design.
"""

from __future__ import annotations

import itertools
import queue
import socket
import threading

from .frame import StompFrame, StompParser, StompError, encode_frame

RECEIPT_TIMEOUT_S = 5.0


class ClientError(Exception):
    pass


class BrokerReportedError(ClientError):
    """The broker sent an ERROR frame; the connection is dead."""


class ReceiptTimeout(ClientError):
    pass


class Subscription:
    def __init__(self, client: "StompClient", sub_id: str, destination: str):
        self.client = client
        self.id = sub_id
        self.destination = destination
        self.inbox: queue.Queue[StompFrame] = queue.Queue()

    def get(self, timeout: float | None = None) -> StompFrame:
        """Next MESSAGE frame, or raise queue.Empty on timeout."""
        self.client._check_dead()
        frame = self.inbox.get(timeout=timeout)
        if frame is _POISON:
            raise BrokerReportedError(self.client._dead_reason or "connection lost")
        return frame

    def unsubscribe(self) -> None:
        self.client._send(StompFrame("UNSUBSCRIBE", [("id", self.id)]))
        del self.client._subs[self.id]


_POISON = StompFrame("ERROR", [("message", "poison")])


class StompClient:
    def __init__(self, host: str = "127.0.0.1", port: int = 61613,
                 timeout_s: float = RECEIPT_TIMEOUT_S):
        self.timeout_s = timeout_s
        try:
            self._sock = socket.create_connection((host, port), timeout=10.0)
        except OSError as exc:
            raise ClientError(f"cannot connect to broker at {host}:{port}: {exc}")
        self._sock.settimeout(None)
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._subs: dict[str, Subscription] = {}
        self._sub_ids = itertools.count(1)
        self._receipt_ids = itertools.count(1)
        self._receipts: dict[str, threading.Event] = {}
        self._receipt_lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._connected = threading.Event()
        self._dead_reason: str | None = None

        self._reader = threading.Thread(
            target=self._read_loop, name="stomp-client-reader", daemon=True
        )
        self._reader.start()
        self._send(
            StompFrame(
                "CONNECT",
                [("accept-version", "1.2"), ("host", host), ("heart-beat", "0,0")],
            )
        )
        if not self._connected.wait(self.timeout_s):
            raise ClientError(self._dead_reason or "CONNECTED not received")

    # wire -------------------------------------------------------------

    def _send(self, frame: StompFrame) -> None:
        self._check_dead()
        data = encode_frame(frame, role="client")
        with self._write_lock:
            self._sock.sendall(data)

    def _check_dead(self) -> None:
        if self._dead_reason is not None:
            raise BrokerReportedError(self._dead_reason)

    def _read_loop(self) -> None:
        parser = StompParser()
        try:
            while True:
                data = self._sock.recv(65536)
                if not data:
                    self._die("connection closed by broker")
                    return
                parser.feed(data)
                for frame in parser.frames():
                    self._dispatch(frame)
        except (OSError, StompError) as exc:
            self._die(str(exc))

    def _dispatch(self, frame: StompFrame) -> None:
        if frame.command == "MESSAGE":
            sub = self._subs.get(frame.header("subscription", ""))
            if sub is not None:
                sub.inbox.put(frame)
        elif frame.command == "RECEIPT":
            with self._receipt_lock:
                event = self._receipts.pop(frame.header("receipt-id", ""), None)
            if event is not None:
                event.set()
        elif frame.command == "CONNECTED":
            self._connected.set()
        elif frame.command == "ERROR":
            self._die(frame.header("message", "broker error"))

    def _die(self, reason: str) -> None:
        if self._dead_reason is None:
            self._dead_reason = reason
        self._connected.set()
        for sub in list(self._subs.values()):
            sub.inbox.put(_POISON)
        with self._receipt_lock:
            for event in self._receipts.values():
                event.set()
            self._receipts.clear()

    # API --------------------------------------------------------------

    def subscribe(self, destination: str) -> Subscription:
        sub_id = f"sub-{next(self._sub_ids)}"
        sub = Subscription(self, sub_id, destination)
        self._subs[sub_id] = sub
        receipt = f"subr-{sub_id}"
        event = threading.Event()
        with self._receipt_lock:
            self._receipts[receipt] = event
        self._send(
            StompFrame(
                "SUBSCRIBE",
                [("id", sub_id), ("destination", destination), ("receipt", receipt)],
            )
        )
        if not event.wait(self.timeout_s):
            raise ReceiptTimeout(f"no receipt for subscribe to {destination}")
        self._check_dead()
        return sub

    def publish(
        self,
        destination: str,
        body: bytes,
        headers: list[tuple[str, str]] | None = None,
        want_receipt: bool = False,
    ) -> None:
        hdrs = [("destination", destination)] + list(headers or [])
        if want_receipt:
            receipt = f"r-{next(self._receipt_ids)}"
            event = threading.Event()
            with self._receipt_lock:
                self._receipts[receipt] = event
            hdrs.append(("receipt", receipt))
            self._send(StompFrame("SEND", hdrs, body))
            if not event.wait(self.timeout_s):
                raise ReceiptTimeout(f"no receipt for publish to {destination}")
            self._check_dead()
        else:
            self._send(StompFrame("SEND", hdrs, body))

    def disconnect(self) -> None:
        if self._dead_reason is None:
            try:
                self._send(StompFrame("DISCONNECT", []))
            except ClientError:
                pass
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self) -> "StompClient":
        return self

    def __exit__(self, *exc) -> None:
        self.disconnect()

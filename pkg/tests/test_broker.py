import hashlib
import queue

import numpy as np
import pytest

from gesturepipe import schema
from gesturepipe.stomp import BrokerReportedError, StompClient


TOPIC = "/topic/t"


def test_fanout_two_subscribers(make_client):
    pub = make_client()
    s1 = make_client().subscribe(TOPIC)
    s2 = make_client().subscribe(TOPIC)
    pub.publish(TOPIC, b"payload", want_receipt=True)
    m1 = s1.get(timeout=2)
    m2 = s2.get(timeout=2)
    assert m1.body == m2.body == b"payload"
    with pytest.raises(queue.Empty):
        s1.get(timeout=0.1)


def test_unsubscribed_receives_nothing(make_client):
    pub = make_client()
    sub_client = make_client()
    sub = sub_client.subscribe(TOPIC)
    sub.unsubscribe()
    pub.publish(TOPIC, b"gone", want_receipt=True)
    with pytest.raises(queue.Empty):
        sub.get(timeout=0.3)


def test_publisher_order_preserved(make_client):
    pub = make_client()
    sub = make_client().subscribe(TOPIC)
    for i in range(50):
        pub.publish(TOPIC, f"msg-{i}".encode())
    bodies = [sub.get(timeout=2).body for _ in range(50)]
    assert bodies == [f"msg-{i}".encode() for i in range(50)]


def test_loopback_bit_identical(make_client):
    client = make_client()
    sub = client.subscribe(TOPIC)
    body = bytes(range(256)) * 4
    client.publish(TOPIC, body)
    assert sub.get(timeout=2).body == body


def test_receipt_on_publish(make_client):
    # want_receipt=True only returns once the RECEIPT frame arrives
    make_client().publish(TOPIC, b"x", want_receipt=True)


def test_message_headers(make_client):
    client = make_client()
    sub = client.subscribe(TOPIC)
    client.publish(TOPIC, b"x", headers=[("session-id", "abc")])
    frame = sub.get(timeout=2)
    assert frame.header("destination") == TOPIC
    assert frame.header("subscription") == sub.id
    assert frame.header("message-id") is not None
    assert frame.header("session-id") == "abc"


def test_wav_payload_survives_bit_exact(make_client):
    rng = np.random.default_rng(3)
    samples = rng.integers(-32768, 32767, size=16000, dtype=np.int16)
    wav = schema.samples_to_wav(samples)
    client = make_client()
    sub = client.subscribe(TOPIC)
    client.publish(TOPIC, wav)
    assert sub.get(timeout=2).body == wav


def test_protocol_violation_yields_error(make_client):
    import time

    client = make_client()
    # /queue/ destinations don't exist in this broker
    client.publish("/queue/bad", b"x")
    with pytest.raises(BrokerReportedError):
        for _ in range(50):
            client.publish(TOPIC, b"y")
            time.sleep(0.02)


def test_soak_no_loss(make_client):
    pub = make_client()
    sub = make_client().subscribe(TOPIC)
    n = 2000
    digest = hashlib.sha256()
    for i in range(n):
        body = f"{i}".encode()
        digest.update(body)
        pub.publish(TOPIC, body)
    received = hashlib.sha256()
    for _ in range(n):
        received.update(sub.get(timeout=5).body)
    assert received.digest() == digest.digest()


def test_websocket_transport_round_trip(broker):
    # hand-rolled client: HTTP upgrade, then one STOMP frame per binary message
    import base64
    import os
    import socket
    import struct

    from gesturepipe.stomp.frame import StompFrame, StompParser, encode_frame

    port = broker.broker.config.ws_port
    sock = socket.create_connection(("127.0.0.1", port), timeout=5)
    key = base64.b64encode(os.urandom(16)).decode()
    sock.sendall(
        (
            f"GET /stomp HTTP/1.1\r\nHost: localhost:{port}\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
        ).encode()
    )
    response = b""
    while b"\r\n\r\n" not in response:
        response += sock.recv(4096)
    assert b"101" in response.split(b"\r\n")[0]

    def send_ws(payload: bytes):
        mask = os.urandom(4)
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        n = len(payload)
        if n < 126:
            head = bytes([0x82, 0x80 | n])
        else:
            head = bytes([0x82, 0x80 | 126]) + struct.pack(">H", n)
        sock.sendall(head + mask + masked)

    def recv_ws() -> bytes:
        hdr = sock.recv(2)
        length = hdr[1] & 0x7F
        if length == 126:
            (length,) = struct.unpack(">H", sock.recv(2))
        data = b""
        while len(data) < length:
            data += sock.recv(length - len(data))
        return data

    parser = StompParser()
    send_ws(encode_frame(StompFrame("CONNECT", [("accept-version", "1.2")])))
    parser.feed(recv_ws())
    (connected,) = list(parser.frames())
    assert connected.command == "CONNECTED"
    assert connected.header("version") == "1.2"

    send_ws(encode_frame(StompFrame("SUBSCRIBE", [("id", "s1"), ("destination", TOPIC)])))
    send_ws(encode_frame(StompFrame("SEND", [("destination", TOPIC)], b"via-ws")))
    parser.feed(recv_ws())
    (message,) = list(parser.frames())
    assert message.command == "MESSAGE"
    assert message.body == b"via-ws"
    sock.close()

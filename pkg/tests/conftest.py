import socket
import threading

import pytest

from gesturepipe import assets
from gesturepipe import gesture as ges
from gesturepipe.stomp import BrokerConfig, StompClient, broker_serve


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def broker():
    config = BrokerConfig(tcp_port=free_port(), ws_port=free_port())
    handle = broker_serve(config)
    yield handle
    handle.stop()


@pytest.fixture
def make_client(broker):
    clients = []

    def factory():
        client = StompClient(port=broker.broker.config.tcp_port)
        clients.append(client)
        return client

    yield factory
    for client in clients:
        client.disconnect()


@pytest.fixture(scope="session")
def reference_model():
    return assets.reference_model()


@pytest.fixture(scope="session")
def reference_stats():
    return assets.reference_norm_stats()


@pytest.fixture(scope="session")
def skeleton():
    return ges.Skeleton()


class PipelineStack:
    """Broker plus all three components on background threads."""

    def __init__(self, tcp_port: int):
        from gesturepipe import chatbot as cb
        from gesturepipe import orchestrator as orch

        self.tcp_port = tcp_port
        self.stop_event = threading.Event()
        self.clients = [StompClient(port=tcp_port) for _ in range(3)]
        self.agent_host = orch.AgentHost(self.clients[2])
        self.threads = [
            threading.Thread(
                target=cb.chatbot_component_run,
                args=(self.clients[0],),
                kwargs={"stop_event": self.stop_event},
                daemon=True,
            ),
            threading.Thread(
                target=ges.gesture_component_run,
                args=(
                    self.clients[1],
                    assets.reference_model(),
                    ges.Skeleton(),
                    assets.reference_norm_stats(),
                ),
                kwargs={"stop_event": self.stop_event},
                daemon=True,
            ),
            threading.Thread(
                target=self.agent_host.run,
                args=(self.stop_event,),
                daemon=True,
            ),
        ]
        for t in self.threads:
            t.start()

    def shutdown(self):
        self.stop_event.set()
        for t in self.threads:
            t.join(timeout=3)
        for c in self.clients:
            c.disconnect()


@pytest.fixture
def stack(broker):
    s = PipelineStack(broker.broker.config.tcp_port)
    yield s
    s.shutdown()

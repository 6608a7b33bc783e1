from .frame import StompFrame, StompParser, StompError, IncompleteFrame, encode_frame, decode_frame
from .broker import Broker, BrokerConfig, BrokerHandle, broker_serve
from .client import StompClient, Subscription, ClientError, BrokerReportedError, ReceiptTimeout

__all__ = [
    "StompFrame", "StompParser", "StompError", "IncompleteFrame",
    "encode_frame", "decode_frame",
    "Broker", "BrokerConfig", "BrokerHandle", "broker_serve",
    "StompClient", "Subscription", "ClientError", "BrokerReportedError",
    "ReceiptTimeout",
]

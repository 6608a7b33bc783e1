"""Broker-mediated pipeline for an embodied conversational agent:
chatbot speech, co-speech gesture synthesis, and synchronized playback."""

__version__ = "0.1.0"

"""Scripted chatbot backend with a deterministic tone-based TTS stub.

Stands in for the intent-platform / neural-chatbot / neural-TTS stack:
a token-overlap intent matcher picks a canned reply, and the synthesizer
renders each syllable as a fixed-frequency tone, which makes durations
and word timings exact by construction.
"""

from __future__ import annotations

import hashlib
import logging
import re
import time
from dataclasses import dataclass

import numpy as np

from . import schema
from .schema import (
    AgentSpeech,
    SchemaError,
    StageTelemetry,
    UserUtterance,
    WordTiming,
    tokenize,
)

log = logging.getLogger(__name__)

VOWELS = frozenset("aeiouy")


class ChatbotError(ValueError):
    pass


# --- intents ----------------------------------------------------------


@dataclass(frozen=True)
class Intent:
    name: str
    patterns: tuple[str, ...]
    reply: str


@dataclass(frozen=True)
class IntentTable:
    intents: tuple[Intent, ...]
    fallback_reply: str

    def __post_init__(self):
        if not self.intents:
            raise ChatbotError("intent table must contain at least one intent")
        if not self.fallback_reply.strip():
            raise ChatbotError("fallback reply must be non-empty")
        names = [i.name for i in self.intents]
        if len(set(names)) != len(names):
            raise ChatbotError("intent names must be unique")


def _match_tokens(text: str) -> set[str]:
    return set(re.findall(r"[^\W_]+", text.lower(), flags=re.UNICODE))


def match_intent(text: str, table: IntentTable) -> str:
    """Token-overlap scoring; ties go to the earlier intent; 0 → fallback."""
    if not text.strip():
        raise ChatbotError("cannot match empty input")
    tokens = _match_tokens(text)
    best_score, best_reply = 0, table.fallback_reply
    for intent in table.intents:
        score = max(
            (len(tokens & _match_tokens(p)) for p in intent.patterns), default=0
        )
        if score > best_score:
            best_score, best_reply = score, intent.reply
    return best_reply


def load_intent_table(path: str) -> IntentTable:
    """Parse the line-based intent config format.

    Directives: ``intent <name>``, then ``pattern <phrase>`` and
    ``reply <text>`` lines; ``fallback <text>`` at any point. Blank
    lines and ``#`` comments are ignored.
    """
    intents: list[Intent] = []
    fallback = ""
    name: str | None = None
    patterns: list[str] = []
    reply = ""

    def flush():
        nonlocal name, patterns, reply
        if name is not None:
            if not patterns or not reply:
                raise ChatbotError(f"intent {name!r} needs patterns and a reply")
            intents.append(Intent(name, tuple(patterns), reply))
        name, patterns, reply = None, [], ""

    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            directive, _, rest = line.partition(" ")
            rest = rest.strip()
            if directive == "intent":
                flush()
                name = rest
            elif directive == "pattern":
                patterns.append(rest)
            elif directive == "reply":
                reply = rest
            elif directive == "fallback":
                fallback = rest
            else:
                raise ChatbotError(f"{path}:{lineno}: unknown directive {directive!r}")
    flush()
    return IntentTable(tuple(intents), fallback)


DEFAULT_INTENTS = IntentTable(
    intents=(
        Intent("greet", ("hello", "hi there", "hey", "good morning"),
               "Hello! It is nice to meet you."),
        Intent("name", ("what is your name", "who are you"),
               "I am a virtual agent that talks with my hands."),
        Intent("weather", ("how is the weather", "weather today"),
               "I live indoors, but I hear it is lovely outside."),
        Intent("gesture", ("can you gesture", "show me a gesture", "wave"),
               "Watch my arms while I speak and you will see."),
        Intent("bye", ("goodbye", "bye", "see you later"),
               "Goodbye, and thank you for the conversation."),
    ),
    fallback_reply="I am not sure about that, but I enjoy talking anyway.",
)


# --- syllables and timing ---------------------------------------------


def count_syllables(word: str) -> int:
    """Maximal vowel groups, minus a trailing silent 'e', clamped to 1."""
    letters = "".join(ch for ch in word.lower() if ch.isalpha())
    if not letters:
        raise ChatbotError(f"no alphabetic characters in {word!r}")
    groups = len(re.findall(r"[aeiouy]+", letters))
    if groups > 1 and letters.endswith("e") and letters[-2] not in VOWELS:
        groups -= 1
    return max(groups, 1)


def estimate_word_timings(
    words: list[str], total_s: float
) -> list[tuple[float, float]]:
    """Contiguous intervals proportional to syllable counts.

    The last interval absorbs floating-point remainder so the partition
    of [0, total_s] is exact.
    """
    if total_s <= 0:
        raise ChatbotError("total duration must be positive")
    if not words:
        raise ChatbotError("need at least one word")
    sylls = [count_syllables(w) for w in words]
    total_sylls = sum(sylls)
    intervals = []
    start = 0.0
    for i, s in enumerate(sylls):
        end = total_s if i == len(sylls) - 1 else start + total_s * s / total_sylls
        intervals.append((start, end))
        start = end
    return intervals


# --- synthesis --------------------------------------------------------


@dataclass(frozen=True)
class TtsVoice:
    per_syllable_s: float = 0.15
    inter_word_gap_s: float = 0.08
    base_pitch_hz: float = 140.0
    pitch_spread_hz: float = 120.0
    ramp_s: float = 0.01
    amplitude: float = 0.4

    def __post_init__(self):
        for name in ("per_syllable_s", "inter_word_gap_s", "ramp_s"):
            if getattr(self, name) <= 0:
                raise ChatbotError(f"{name} must be positive")


def _word_pitch(word: str, voice: TtsVoice) -> float:
    digest = hashlib.sha256(word.lower().encode("utf-8")).digest()
    offset = int.from_bytes(digest[:4], "big") % max(int(voice.pitch_spread_hz), 1)
    return voice.base_pitch_hz + offset


def _tone(freq: float, n_samples: int, ramp_samples: int, amplitude: float) -> np.ndarray:
    t = np.arange(n_samples) / schema.SAMPLE_RATE
    wave_ = amplitude * np.sin(2 * np.pi * freq * t)
    ramp = min(ramp_samples, n_samples // 2)
    if ramp > 0:
        # raised-cosine attack and release
        window = 0.5 * (1 - np.cos(np.pi * np.arange(ramp) / ramp))
        wave_[:ramp] *= window
        wave_[-ramp:] *= window[::-1]
    return wave_


def synthesize_speech(
    reply: str,
    voice: TtsVoice | None = None,
    session_id: str = "local",
    utterance_id: int = 0,
) -> AgentSpeech:
    """Render the reply as per-syllable tones with exact word timings."""
    voice = voice or TtsVoice()
    words = tokenize(reply)
    if not words:
        raise ChatbotError("reply tokenizes to no words")

    syll_samples = round(voice.per_syllable_s * schema.SAMPLE_RATE)
    gap_samples = round(voice.inter_word_gap_s * schema.SAMPLE_RATE)
    ramp_samples = round(voice.ramp_s * schema.SAMPLE_RATE)

    chunks: list[np.ndarray] = []
    timings: list[WordTiming] = []
    cursor = 0
    for i, word in enumerate(words):
        if i > 0:
            chunks.append(np.zeros(gap_samples))
            cursor += gap_samples
        n = count_syllables(word) * syll_samples
        chunks.append(
            _tone(_word_pitch(word, voice), n, ramp_samples, voice.amplitude)
        )
        timings.append(
            WordTiming(
                word,
                cursor / schema.SAMPLE_RATE,
                (cursor + n) / schema.SAMPLE_RATE,
            )
        )
        cursor += n

    samples = np.concatenate(chunks)
    pcm = np.clip(np.round(samples * 32767), -32768, 32767).astype(np.int16)
    return AgentSpeech(
        session_id=session_id,
        utterance_id=utterance_id,
        reply_text=reply,
        audio=schema.samples_to_wav(pcm),
        word_timings=tuple(timings),
        timing_source="exact",
    )


def respond(
    utterance: UserUtterance, table: IntentTable, voice: TtsVoice | None = None
) -> AgentSpeech:
    """Full chatbot step: intent match then synthesis, ids echoed."""
    reply = match_intent(utterance.text, table)
    return synthesize_speech(
        reply, voice, session_id=utterance.session_id,
        utterance_id=utterance.utterance_id,
    )


# --- broker component -------------------------------------------------


def chatbot_component_run(
    client,
    table: IntentTable | None = None,
    voice: TtsVoice | None = None,
    stop_event=None,
) -> None:
    """Serve /topic/user_utterance until the client dies or stop is set."""
    import queue as _queue

    table = table or DEFAULT_INTENTS
    sub = client.subscribe(schema.TOPIC_USER_UTTERANCE)
    log.info("chatbot component serving %s", schema.TOPIC_USER_UTTERANCE)
    while stop_event is None or not stop_event.is_set():
        try:
            frame = sub.get(timeout=0.2)
        except _queue.Empty:
            continue
        except Exception:
            return
        started = time.monotonic()
        try:
            try:
                utterance = schema.decode_utterance(frame.body)
            except SchemaError as exc:
                log.warning("bad utterance: %s", exc)
                headers, body = schema.encode_error_status("?", -1, str(exc))
                client.publish(schema.TOPIC_SPEECH_META, body, headers)
                continue
            try:
                speech = respond(utterance, table, voice)
            except (SchemaError, ChatbotError) as exc:
                headers, body = schema.encode_error_status(
                    utterance.session_id, utterance.utterance_id, str(exc)
                )
                client.publish(schema.TOPIC_SPEECH_META, body, headers)
                continue
            elapsed_ms = (time.monotonic() - started) * 1000
            # telemetry goes first so stage latency is known before the payload
            headers, body = schema.encode_telemetry(
                StageTelemetry(
                    utterance.session_id, utterance.utterance_id, "chatbot", elapsed_ms
                )
            )
            client.publish(schema.TOPIC_TELEMETRY, body, headers)
            headers, body = schema.encode_speech_meta(speech)
            client.publish(schema.TOPIC_SPEECH_META, body, headers)
            headers, body = schema.encode_speech_audio(speech)
            client.publish(schema.TOPIC_SPEECH_AUDIO, body, headers)
        except OSError:
            # connection torn down underneath us (typically at shutdown)
            return

"""Message envelopes, topic names and payload encodings for the broker.

Structured records travel as UTF-8 JSON bodies; speech audio travels as a
separate binary WAV message correlated by (session-id, utterance-id)
headers. Audio is fixed at PCM16 / mono / 16 kHz everywhere.
"""

from __future__ import annotations

import base64
import io
import json
import time
import unicodedata
import wave
from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 16_000
FPS = 20

TOPIC_USER_UTTERANCE = "/topic/user_utterance"
TOPIC_SPEECH_META = "/topic/agent_speech.meta"
TOPIC_SPEECH_AUDIO = "/topic/agent_speech.audio"
TOPIC_MOTION = "/topic/agent_motion"
TOPIC_TELEMETRY = "/topic/telemetry"
TOPIC_PLAYBACK = "/topic/playback"

JSON_HEADERS = [("content-type", "application/json")]

TELEMETRY_STAGES = ("chatbot", "gesture", "transport", "total")


class SchemaError(ValueError):
    """A record violates its invariants or a body cannot be decoded."""


# --- audio ------------------------------------------------------------


def samples_to_wav(samples: np.ndarray) -> bytes:
    """PCM16 mono 16 kHz WAV bytes from an int16 sample array."""
    if samples.dtype != np.int16:
        raise SchemaError(f"samples must be int16, got {samples.dtype}")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(samples.tobytes())
    return buf.getvalue()


def wav_to_samples(payload: bytes) -> np.ndarray:
    """Decode canonical WAV bytes; rejects any other format."""
    try:
        with wave.open(io.BytesIO(payload), "rb") as w:
            if w.getnchannels() != 1:
                raise SchemaError(f"expected mono audio, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise SchemaError(f"expected 16-bit audio, got {8 * w.getsampwidth()}-bit")
            if w.getframerate() != SAMPLE_RATE:
                raise SchemaError(f"expected {SAMPLE_RATE} Hz, got {w.getframerate()}")
            if w.getcomptype() != "NONE":
                raise SchemaError("expected uncompressed PCM")
            data = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise SchemaError(f"not a valid WAV payload: {exc}") from None
    return np.frombuffer(data, dtype=np.int16)


def wav_duration_s(payload: bytes) -> float:
    return len(wav_to_samples(payload)) / SAMPLE_RATE


# --- tokenization (shared by chatbot and features) --------------------


def tokenize(text: str) -> list[str]:
    """Split on whitespace, strip leading/trailing punctuation, keep case."""
    tokens = []
    for raw in text.split():
        start, end = 0, len(raw)
        while start < end and unicodedata.category(raw[start]).startswith("P"):
            start += 1
        while end > start and unicodedata.category(raw[end - 1]).startswith("P"):
            end -= 1
        if end > start:
            tokens.append(raw[start:end])
    return tokens


# --- records ----------------------------------------------------------


@dataclass(frozen=True)
class UserUtterance:
    session_id: str
    utterance_id: int
    text: str
    sent_at: int = field(default_factory=lambda: int(time.time() * 1000))

    def __post_init__(self):
        if not self.text.strip():
            raise SchemaError("utterance text empty after trimming")
        if self.utterance_id < 0:
            raise SchemaError("utterance_id must be non-negative")


@dataclass(frozen=True)
class WordTiming:
    word: str
    start_s: float
    end_s: float


@dataclass(frozen=True)
class AgentSpeech:
    session_id: str
    utterance_id: int
    reply_text: str
    audio: bytes  # canonical WAV payload
    word_timings: tuple[WordTiming, ...]
    timing_source: str  # "exact" | "estimated"

    def __post_init__(self):
        if self.timing_source not in ("exact", "estimated"):
            raise SchemaError(f"bad timing_source {self.timing_source!r}")
        duration = wav_duration_s(self.audio)
        if duration <= 0:
            raise SchemaError("audio duration must be positive")
        _check_timings(self.word_timings, duration)
        words = [t.word for t in self.word_timings]
        if words != tokenize(self.reply_text):
            raise SchemaError("word_timings do not match tokenized reply_text")

    @property
    def duration_s(self) -> float:
        return wav_duration_s(self.audio)


def _check_timings(timings, duration: float, tol: float = 1e-6) -> None:
    prev_end = 0.0
    for t in timings:
        if t.start_s < prev_end - tol or t.end_s < t.start_s:
            raise SchemaError(
                f"word timings overlap or run backwards at {t.word!r}"
            )
        prev_end = t.end_s
    if prev_end > duration + tol:
        raise SchemaError("word timings extend past the audio")


@dataclass(frozen=True)
class MotionClip:
    session_id: str
    utterance_id: int
    joint_names: tuple[str, ...]
    frames: np.ndarray  # (n_frames, 45) angles in degrees
    fps: int = FPS

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if self.fps != FPS:
            raise SchemaError(f"fps is fixed at {FPS}")
        if len(self.joint_names) != 15:
            raise SchemaError(f"expected 15 joints, got {len(self.joint_names)}")
        if frames.ndim != 2 or frames.shape[1] != 3 * len(self.joint_names):
            raise SchemaError(f"frames must be (n, 45), got {frames.shape}")
        if frames.size and (frames.min() < -180.0 or frames.max() >= 180.0):
            raise SchemaError("angles must lie in [-180, 180)")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, MotionClip)
            and self.session_id == other.session_id
            and self.utterance_id == other.utterance_id
            and self.joint_names == other.joint_names
            and self.fps == other.fps
            and np.array_equal(self.frames, other.frames)
        )


@dataclass(frozen=True)
class StageTelemetry:
    session_id: str
    utterance_id: int
    stage: str
    elapsed_ms: float

    def __post_init__(self):
        if self.stage not in TELEMETRY_STAGES:
            raise SchemaError(f"unknown telemetry stage {self.stage!r}")
        if self.elapsed_ms < 0:
            raise SchemaError("elapsed_ms must be non-negative")


@dataclass(frozen=True)
class PlaybackBundle:
    """The synchronized unit released to the UI once motion is present.

    Audio rides inside the JSON as base64 so the browser gets one message;
    error bundles carry a diagnostic instead of payloads.
    """

    session_id: str
    utterance_id: int
    reply_text: str = ""
    audio: bytes = b""
    motion: MotionClip | None = None
    error: str | None = None

    def __post_init__(self):
        if self.error is None and (not self.audio or self.motion is None):
            raise SchemaError("complete bundle requires audio and motion")


# --- wire encoding ----------------------------------------------------


def _json_body(obj: dict) -> bytes:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True).encode("utf-8")


def _parse_json(body: bytes) -> dict:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"malformed JSON body: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError("JSON body must be an object")
    return obj


def encode_utterance(u: UserUtterance) -> tuple[list[tuple[str, str]], bytes]:
    body = _json_body(
        {
            "session_id": u.session_id,
            "utterance_id": u.utterance_id,
            "text": u.text,
            "sent_at": u.sent_at,
        }
    )
    return list(JSON_HEADERS), body


def decode_utterance(body: bytes) -> UserUtterance:
    obj = _parse_json(body)
    try:
        return UserUtterance(
            session_id=obj["session_id"],
            utterance_id=int(obj["utterance_id"]),
            text=obj["text"],
            sent_at=int(obj["sent_at"]),
        )
    except KeyError as exc:
        raise SchemaError(f"utterance missing field {exc}") from None


def encode_speech_meta(s: AgentSpeech) -> tuple[list[tuple[str, str]], bytes]:
    body = _json_body(
        {
            "session_id": s.session_id,
            "utterance_id": s.utterance_id,
            "reply_text": s.reply_text,
            "word_timings": [[t.word, t.start_s, t.end_s] for t in s.word_timings],
            "timing_source": s.timing_source,
        }
    )
    return list(JSON_HEADERS), body


def encode_speech_audio(s: AgentSpeech) -> tuple[list[tuple[str, str]], bytes]:
    headers = [
        ("content-type", "audio/wav"),
        ("session-id", s.session_id),
        ("utterance-id", str(s.utterance_id)),
    ]
    return headers, s.audio


def decode_speech(meta_body: bytes, audio: bytes) -> AgentSpeech:
    """Rebuild AgentSpeech from a correlated (meta, audio) message pair."""
    obj = _parse_json(meta_body)
    try:
        return AgentSpeech(
            session_id=obj["session_id"],
            utterance_id=int(obj["utterance_id"]),
            reply_text=obj["reply_text"],
            audio=audio,
            word_timings=tuple(
                WordTiming(w, float(a), float(b)) for w, a, b in obj["word_timings"]
            ),
            timing_source=obj["timing_source"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed speech meta: {exc}") from None


def speech_meta_ids(meta_body: bytes) -> tuple[str, int]:
    obj = _parse_json(meta_body)
    try:
        return obj["session_id"], int(obj["utterance_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"meta missing correlation fields: {exc}") from None


def encode_motion(m: MotionClip) -> tuple[list[tuple[str, str]], bytes]:
    body = _json_body(
        {
            "session_id": m.session_id,
            "utterance_id": m.utterance_id,
            "fps": m.fps,
            "joint_names": list(m.joint_names),
            "frames": [[round(v, 6) for v in row] for row in m.frames.tolist()],
        }
    )
    return list(JSON_HEADERS), body


def decode_motion(body: bytes) -> MotionClip:
    obj = _parse_json(body)
    try:
        return MotionClip(
            session_id=obj["session_id"],
            utterance_id=int(obj["utterance_id"]),
            joint_names=tuple(obj["joint_names"]),
            frames=np.asarray(obj["frames"], dtype=np.float64).reshape(
                len(obj["frames"]), -1
            ),
            fps=int(obj["fps"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed motion body: {exc}") from None


def encode_telemetry(t: StageTelemetry) -> tuple[list[tuple[str, str]], bytes]:
    body = _json_body(
        {
            "session_id": t.session_id,
            "utterance_id": t.utterance_id,
            "stage": t.stage,
            "elapsed_ms": t.elapsed_ms,
        }
    )
    return list(JSON_HEADERS), body


def decode_telemetry(body: bytes) -> StageTelemetry:
    obj = _parse_json(body)
    try:
        return StageTelemetry(
            session_id=obj["session_id"],
            utterance_id=int(obj["utterance_id"]),
            stage=obj["stage"],
            elapsed_ms=float(obj["elapsed_ms"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed telemetry body: {exc}") from None


def encode_bundle(b: PlaybackBundle) -> tuple[list[tuple[str, str]], bytes]:
    obj: dict = {
        "session_id": b.session_id,
        "utterance_id": b.utterance_id,
    }
    if b.error is not None:
        obj["status"] = "error"
        obj["error"] = b.error
    else:
        obj["status"] = "ok"
        obj["reply_text"] = b.reply_text
        obj["audio_b64"] = base64.b64encode(b.audio).decode("ascii")
        _, motion_body = encode_motion(b.motion)
        obj["motion"] = json.loads(motion_body)
    return list(JSON_HEADERS), _json_body(obj)


def decode_bundle(body: bytes) -> PlaybackBundle:
    obj = _parse_json(body)
    try:
        if obj.get("status") == "error":
            return PlaybackBundle(
                session_id=obj["session_id"],
                utterance_id=int(obj["utterance_id"]),
                error=obj["error"],
            )
        return PlaybackBundle(
            session_id=obj["session_id"],
            utterance_id=int(obj["utterance_id"]),
            reply_text=obj["reply_text"],
            audio=base64.b64decode(obj["audio_b64"]),
            motion=decode_motion(_json_body(obj["motion"])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed bundle body: {exc}") from None


# --- error-status payloads (component robustness) ---------------------


def encode_error_status(
    session_id: str, utterance_id: int, detail: str
) -> tuple[list[tuple[str, str]], bytes]:
    body = _json_body(
        {
            "session_id": session_id,
            "utterance_id": utterance_id,
            "status": "error",
            "error": detail,
        }
    )
    return list(JSON_HEADERS), body


def error_status_of(body: bytes) -> str | None:
    """The diagnostic when ``body`` is an error-status message, else None."""
    try:
        obj = _parse_json(body)
    except SchemaError:
        return None
    if obj.get("status") == "error":
        return str(obj.get("error", "unknown error"))
    return None


# --- bundle validation ------------------------------------------------


def validate_bundle(
    speech: AgentSpeech, motion: MotionClip, joint_names: tuple[str, ...]
) -> list[str]:
    """Violation list for a speech/motion pair; empty means ok."""
    if (speech.session_id, speech.utterance_id) != (
        motion.session_id,
        motion.utterance_id,
    ):
        raise SchemaError("speech and motion refer to different utterances")
    violations = []
    expected = round(speech.duration_s * FPS)
    if abs(motion.n_frames - expected) > 1:
        violations.append(
            f"frame-count: got {motion.n_frames}, expected {expected} ±1"
        )
    if motion.joint_names != tuple(joint_names):
        violations.append("joint-order: motion joints do not match skeleton config")
    return violations

"""Agent host: session lifecycle, speech/motion synchronization,
telemetry aggregation, and the offline batch harness.

The host releases exactly one PlaybackBundle per utterance, and only
once the motion clip is fully present and validated against the audio —
playback never starts on a partial result.
"""

from __future__ import annotations

import logging
import queue as _queue
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import chatbot as cb
from . import features as feat
from . import gesture as ges
from . import schema

log = logging.getLogger(__name__)

STAGE_TIMEOUT_S = 30.0


class OrchestratorError(RuntimeError):
    pass


class UtteranceState(Enum):
    IDLE = "Idle"
    AWAITING_SPEECH = "AwaitingSpeech"
    AWAITING_MOTION = "AwaitingMotion"
    READY = "Ready"
    FAILED = "Failed"


_TRANSITIONS = {
    UtteranceState.IDLE: {UtteranceState.AWAITING_SPEECH, UtteranceState.FAILED},
    UtteranceState.AWAITING_SPEECH: {UtteranceState.AWAITING_MOTION, UtteranceState.FAILED},
    UtteranceState.AWAITING_MOTION: {UtteranceState.READY, UtteranceState.FAILED},
    UtteranceState.READY: {UtteranceState.FAILED},
    UtteranceState.FAILED: set(),
}


def _now_ms() -> float:
    return time.time() * 1000.0


@dataclass
class UtteranceTrack:
    """Lifecycle record for one in-flight utterance."""

    session_id: str
    utterance_id: int
    state: UtteranceState = UtteranceState.IDLE
    received_ms: float = 0.0
    speech_at_ms: float = 0.0
    motion_at_ms: float = 0.0
    bundle_at_ms: float = 0.0
    speech_meta: bytes | None = None
    speech_audio: bytes | None = None
    speech: schema.AgentSpeech | None = None
    motion: schema.MotionClip | None = None
    chatbot_ms: float = 0.0
    gesture_ms: float = 0.0
    state_history: list[UtteranceState] = field(default_factory=list)

    def advance(self, new_state: UtteranceState) -> None:
        if new_state not in _TRANSITIONS[self.state]:
            raise OrchestratorError(
                f"illegal transition {self.state.value} -> {new_state.value}"
            )
        self.state = new_state
        self.state_history.append(new_state)


@dataclass(frozen=True)
class LatencyReport:
    utterance_id: int
    chatbot_ms: float
    gesture_ms: float
    transport_ms: float
    total_ms: float


LATENCY_TSV_HEADER = "utterance_id\tchatbot_ms\tgesture_ms\ttransport_ms\ttotal_ms"


def latency_row(r: LatencyReport) -> str:
    return (
        f"{r.utterance_id}\t{r.chatbot_ms:.3f}\t{r.gesture_ms:.3f}"
        f"\t{r.transport_ms:.3f}\t{r.total_ms:.3f}"
    )


class AgentHost:
    """Single event loop tracking sessions; queue depth 1 per session."""

    def __init__(
        self,
        client,
        joint_names: tuple[str, ...] = ges.JOINT_NAMES,
        stage_timeout_s: float = STAGE_TIMEOUT_S,
    ):
        self.client = client
        self.joint_names = tuple(joint_names)
        self.stage_timeout_s = stage_timeout_s
        self.active: dict[str, UtteranceTrack] = {}  # session_id -> in-flight track
        self.finished: list[UtteranceTrack] = []
        self.reports: list[LatencyReport] = []

        # telemetry is polled before payload topics: components publish
        # their stage telemetry first, so this order guarantees latencies
        # are recorded before the bundle can be released
        self._subs = [
            client.subscribe(schema.TOPIC_USER_UTTERANCE),
            client.subscribe(schema.TOPIC_TELEMETRY),
            client.subscribe(schema.TOPIC_SPEECH_META),
            client.subscribe(schema.TOPIC_SPEECH_AUDIO),
            client.subscribe(schema.TOPIC_MOTION),
        ]
        self._handlers = {
            schema.TOPIC_USER_UTTERANCE: self._on_utterance,
            schema.TOPIC_SPEECH_META: self._on_speech_meta,
            schema.TOPIC_SPEECH_AUDIO: self._on_speech_audio,
            schema.TOPIC_MOTION: self._on_motion,
            schema.TOPIC_TELEMETRY: self._on_telemetry,
        }

    # event handlers ---------------------------------------------------

    def _publish_bundle(self, bundle: schema.PlaybackBundle) -> None:
        headers, body = schema.encode_bundle(bundle)
        self.client.publish(schema.TOPIC_PLAYBACK, body, headers)

    def _fail(self, track: UtteranceTrack, diagnostic: str) -> None:
        log.warning(
            "utterance %s/%d failed in %s: %s",
            track.session_id, track.utterance_id, track.state.value, diagnostic,
        )
        track.advance(UtteranceState.FAILED)
        self._publish_bundle(
            schema.PlaybackBundle(
                session_id=track.session_id,
                utterance_id=track.utterance_id,
                error=f"{diagnostic} (stage={track.state_history[-2].value if len(track.state_history) > 1 else 'Idle'})",
            )
        )
        self.active.pop(track.session_id, None)
        self.finished.append(track)

    def _on_utterance(self, frame) -> None:
        try:
            utterance = schema.decode_utterance(frame.body)
        except schema.SchemaError as exc:
            log.warning("dropping malformed utterance: %s", exc)
            return
        if utterance.session_id in self.active:
            # queue depth 1: reject overlapping turns outright
            self._publish_bundle(
                schema.PlaybackBundle(
                    session_id=utterance.session_id,
                    utterance_id=utterance.utterance_id,
                    error="busy: previous utterance still in flight",
                )
            )
            return
        track = UtteranceTrack(
            session_id=utterance.session_id,
            utterance_id=utterance.utterance_id,
            received_ms=_now_ms(),
        )
        track.advance(UtteranceState.AWAITING_SPEECH)
        self.active[utterance.session_id] = track

    def _track_for(self, session_id: str, utterance_id: int) -> UtteranceTrack | None:
        track = self.active.get(session_id)
        if track is None or track.utterance_id != utterance_id:
            log.info("dropping message for unknown utterance %s/%s", session_id, utterance_id)
            return None
        return track

    def _on_speech_meta(self, frame) -> None:
        error = schema.error_status_of(frame.body)
        try:
            session_id, utterance_id = schema.speech_meta_ids(frame.body)
        except schema.SchemaError:
            return
        track = self._track_for(session_id, utterance_id)
        if track is None:
            return
        if error is not None:
            self._fail(track, f"chatbot error: {error}")
            return
        track.speech_meta = frame.body
        self._maybe_complete_speech(track)

    def _on_speech_audio(self, frame) -> None:
        session_id = frame.header("session-id", "")
        try:
            utterance_id = int(frame.header("utterance-id", "-1"))
        except ValueError:
            return
        track = self._track_for(session_id, utterance_id)
        if track is None:
            return
        track.speech_audio = frame.body
        self._maybe_complete_speech(track)

    def _maybe_complete_speech(self, track: UtteranceTrack) -> None:
        if track.speech_meta is None or track.speech_audio is None:
            return
        if track.state is not UtteranceState.AWAITING_SPEECH:
            return
        try:
            track.speech = schema.decode_speech(track.speech_meta, track.speech_audio)
        except schema.SchemaError as exc:
            self._fail(track, f"invalid speech payload: {exc}")
            return
        track.speech_at_ms = _now_ms()
        track.advance(UtteranceState.AWAITING_MOTION)

    def _on_motion(self, frame) -> None:
        error = schema.error_status_of(frame.body)
        if error is not None:
            try:
                obj_session, obj_utt = schema.speech_meta_ids(frame.body)
            except schema.SchemaError:
                return
            track = self._track_for(obj_session, obj_utt)
            if track is not None:
                self._fail(track, f"gesture error: {error}")
            return
        try:
            motion = schema.decode_motion(frame.body)
        except schema.SchemaError as exc:
            log.warning("dropping malformed motion: %s", exc)
            return
        track = self._track_for(motion.session_id, motion.utterance_id)
        if track is None or track.state is not UtteranceState.AWAITING_MOTION:
            return
        track.motion = motion
        track.motion_at_ms = _now_ms()
        violations = schema.validate_bundle(track.speech, motion, self.joint_names)
        if violations:
            self._fail(track, "bundle validation failed: " + "; ".join(violations))
            return
        self._release(track)

    def _on_telemetry(self, frame) -> None:
        try:
            t = schema.decode_telemetry(frame.body)
        except schema.SchemaError:
            return
        track = self.active.get(t.session_id)
        if track is None or track.utterance_id != t.utterance_id:
            return
        if t.stage == "chatbot":
            track.chatbot_ms = t.elapsed_ms
        elif t.stage == "gesture":
            track.gesture_ms = t.elapsed_ms

    def _release(self, track: UtteranceTrack) -> None:
        track.advance(UtteranceState.READY)
        track.bundle_at_ms = _now_ms()
        self._publish_bundle(
            schema.PlaybackBundle(
                session_id=track.session_id,
                utterance_id=track.utterance_id,
                reply_text=track.speech.reply_text,
                audio=track.speech.audio,
                motion=track.motion,
            )
        )
        total_ms = track.bundle_at_ms - track.received_ms
        transport_ms = total_ms - track.chatbot_ms - track.gesture_ms
        report = LatencyReport(
            utterance_id=track.utterance_id,
            chatbot_ms=track.chatbot_ms,
            gesture_ms=track.gesture_ms,
            transport_ms=transport_ms,
            total_ms=total_ms,
        )
        self.reports.append(report)
        for stage, value in (("transport", max(transport_ms, 0.0)), ("total", total_ms)):
            headers, body = schema.encode_telemetry(
                schema.StageTelemetry(track.session_id, track.utterance_id, stage, value)
            )
            self.client.publish(schema.TOPIC_TELEMETRY, body, headers)
        self.active.pop(track.session_id, None)
        self.finished.append(track)

    # loop -------------------------------------------------------------

    def _check_timeouts(self) -> None:
        now = _now_ms()
        for track in list(self.active.values()):
            if now - track.received_ms > self.stage_timeout_s * 1000:
                self._fail(track, f"stage timeout after {self.stage_timeout_s:g} s")

    def step(self, timeout: float = 0.1) -> bool:
        """Handle at most one message per subscription; True if any seen."""
        self._check_timeouts()
        saw = False
        for sub in self._subs:
            # drain telemetry completely so stage latencies can never lag
            # behind the payload message that follows them
            limit = None if sub.destination == schema.TOPIC_TELEMETRY else 1
            while limit is None or limit > 0:
                try:
                    frame = sub.get(timeout=0.0)
                except _queue.Empty:
                    break
                saw = True
                self._handlers[sub.destination](frame)
                if limit is not None:
                    limit -= 1
        if not saw:
            time.sleep(timeout)
        return saw

    def run(self, stop_event=None) -> None:
        while stop_event is None or not stop_event.is_set():
            try:
                self.step(timeout=0.05)
            except _queue.Empty:
                continue
            except OrchestratorError:
                raise
            except Exception:
                log.exception("agent host stopping")
                return


def agent_run(client, stop_event=None, **kwargs) -> None:
    AgentHost(client, **kwargs).run(stop_event)


# --- offline batch mode ----------------------------------------------


def run_batch(
    script_path: str,
    out_dir: str,
    table: cb.IntentTable | None = None,
    voice: cb.TtsVoice | None = None,
    model: ges.GestureModel | None = None,
    skeleton: ges.Skeleton | None = None,
    stats: feat.NormStats | None = None,
    session_id: str = "batch",
) -> list[LatencyReport]:
    """Run the whole pipeline in-process, one utterance per script line.

    Writes <i>.txt (reply), <i>.wav, <i>.csv (motion) and latency.tsv.
    Content artifacts are deterministic; only latencies vary run to run.
    """
    from . import assets

    try:
        lines = [
            ln.strip()
            for ln in Path(script_path).read_text(encoding="utf-8").splitlines()
            if ln.strip()
        ]
    except OSError as exc:
        raise OrchestratorError(f"unreadable script file: {exc}") from None

    table = table or cb.DEFAULT_INTENTS
    skeleton = skeleton or ges.Skeleton()
    stats = stats if stats is not None else assets.reference_norm_stats()
    model = model or assets.reference_model()

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OrchestratorError(f"unwritable output dir: {exc}") from None

    reports = []
    for i, text in enumerate(lines):
        t0 = time.monotonic()
        utterance = schema.UserUtterance(session_id, i, text)
        speech = cb.respond(utterance, table, voice)
        t1 = time.monotonic()
        clip = ges.generate_for_speech(speech, model, skeleton, stats)
        t2 = time.monotonic()

        (out / f"{i}.txt").write_text(speech.reply_text + "\n", encoding="utf-8")
        (out / f"{i}.wav").write_bytes(speech.audio)
        (out / f"{i}.csv").write_bytes(ges.write_motion_csv(clip))
        t3 = time.monotonic()
        chatbot_ms = (t1 - t0) * 1000
        gesture_ms = (t2 - t1) * 1000
        total_ms = (t3 - t0) * 1000
        reports.append(
            LatencyReport(
                utterance_id=i,
                chatbot_ms=chatbot_ms,
                gesture_ms=gesture_ms,
                transport_ms=total_ms - chatbot_ms - gesture_ms,
                total_ms=total_ms,
            )
        )

    tsv = LATENCY_TSV_HEADER + "\n" + "".join(latency_row(r) + "\n" for r in reports)
    (out / "latency.tsv").write_text(tsv, encoding="utf-8")
    return reports


def read_latency_tsv(path: str) -> list[LatencyReport]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != LATENCY_TSV_HEADER:
        raise OrchestratorError(f"{path}: not a latency.tsv file")
    reports = []
    for ln in lines[1:]:
        if not ln.strip():
            continue
        cells = ln.split("\t")
        reports.append(
            LatencyReport(
                utterance_id=int(cells[0]),
                chatbot_ms=float(cells[1]),
                gesture_ms=float(cells[2]),
                transport_ms=float(cells[3]),
                total_ms=float(cells[4]),
            )
        )
    return reports


# --- one-shot send (CLI helper) ---------------------------------------


def send_utterance(
    client, text: str, session_id: str, utterance_id: int = 0,
    timeout_s: float = STAGE_TIMEOUT_S,
) -> tuple[schema.PlaybackBundle, float | None]:
    """Publish one utterance and await its bundle; returns (bundle, total_ms)."""
    playback = client.subscribe(schema.TOPIC_PLAYBACK)
    telemetry = client.subscribe(schema.TOPIC_TELEMETRY)
    headers, body = schema.encode_utterance(
        schema.UserUtterance(session_id, utterance_id, text)
    )
    client.publish(schema.TOPIC_USER_UTTERANCE, body, headers, want_receipt=True)

    deadline = time.monotonic() + timeout_s
    bundle = None
    while bundle is None:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise OrchestratorError(f"no playback bundle within {timeout_s:g} s")
        try:
            frame = playback.get(timeout=remaining)
        except _queue.Empty:
            continue
        candidate = schema.decode_bundle(frame.body)
        if (candidate.session_id, candidate.utterance_id) == (session_id, utterance_id):
            bundle = candidate

    total_ms = None
    # the total telemetry row is published alongside the bundle
    probe_deadline = time.monotonic() + 2.0
    while total_ms is None and time.monotonic() < probe_deadline:
        try:
            frame = telemetry.get(timeout=0.2)
        except _queue.Empty:
            break
        t = schema.decode_telemetry(frame.body)
        if (t.session_id, t.utterance_id, t.stage) == (session_id, utterance_id, "total"):
            total_ms = t.elapsed_ms
    playback.unsubscribe()
    telemetry.unsubscribe()
    return bundle, total_ms

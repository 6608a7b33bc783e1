import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gesturepipe import schema
from gesturepipe.chatbot import synthesize_speech
from gesturepipe.gesture import JOINT_NAMES


def make_speech(text="hello world", session="s1", uid=0):
    return synthesize_speech(text, session_id=session, utterance_id=uid)


def make_clip(n_frames, session="s1", uid=0):
    return schema.MotionClip(
        session_id=session,
        utterance_id=uid,
        joint_names=JOINT_NAMES,
        frames=np.zeros((n_frames, 45)),
    )


# --- records and invariants ------------------------------------------


def test_blank_utterance_rejected():
    with pytest.raises(schema.SchemaError):
        schema.UserUtterance("s", 0, "   ")


def test_tokenize_strips_punctuation_keeps_case():
    assert schema.tokenize('Hello, "world"! (ok)') == ["Hello", "world", "ok"]


def test_overlapping_word_timings_rejected():
    speech = make_speech()
    headers, body = schema.encode_speech_meta(speech)
    import json

    obj = json.loads(body)
    obj["word_timings"][1][1] = 0.1  # second word starts inside the first
    bad = json.dumps(obj).encode()
    with pytest.raises(schema.SchemaError):
        schema.decode_speech(bad, speech.audio)


def test_motion_angle_range_enforced():
    frames = np.zeros((4, 45))
    frames[2, 7] = 180.0
    with pytest.raises(schema.SchemaError):
        schema.MotionClip("s", 0, JOINT_NAMES, frames)


def test_motion_frame_count_matches_20fps():
    # 3.0 s of audio pairs with a 60-frame clip
    clip = make_clip(60)
    assert clip.n_frames == round(3.0 * schema.FPS)


def test_telemetry_stage_checked():
    with pytest.raises(schema.SchemaError):
        schema.StageTelemetry("s", 0, "render", 1.0)


# --- round trips ------------------------------------------------------


def test_utterance_round_trip():
    u = schema.UserUtterance("s1", 0, "hello", 123456)
    headers, body = schema.encode_utterance(u)
    assert ("content-type", "application/json") in headers
    assert schema.decode_utterance(body) == u


def test_speech_round_trip():
    speech = make_speech()
    _, meta = schema.encode_speech_meta(speech)
    audio_headers, audio = schema.encode_speech_audio(speech)
    assert ("session-id", "s1") in audio_headers
    assert ("utterance-id", "0") in audio_headers
    assert schema.decode_speech(meta, audio) == speech


def test_motion_round_trip():
    rng = np.random.default_rng(0)
    clip = schema.MotionClip(
        "s1", 3, JOINT_NAMES, rng.uniform(-179, 179, (20, 45)).round(6)
    )
    _, body = schema.encode_motion(clip)
    assert schema.decode_motion(body) == clip


def test_telemetry_round_trip():
    t = schema.StageTelemetry("s1", 2, "gesture", 41.5)
    _, body = schema.encode_telemetry(t)
    assert schema.decode_telemetry(body) == t


def test_bundle_round_trip():
    speech = make_speech()
    clip = make_clip(11)
    bundle = schema.PlaybackBundle(
        "s1", 0, reply_text=speech.reply_text, audio=speech.audio, motion=clip
    )
    _, body = schema.encode_bundle(bundle)
    decoded = schema.decode_bundle(body)
    assert decoded.audio == speech.audio
    assert decoded.motion == clip
    assert decoded.error is None


def test_error_bundle_round_trip():
    bundle = schema.PlaybackBundle("s1", 4, error="boom")
    _, body = schema.encode_bundle(bundle)
    decoded = schema.decode_bundle(body)
    assert decoded.error == "boom"


@given(
    session=st.text(min_size=1, max_size=10),
    uid=st.integers(min_value=0, max_value=10_000),
    text=st.text(
        alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd", "Zs")),
        min_size=1,
        max_size=60,
    ).filter(lambda t: t.strip()),
    sent_at=st.integers(min_value=0, max_value=2**53),
)
@settings(max_examples=200)
def test_utterance_round_trip_randomized(session, uid, text, sent_at):
    u = schema.UserUtterance(session, uid, text, sent_at)
    _, body = schema.encode_utterance(u)
    assert schema.decode_utterance(body) == u


def test_malformed_body_rejected():
    with pytest.raises(schema.SchemaError):
        schema.decode_utterance(b"not json")
    with pytest.raises(schema.SchemaError):
        schema.decode_motion(b"[1,2,3]")


# --- WAV --------------------------------------------------------------


def test_wav_round_trip():
    samples = (np.sin(np.linspace(0, 100, 1600)) * 10000).astype(np.int16)
    wav = schema.samples_to_wav(samples)
    assert np.array_equal(schema.wav_to_samples(wav), samples)
    assert schema.wav_duration_s(wav) == pytest.approx(0.1)


def test_wrong_sample_rate_rejected():
    import io
    import wave

    buf = io.BytesIO()
    with wave.open(buf, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(44100)
        w.writeframes(b"\x00\x00" * 100)
    with pytest.raises(schema.SchemaError):
        schema.wav_to_samples(buf.getvalue())


# --- validate_bundle --------------------------------------------------


def test_validate_bundle_ok_within_one_frame():
    speech = make_speech()  # 0.53 s -> 11 frames expected
    assert schema.validate_bundle(speech, make_clip(11), JOINT_NAMES) == []
    assert schema.validate_bundle(speech, make_clip(12), JOINT_NAMES) == []


def test_validate_bundle_frame_count_violation():
    speech = make_speech()
    violations = schema.validate_bundle(speech, make_clip(14), JOINT_NAMES)
    assert any(v.startswith("frame-count") for v in violations)


def test_validate_bundle_id_mismatch():
    speech = make_speech(uid=0)
    clip = make_clip(11, uid=1)
    with pytest.raises(schema.SchemaError):
        schema.validate_bundle(speech, clip, JOINT_NAMES)

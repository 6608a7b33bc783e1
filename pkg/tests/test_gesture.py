import threading

import numpy as np
import pytest

from gesturepipe import assets
from gesturepipe import features as feat
from gesturepipe import gesture as ges
from gesturepipe import schema
from gesturepipe.chatbot import synthesize_speech


F = assets.FEATURE_DIM


def zero_model():
    return ges.GestureModel(
        w1=np.zeros((ges.HIDDEN_SIZE, F + 45)),
        b1=np.zeros(ges.HIDDEN_SIZE),
        w2=np.zeros((45, ges.HIDDEN_SIZE)),
        b2=np.zeros(45),
    )


# --- model loading ----------------------------------------------------


def test_reference_model_loads_with_documented_dims(reference_model):
    assert reference_model.feature_dim == F
    assert reference_model.w1.shape == (ges.HIDDEN_SIZE, F + 45)


def test_model_save_load_round_trip(tmp_path, reference_model):
    path = tmp_path / "model.txt"
    ges.save_model(reference_model, str(path))
    loaded = ges.load_model(str(path))
    assert np.array_equal(loaded.w1, reference_model.w1)
    assert np.array_equal(loaded.b2, reference_model.b2)


def test_truncated_model_rejected(tmp_path, reference_model):
    path = tmp_path / "model.txt"
    ges.save_model(reference_model, str(path))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[: len(lines) // 2]) + "\n")
    with pytest.raises(ges.GestureError):
        ges.load_model(str(path))


def test_nan_weight_rejected(tmp_path, reference_model):
    path = tmp_path / "model.txt"
    ges.save_model(reference_model, str(path))
    text = path.read_text().split("\n")
    cells = text[3].split()
    cells[0] = "nan"
    text[3] = " ".join(cells)
    path.write_text("\n".join(text))
    with pytest.raises(ges.GestureError):
        ges.load_model(str(path))


def test_unknown_version_rejected(tmp_path, reference_model):
    path = tmp_path / "model.txt"
    ges.save_model(reference_model, str(path))
    text = path.read_text().replace("v1", "v9", 1)
    path.write_text(text)
    with pytest.raises(ges.GestureError):
        ges.load_model(str(path))


# --- generation -------------------------------------------------------


def test_zero_model_yields_base_pose(skeleton):
    features = np.random.default_rng(0).normal(0, 1, (40, F))
    clip = ges.generate_motion(features, zero_model(), skeleton)
    assert np.array_equal(clip.frames, np.tile(skeleton.base_pose, (40, 1)))


def test_determinism(reference_model, skeleton):
    features = np.random.default_rng(1).normal(0, 1, (60, F))
    a = ges.generate_motion(features, reference_model, skeleton)
    b = ges.generate_motion(features, reference_model, skeleton)
    assert np.array_equal(a.frames, b.frames)


def test_frame_per_frame_prediction(reference_model, skeleton):
    features = np.zeros((60, F))  # 3.0 s at 20 FPS
    clip = ges.generate_motion(features, reference_model, skeleton)
    assert clip.n_frames == 60


def test_delta_clamp(reference_model, skeleton):
    rng = np.random.default_rng(2)
    features = rng.normal(0, 100, (30, F))  # extreme inputs
    clip = ges.generate_motion(features, reference_model, skeleton)
    deltas = np.diff(
        np.vstack([skeleton.base_pose, clip.frames]), axis=0
    )
    assert np.all(np.abs(deltas) <= ges.DELTA_CLAMP_DEG + 1e-12)


def test_joint_limits_respected(reference_model, skeleton):
    rng = np.random.default_rng(3)
    features = rng.normal(0, 10, (200, F))
    clip = ges.generate_motion(features, reference_model, skeleton)
    assert np.all(np.abs(clip.frames) <= skeleton.clamp_limits)


def test_autoregressive_causality(reference_model, skeleton):
    rng = np.random.default_rng(4)
    features = rng.normal(0, 1, (80, F))
    base = ges.generate_motion(features, reference_model, skeleton)
    for t in (40, 60, 79):
        perturbed = features.copy()
        perturbed[t] += rng.normal(0, 1, F)
        clip = ges.generate_motion(perturbed, reference_model, skeleton)
        # the window reaches back 15 frames: frames before t-15 are untouched
        horizon = t - 15
        assert np.array_equal(clip.frames[:horizon], base.frames[:horizon])
        assert not np.array_equal(clip.frames, base.frames)


def test_dimension_mismatch_rejected(reference_model, skeleton):
    with pytest.raises(ges.GestureError):
        ges.generate_motion(np.zeros((10, F + 1)), reference_model, skeleton)


# --- motion CSV -------------------------------------------------------


def test_zero_clip_csv_layout(skeleton):
    clip = schema.MotionClip("s", 0, skeleton.joint_names, np.zeros((2, 45)))
    lines = ges.write_motion_csv(clip).decode().strip().split("\n")
    assert len(lines) == 3
    assert lines[0].startswith("frame,Hips_x,Hips_y,Hips_z,Spine_x")
    assert lines[1] == "0," + ",".join(["0.000000"] * 45)


def test_csv_round_trip_at_6_decimals(skeleton):
    rng = np.random.default_rng(5)
    frames = rng.uniform(-179, 179, (25, 45))
    clip = schema.MotionClip("s", 0, skeleton.joint_names, frames)
    back = ges.read_motion_csv(ges.write_motion_csv(clip), "s", 0)
    assert np.allclose(back.frames, np.round(frames, 6), atol=5e-7)
    # a second write is bit-identical to writing the quantized clip
    assert ges.write_motion_csv(back) == ges.write_motion_csv(clip)


def test_csv_wrong_channel_count_rejected(skeleton):
    clip = schema.MotionClip("s", 0, skeleton.joint_names, np.zeros((2, 45)))
    data = ges.write_motion_csv(clip).decode()
    lines = data.split("\n")
    lines[0] = ",".join(lines[0].split(",")[:-1])  # drop one header column
    with pytest.raises(ges.GestureError, match="header/skeleton mismatch"):
        ges.read_motion_csv("\n".join(lines).encode())


def test_csv_non_numeric_cell_rejected(skeleton):
    clip = schema.MotionClip("s", 0, skeleton.joint_names, np.zeros((2, 45)))
    data = ges.write_motion_csv(clip).decode().replace("0.000000", "zero", 1)
    with pytest.raises(ges.GestureError, match="non-numeric"):
        ges.read_motion_csv(data.encode())


# --- skeleton ---------------------------------------------------------


def test_skeleton_config_round_trip(tmp_path, skeleton):
    path = tmp_path / "skeleton.json"
    ges.save_skeleton(skeleton, str(path))
    loaded = ges.load_skeleton(str(path))
    assert loaded.joint_names == skeleton.joint_names
    assert loaded.parents == skeleton.parents
    assert np.array_equal(loaded.base_pose, skeleton.base_pose)


def test_skeleton_rejects_cycle():
    with pytest.raises(ges.GestureError):
        ges.Skeleton(parents=(-1, 2, 1) + ges.PARENTS[3:])


def test_no_finger_joints(skeleton):
    assert not any("Finger" in j or "Thumb" in j for j in skeleton.joint_names)
    assert len(skeleton.joint_names) == 15


# --- component over the broker ---------------------------------------


def start_gesture(make_client, stop_event, pair_timeout_s=10.0):
    client = make_client()
    t = threading.Thread(
        target=ges.gesture_component_run,
        args=(
            client,
            assets.reference_model(),
            ges.Skeleton(),
            assets.reference_norm_stats(),
        ),
        kwargs={"stop_event": stop_event, "pair_timeout_s": pair_timeout_s},
        daemon=True,
    )
    t.start()
    return t


def publish_speech(client, speech):
    headers, body = schema.encode_speech_meta(speech)
    client.publish(schema.TOPIC_SPEECH_META, body, headers)
    headers, body = schema.encode_speech_audio(speech)
    client.publish(schema.TOPIC_SPEECH_AUDIO, body, headers)


def test_component_valid_pair_yields_motion(make_client):
    stop = threading.Event()
    start_gesture(make_client, stop)
    probe = make_client()
    motion_sub = probe.subscribe(schema.TOPIC_MOTION)
    speech = synthesize_speech("hello world", session_id="s1", utterance_id=7)
    publish_speech(probe, speech)
    frame = motion_sub.get(timeout=10)
    clip = schema.decode_motion(frame.body)
    assert (clip.session_id, clip.utterance_id) == ("s1", 7)
    assert clip.n_frames == round(speech.duration_s * 20)
    stop.set()


def test_component_meta_without_audio_times_out(make_client):
    stop = threading.Event()
    start_gesture(make_client, stop, pair_timeout_s=0.5)
    probe = make_client()
    motion_sub = probe.subscribe(schema.TOPIC_MOTION)
    speech = synthesize_speech("hello", session_id="s1", utterance_id=0)
    headers, body = schema.encode_speech_meta(speech)
    probe.publish(schema.TOPIC_SPEECH_META, body, headers)

    frame = motion_sub.get(timeout=10)
    assert schema.error_status_of(frame.body) is not None

    # the next complete pair is unaffected
    speech2 = synthesize_speech("hello again", session_id="s1", utterance_id=1)
    publish_speech(probe, speech2)
    frame = motion_sub.get(timeout=10)
    clip = schema.decode_motion(frame.body)
    assert clip.utterance_id == 1
    stop.set()


def test_component_end_to_end_determinism(make_client):
    stop = threading.Event()
    start_gesture(make_client, stop)
    probe = make_client()
    motion_sub = probe.subscribe(schema.TOPIC_MOTION)
    csvs = []
    for uid in (0, 1):
        speech = synthesize_speech("identical input", session_id="s1", utterance_id=uid)
        publish_speech(probe, speech)
        clip = schema.decode_motion(motion_sub.get(timeout=10).body)
        csvs.append(ges.write_motion_csv(
            schema.MotionClip("x", 0, clip.joint_names, clip.frames)
        ))
    assert csvs[0] == csvs[1]
    stop.set()

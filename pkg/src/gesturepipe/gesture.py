"""Autoregressive motion generation and motion file I/O.

The reference model is a deliberately small two-layer network: the input
is the columnwise mean of the 30-frame feature window concatenated with
the previous pose, and the output is a per-frame pose delta. Stability
comes from explicit clamps (±5°/frame per channel, per-joint limits)
rather than from training, which is out of scope.
"""

from __future__ import annotations

import io
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import features as feat
from . import schema
from .schema import MotionClip, SchemaError, StageTelemetry

log = logging.getLogger(__name__)

HIDDEN_SIZE = 64
N_JOINTS = 15
N_CHANNELS = 3 * N_JOINTS  # 45
DELTA_CLAMP_DEG = 5.0
MODEL_MAGIC = "GESTUREPIPE-MODEL"
MODEL_VERSION = 1

JOINT_NAMES = (
    "Hips", "Spine", "Spine1", "Spine2", "Spine3", "Neck", "Head",
    "RShoulder", "RArm", "RForeArm", "RHand",
    "LShoulder", "LArm", "LForeArm", "LHand",
)

# Hips-rooted tree; no finger joints by design
PARENTS = (-1, 0, 1, 2, 3, 4, 5, 4, 7, 8, 9, 4, 11, 12, 13)

BONE_LENGTHS_M = (
    0.0, 0.12, 0.12, 0.12, 0.12, 0.10, 0.12,
    0.18, 0.28, 0.26, 0.08,
    0.18, 0.28, 0.26, 0.08,
)


class GestureError(ValueError):
    pass


@dataclass(frozen=True)
class Skeleton:
    joint_names: tuple[str, ...] = JOINT_NAMES
    parents: tuple[int, ...] = PARENTS
    bone_lengths_m: tuple[float, ...] = BONE_LENGTHS_M
    base_pose: np.ndarray = field(
        default_factory=lambda: np.zeros(N_CHANNELS)
    )
    # symmetric per-channel limit, degrees
    clamp_limits: np.ndarray = field(
        default_factory=lambda: np.full(N_CHANNELS, 90.0)
    )

    def __post_init__(self):
        if len(self.joint_names) != N_JOINTS:
            raise GestureError(f"skeleton must have {N_JOINTS} joints")
        if len(self.parents) != N_JOINTS or self.parents[0] != -1:
            raise GestureError("parents must be a 15-entry tree rooted at joint 0")
        for i, p in enumerate(self.parents[1:], 1):
            if not 0 <= p < i:
                raise GestureError(f"parent of joint {i} must precede it (got {p})")
        base = np.asarray(self.base_pose, dtype=np.float64)
        limits = np.asarray(self.clamp_limits, dtype=np.float64)
        if base.shape != (N_CHANNELS,) or limits.shape != (N_CHANNELS,):
            raise GestureError(f"base pose and limits must have {N_CHANNELS} channels")
        if np.any(limits <= 0) or np.any(limits > 180):
            raise GestureError("clamp limits must lie in (0, 180]")
        object.__setattr__(self, "base_pose", base)
        object.__setattr__(self, "clamp_limits", limits)

    def channel_names(self) -> list[str]:
        return [f"{j}_{axis}" for j in self.joint_names for axis in "xyz"]


def load_skeleton(path: str) -> Skeleton:
    with open(path, encoding="utf-8") as f:
        obj = json.load(f)
    try:
        return Skeleton(
            joint_names=tuple(obj["joint_names"]),
            parents=tuple(obj["parents"]),
            bone_lengths_m=tuple(obj["bone_lengths_m"]),
            base_pose=np.asarray(obj["base_pose"], dtype=np.float64),
            clamp_limits=np.asarray(obj["clamp_limits"], dtype=np.float64),
        )
    except KeyError as exc:
        raise GestureError(f"skeleton config missing key {exc}") from None


def save_skeleton(skeleton: Skeleton, path: str) -> None:
    obj = {
        "joint_names": list(skeleton.joint_names),
        "parents": list(skeleton.parents),
        "bone_lengths_m": list(skeleton.bone_lengths_m),
        "base_pose": skeleton.base_pose.tolist(),
        "clamp_limits": skeleton.clamp_limits.tolist(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


# --- model ------------------------------------------------------------


@dataclass(frozen=True)
class GestureModel:
    """hidden = tanh(W1·x + b1); delta = W2·hidden + b2,
    with x = [window columnwise mean (F) ‖ previous pose (45)]."""

    w1: np.ndarray  # (hidden, F + 45)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (45, hidden)
    b2: np.ndarray  # (45,)

    def __post_init__(self):
        hidden, in_dim = self.w1.shape
        if self.b1.shape != (hidden,):
            raise GestureError("b1 shape inconsistent with W1")
        if self.w2.shape != (N_CHANNELS, hidden):
            raise GestureError("W2 shape inconsistent with hidden/output size")
        if self.b2.shape != (N_CHANNELS,):
            raise GestureError("b2 must have 45 entries")
        if in_dim <= N_CHANNELS:
            raise GestureError("input dimension leaves no room for features")
        for name in ("w1", "b1", "w2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise GestureError(f"non-finite weight in {name}")

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[1] - N_CHANNELS

    def delta(self, window: np.ndarray, prev_pose: np.ndarray) -> np.ndarray:
        x = np.concatenate([window.mean(axis=0), prev_pose])
        hidden = np.tanh(self.w1 @ x + self.b1)
        return self.w2 @ hidden + self.b2


def save_model(model: GestureModel, path: str) -> None:
    """Versioned plain-text format: magic/version line, dims line, then
    each matrix as a name line followed by row-major value lines."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{MODEL_MAGIC} v{MODEL_VERSION}\n")
        f.write(f"F {model.feature_dim} HIDDEN {model.w1.shape[0]} OUT {N_CHANNELS}\n")
        for name in ("w1", "b1", "w2", "b2"):
            m = np.atleast_2d(getattr(model, name))
            f.write(f"{name} {m.shape[0]} {m.shape[1]}\n")
            for row in m:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_model(path: str) -> GestureModel:
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    return _parse_model(lines, path)


def _parse_model(lines: list[str], origin: str) -> GestureModel:
    if not lines or not lines[0].startswith(MODEL_MAGIC):
        raise GestureError(f"{origin}: not a gesture model file")
    version = lines[0].split("v")[-1]
    if version != str(MODEL_VERSION):
        raise GestureError(f"{origin}: unknown format version {version!r}")
    try:
        dims = lines[1].split()
        f_dim, hidden, out = int(dims[1]), int(dims[3]), int(dims[5])
    except (IndexError, ValueError):
        raise GestureError(f"{origin}: malformed dims line") from None
    if out != N_CHANNELS:
        raise GestureError(f"{origin}: output dim must be {N_CHANNELS}")

    arrays: dict[str, np.ndarray] = {}
    i = 2
    for name in ("w1", "b1", "w2", "b2"):
        try:
            header = lines[i].split()
            rows, cols = int(header[1]), int(header[2])
            if header[0] != name:
                raise GestureError(f"{origin}: expected matrix {name!r}")
            block = [
                [float(v) for v in lines[i + 1 + r].split()] for r in range(rows)
            ]
        except (IndexError, ValueError):
            raise GestureError(f"{origin}: truncated matrix {name!r}") from None
        m = np.array(block)
        if m.shape != (rows, cols):
            raise GestureError(f"{origin}: ragged matrix {name!r}")
        arrays[name] = m
        i += 1 + rows

    model = GestureModel(
        w1=arrays["w1"],
        b1=arrays["b1"].ravel(),
        w2=arrays["w2"],
        b2=arrays["b2"].ravel(),
    )
    if model.feature_dim != f_dim or model.w1.shape[0] != hidden:
        raise GestureError(f"{origin}: dims line disagrees with matrix shapes")
    return model


def make_reference_model(feature_dim: int, seed: int = 7) -> GestureModel:
    """Small random weights from a fixed seed; stands in for training."""
    rng = np.random.default_rng(seed)
    in_dim = feature_dim + N_CHANNELS
    return GestureModel(
        w1=rng.normal(0, 0.3, (HIDDEN_SIZE, in_dim)),
        b1=rng.normal(0, 0.1, HIDDEN_SIZE),
        w2=rng.normal(0, 0.5, (N_CHANNELS, HIDDEN_SIZE)),
        b2=np.zeros(N_CHANNELS),
    )


# --- generation -------------------------------------------------------


def generate_motion(
    feature_matrix: np.ndarray,
    model: GestureModel,
    skeleton: Skeleton,
    session_id: str = "local",
    utterance_id: int = 0,
) -> MotionClip:
    """One pose per feature frame, autoregressive from the base pose."""
    feature_matrix = np.asarray(feature_matrix, dtype=np.float64)
    if feature_matrix.ndim != 2 or feature_matrix.shape[0] < 1:
        raise GestureError("feature matrix must be 2-D and non-empty")
    if feature_matrix.shape[1] != model.feature_dim:
        raise GestureError(
            f"feature dim {feature_matrix.shape[1]} does not match "
            f"model F={model.feature_dim}"
        )
    n = feature_matrix.shape[0]
    frames = np.empty((n, N_CHANNELS))
    prev = skeleton.base_pose.copy()
    # keep +180 exactly out of range: clip angles must stay in [-180, 180)
    limits = np.minimum(skeleton.clamp_limits, 180.0 - 1e-6)
    for t in range(n):
        window = feat.build_window(feature_matrix, t)
        delta = np.clip(model.delta(window.matrix, prev), -DELTA_CLAMP_DEG, DELTA_CLAMP_DEG)
        prev = np.clip(prev + delta, -limits, limits)
        frames[t] = prev
    return MotionClip(
        session_id=session_id,
        utterance_id=utterance_id,
        joint_names=skeleton.joint_names,
        frames=frames,
    )


# --- motion CSV -------------------------------------------------------


def write_motion_csv(clip: MotionClip) -> bytes:
    """Header `frame,<joint>_x,...` then one 6-decimal row per frame."""
    channels = [f"{j}_{axis}" for j in clip.joint_names for axis in "xyz"]
    out = io.StringIO()
    out.write("frame," + ",".join(channels) + "\n")
    for i, row in enumerate(clip.frames):
        out.write(str(i) + "," + ",".join(f"{v:.6f}" for v in row) + "\n")
    return out.getvalue().encode("utf-8")


def read_motion_csv(
    data: bytes, session_id: str = "local", utterance_id: int = 0
) -> MotionClip:
    text = data.decode("utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    if not lines:
        raise GestureError("empty motion CSV")
    header = lines[0].split(",")
    if header[0] != "frame" or len(header) != 1 + N_CHANNELS:
        raise GestureError("header/skeleton mismatch")
    joint_names = []
    for col in range(1, len(header), 3):
        name_x = header[col]
        if not name_x.endswith("_x"):
            raise GestureError("header/skeleton mismatch")
        joint = name_x[:-2]
        if header[col + 1] != f"{joint}_y" or header[col + 2] != f"{joint}_z":
            raise GestureError("header/skeleton mismatch")
        joint_names.append(joint)

    frames = []
    for lineno, line in enumerate(lines[1:], 2):
        cells = line.split(",")
        if len(cells) != 1 + N_CHANNELS:
            raise GestureError(f"line {lineno}: ragged row")
        try:
            frames.append([float(c) for c in cells[1:]])
        except ValueError:
            raise GestureError(f"line {lineno}: non-numeric cell") from None
    return MotionClip(
        session_id=session_id,
        utterance_id=utterance_id,
        joint_names=tuple(joint_names),
        frames=np.array(frames).reshape(len(frames), N_CHANNELS),
    )


# --- broker component -------------------------------------------------


def generate_for_speech(
    speech: schema.AgentSpeech,
    model: GestureModel,
    skeleton: Skeleton,
    stats: feat.NormStats,
    variant: str = "minimal_params",
) -> MotionClip:
    """The full inference path: features → windows → autoregression."""
    embed_dim = model.feature_dim - feat.ACOUSTIC_DIMS[variant]
    matrix = feat.features_for_speech(speech, stats, variant, embed_dim)
    return generate_motion(
        matrix, model, skeleton,
        session_id=speech.session_id, utterance_id=speech.utterance_id,
    )


def gesture_component_run(
    client,
    model: GestureModel,
    skeleton: Skeleton,
    stats: feat.NormStats,
    variant: str = "minimal_params",
    pair_timeout_s: float = 10.0,
    stop_event=None,
) -> None:
    """Pair speech meta+audio messages, then publish motion + telemetry."""
    import queue as _queue

    meta_sub = client.subscribe(schema.TOPIC_SPEECH_META)
    audio_sub = client.subscribe(schema.TOPIC_SPEECH_AUDIO)
    log.info("gesture component serving speech topics")
    pending_meta: dict[tuple[str, int], tuple[bytes, float]] = {}
    pending_audio: dict[tuple[str, int], bytes] = {}

    def publish_error(session_id: str, utterance_id: int, detail: str) -> None:
        headers, body = schema.encode_error_status(session_id, utterance_id, detail)
        client.publish(schema.TOPIC_MOTION, body, headers)

    def process(key: tuple[str, int], meta_body: bytes, audio: bytes) -> None:
        started = time.monotonic()
        try:
            speech = schema.decode_speech(meta_body, audio)
            clip = generate_for_speech(speech, model, skeleton, stats, variant)
        except (SchemaError, feat.FeatureError, GestureError) as exc:
            publish_error(key[0], key[1], str(exc))
            return
        elapsed_ms = (time.monotonic() - started) * 1000
        # telemetry goes first so stage latency is known before the payload lands
        headers, body = schema.encode_telemetry(
            StageTelemetry(key[0], key[1], "gesture", elapsed_ms)
        )
        client.publish(schema.TOPIC_TELEMETRY, body, headers)
        headers, body = schema.encode_motion(clip)
        client.publish(schema.TOPIC_MOTION, body, headers)

    while stop_event is None or not stop_event.is_set():
        # expire metas whose audio never arrived
        now = time.monotonic()
        for key in [k for k, (_, t0) in pending_meta.items() if now - t0 > pair_timeout_s]:
            pending_meta.pop(key)
            try:
                publish_error(key[0], key[1], "audio payload missing after timeout")
            except OSError:
                # connection torn down underneath us (typically at shutdown)
                return

        got = False
        try:
            frame = meta_sub.get(timeout=0.1)
            got = True
            if schema.error_status_of(frame.body) is None:
                try:
                    key = schema.speech_meta_ids(frame.body)
                except SchemaError as exc:
                    log.warning("undecodable speech meta: %s", exc)
                else:
                    if key in pending_audio:
                        process(key, frame.body, pending_audio.pop(key))
                    else:
                        pending_meta[key] = (frame.body, time.monotonic())
        except _queue.Empty:
            pass
        except Exception:
            return
        try:
            frame = audio_sub.get(timeout=0.0 if got else 0.1)
            key = (
                frame.header("session-id", ""),
                int(frame.header("utterance-id", "-1")),
            )
            if key in pending_meta:
                meta_body, _ = pending_meta.pop(key)
                process(key, meta_body, frame.body)
            else:
                pending_audio[key] = frame.body
        except _queue.Empty:
            pass
        except ValueError:
            log.warning("audio message without correlation headers")
        except Exception:
            return

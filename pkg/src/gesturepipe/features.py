"""Frame-level feature extraction for the gesture generator.

Audio is carved into 20 FPS frames (800 samples at 16 kHz). Acoustic
features come in two variants: a 513-bin log-power spectrogram, or a
6-value minimal parameter set (loudness, pitch, voicing, zero crossings,
centroid, flux). Word embeddings are hashed character n-grams, aligned
to frames by word-timing midpoint containment, and every prediction
consumes a 30-frame window centered on the target frame.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .schema import SAMPLE_RATE, FPS, AgentSpeech, WordTiming, wav_to_samples

HOP = SAMPLE_RATE // FPS  # 800 samples per frame
FFT_SIZE = 1024
SPECTROGRAM_BINS = FFT_SIZE // 2 + 1  # 513
MINIMAL_DIM = 6
WINDOW_FRAMES = 30  # 1.5 s at 20 FPS
WINDOW_BACK = 15  # rows are frames [center-15, center+14]

LOG_FLOOR = 1e-10
NORM_EPSILON = 1e-8

DEFAULT_EMBED_DIM = 16

PITCH_MIN_HZ = 50.0
PITCH_MAX_HZ = 500.0
VOICING_THRESHOLD = 0.3

ACOUSTIC_DIMS = {"spectrogram": SPECTROGRAM_BINS, "minimal_params": MINIMAL_DIM}


class FeatureError(ValueError):
    pass


def n_frames_for_duration(duration_s: float) -> int:
    return round(duration_s * FPS)


def frame_signal(samples: np.ndarray) -> np.ndarray:
    """(n_frames, 800) float frames; the last partial frame zero-padded."""
    if samples.size == 0:
        raise FeatureError("empty audio")
    x = samples.astype(np.float64) / 32768.0
    # the frame-count law is exact: audio under half a frame yields 0 rows
    n_frames = n_frames_for_duration(len(samples) / SAMPLE_RATE)
    padded = np.zeros(n_frames * HOP)
    padded[: min(len(x), n_frames * HOP)] = x[: n_frames * HOP]
    return padded.reshape(n_frames, HOP)


def _log_power_spectrum(frames: np.ndarray) -> np.ndarray:
    spectrum = np.fft.rfft(frames, n=FFT_SIZE, axis=1)
    power = np.abs(spectrum) ** 2
    return np.log(np.maximum(power, LOG_FLOOR))


def _autocorr_pitch(frame: np.ndarray) -> tuple[float, float]:
    """(log_f0, voiced_flag) via autocorrelation over the 50-500 Hz lags."""
    x = frame - frame.mean()
    energy = float(np.dot(x, x))
    if energy < 1e-12:
        return 0.0, 0.0
    min_lag = int(SAMPLE_RATE / PITCH_MAX_HZ)  # 32
    max_lag = int(SAMPLE_RATE / PITCH_MIN_HZ)  # 320
    corr = np.correlate(x, x, mode="full")[len(x) - 1 :]
    if max_lag >= len(corr):
        max_lag = len(corr) - 1
    window = corr[min_lag : max_lag + 1]
    best = int(np.argmax(window)) + min_lag
    ratio = corr[best] / corr[0]
    if ratio <= VOICING_THRESHOLD:
        return 0.0, 0.0
    return float(np.log(SAMPLE_RATE / best)), 1.0


def _minimal_params(frames: np.ndarray) -> np.ndarray:
    n = frames.shape[0]
    out = np.zeros((n, MINIMAL_DIM))
    power_prev = None
    for i in range(n):
        frame = frames[i]
        mean_square = float(np.mean(frame**2))
        out[i, 0] = 10.0 * np.log10(max(mean_square, LOG_FLOOR))  # RMS loudness dB
        log_f0, voiced = _autocorr_pitch(frame)
        out[i, 1] = log_f0
        out[i, 2] = voiced
        signs = np.signbit(frame).astype(np.int8)
        out[i, 3] = float(np.mean(np.abs(np.diff(signs))))  # zero-crossing rate
        spectrum = np.abs(np.fft.rfft(frame, n=FFT_SIZE)) ** 2
        total = spectrum.sum()
        freqs = np.fft.rfftfreq(FFT_SIZE, d=1.0 / SAMPLE_RATE)
        out[i, 4] = float((freqs * spectrum).sum() / total) if total > LOG_FLOOR else 0.0
        norm = np.sqrt(spectrum)
        if power_prev is None:
            out[i, 5] = 0.0
        else:
            out[i, 5] = float(np.sqrt(np.mean((norm - power_prev) ** 2)))
        power_prev = norm
    return out


def extract_acoustic(audio: bytes, variant: str = "minimal_params") -> np.ndarray:
    """One feature row per 20 FPS frame of the canonical WAV payload."""
    if variant not in ACOUSTIC_DIMS:
        raise FeatureError(f"unknown acoustic variant {variant!r}")
    samples = wav_to_samples(audio)
    frames = frame_signal(samples)
    if variant == "spectrogram":
        feats = _log_power_spectrum(frames)
    else:
        feats = _minimal_params(frames)
    if not np.all(np.isfinite(feats)):
        raise FeatureError("non-finite acoustic feature produced")
    return feats


# --- normalization ----------------------------------------------------


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray  # floored at NORM_EPSILON

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_norm_stats(matrix: np.ndarray) -> NormStats:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise FeatureError("need a 2-D matrix with at least 2 rows to fit stats")
    mean = matrix.mean(axis=0)
    std = np.maximum(matrix.std(axis=0), NORM_EPSILON)
    return NormStats(mean=mean, std=std)


def normalize(matrix: np.ndarray, stats: NormStats) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[1] != stats.dim:
        raise FeatureError(
            f"dimension mismatch: matrix has {matrix.shape[1]} columns, "
            f"stats expect {stats.dim}"
        )
    return (matrix - stats.mean) / stats.std


def denormalize(matrix: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(matrix) * stats.std + stats.mean


def save_norm_stats(stats: NormStats, path: str) -> None:
    """Text format: dimension count, then one "mean std" line per dim."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{stats.dim}\n")
        for m, s in zip(stats.mean, stats.std):
            f.write(f"{float(m)!r} {float(s)!r}\n")


def load_norm_stats(path: str) -> NormStats:
    with open(path, encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    try:
        dim = int(lines[0])
        rows = [tuple(float(v) for v in ln.split()) for ln in lines[1:]]
    except (IndexError, ValueError) as exc:
        raise FeatureError(f"malformed norm-stats file {path}: {exc}") from None
    if len(rows) != dim or any(len(r) != 2 for r in rows):
        raise FeatureError(f"norm-stats file {path} does not match its dimension line")
    mean = np.array([r[0] for r in rows])
    std = np.maximum(np.array([r[1] for r in rows]), NORM_EPSILON)
    return NormStats(mean=mean, std=std)


# --- word embeddings --------------------------------------------------


def _gram_vector(gram: str, dim: int) -> np.ndarray:
    digest = hashlib.sha256(gram.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "big")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def embed_word(word: str, dim: int = DEFAULT_EMBED_DIM) -> np.ndarray:
    """Unit-norm sum of hashed character 3-5 gram vectors of "<word>"."""
    if not word:
        raise FeatureError("cannot embed the empty word")
    marked = f"<{word.casefold()}>"
    total = np.zeros(dim)
    for n in (3, 4, 5):
        for i in range(max(len(marked) - n + 1, 0)):
            total += _gram_vector(marked[i : i + n], dim)
    norm = np.linalg.norm(total)
    if norm < 1e-12:
        # degenerate (word shorter than every n-gram): fall back to the whole token
        total = _gram_vector(marked, dim)
        norm = np.linalg.norm(total)
    return total / norm


def align_text_features(
    word_timings: list[WordTiming] | tuple[WordTiming, ...],
    embeddings: list[np.ndarray],
    n_frames: int,
) -> np.ndarray:
    """Frame t takes the embedding whose interval contains the frame
    midpoint (t + 0.5) / FPS; frames in silence take the zero vector."""
    if len(word_timings) != len(embeddings):
        raise FeatureError("timings and embeddings must be parallel")
    dim = embeddings[0].shape[0] if embeddings else DEFAULT_EMBED_DIM
    out = np.zeros((n_frames, dim))
    for t in range(n_frames):
        midpoint = (t + 0.5) / FPS
        for timing, emb in zip(word_timings, embeddings):
            if timing.start_s <= midpoint < timing.end_s:
                out[t] = emb
                break
    return out


# --- windows and the full pipeline ------------------------------------


@dataclass(frozen=True)
class FeatureWindow:
    matrix: np.ndarray  # (30, F)
    center_frame: int


def build_window(features: np.ndarray, center: int) -> FeatureWindow:
    """Rows center-15 .. center+14, edge-clamped to valid frame indices."""
    n_frames = features.shape[0]
    if not 0 <= center < n_frames:
        raise FeatureError(f"center {center} out of range [0, {n_frames})")
    idx = np.clip(
        np.arange(center - WINDOW_BACK, center + WINDOW_FRAMES - WINDOW_BACK),
        0,
        n_frames - 1,
    )
    return FeatureWindow(matrix=features[idx], center_frame=center)


def features_for_speech(
    speech: AgentSpeech,
    stats: NormStats,
    variant: str = "minimal_params",
    embed_dim: int = DEFAULT_EMBED_DIM,
) -> np.ndarray:
    """(n_frames, F) matrix: normalized acoustic ‖ aligned word embeddings."""
    acoustic = extract_acoustic(speech.audio, variant)
    acoustic = normalize(acoustic, stats)
    embeddings = [embed_word(t.word, embed_dim) for t in speech.word_timings]
    text = align_text_features(speech.word_timings, embeddings, acoustic.shape[0])
    return np.hstack([acoustic, text])

// Payload types and codecs matching the pipeline's JSON message bodies.

export const TOPIC_USER_UTTERANCE = "/topic/user_utterance";
export const TOPIC_PLAYBACK = "/topic/playback";
export const TOPIC_TELEMETRY = "/topic/telemetry";

export const FPS = 20;
export const SAMPLE_RATE = 16000;

export interface MotionClip {
  sessionId: string;
  utteranceId: number;
  fps: number;
  jointNames: string[];
  frames: number[][]; // each row: 45 angles in degrees
}

export interface PlaybackBundle {
  sessionId: string;
  utteranceId: number;
  replyText: string;
  audioWav: Uint8Array;
  motion: MotionClip;
}

export interface ErrorBundle {
  sessionId: string;
  utteranceId: number;
  error: string;
}

export interface Telemetry {
  sessionId: string;
  utteranceId: number;
  stage: string;
  elapsedMs: number;
}

const encoder = new TextEncoder();
const decoder = new TextDecoder();

export function encodeUtterance(
  sessionId: string,
  utteranceId: number,
  text: string,
): Uint8Array {
  return encoder.encode(
    JSON.stringify({
      session_id: sessionId,
      utterance_id: utteranceId,
      text,
      sent_at: Date.now(),
    }),
  );
}

function base64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}

export function decodeBundle(body: Uint8Array): PlaybackBundle | ErrorBundle {
  const obj = JSON.parse(decoder.decode(body));
  if (obj.status === "error") {
    return {
      sessionId: obj.session_id,
      utteranceId: obj.utterance_id,
      error: obj.error,
    };
  }
  return {
    sessionId: obj.session_id,
    utteranceId: obj.utterance_id,
    replyText: obj.reply_text,
    audioWav: base64ToBytes(obj.audio_b64),
    motion: {
      sessionId: obj.motion.session_id,
      utteranceId: obj.motion.utterance_id,
      fps: obj.motion.fps,
      jointNames: obj.motion.joint_names,
      frames: obj.motion.frames,
    },
  };
}

export function isErrorBundle(
  bundle: PlaybackBundle | ErrorBundle,
): bundle is ErrorBundle {
  return "error" in bundle;
}

export function decodeTelemetry(body: Uint8Array): Telemetry {
  const obj = JSON.parse(decoder.decode(body));
  return {
    sessionId: obj.session_id,
    utteranceId: obj.utterance_id,
    stage: obj.stage,
    elapsedMs: obj.elapsed_ms,
  };
}

// Duration from the WAV header chunks (PCM16 mono 16 kHz payloads).
export function wavDurationSeconds(wav: Uint8Array): number {
  const view = new DataView(wav.buffer, wav.byteOffset, wav.byteLength);
  if (wav.length < 44 || view.getUint32(0, false) !== 0x52494646) {
    throw new Error("not a RIFF WAV payload");
  }
  let offset = 12;
  while (offset + 8 <= wav.length) {
    const chunkId = view.getUint32(offset, false);
    const chunkSize = view.getUint32(offset + 4, true);
    if (chunkId === 0x64617461) {
      // "data": PCM16 mono at 16 kHz
      return chunkSize / 2 / SAMPLE_RATE;
    }
    offset += 8 + chunkSize + (chunkSize % 2);
  }
  throw new Error("WAV data chunk not found");
}

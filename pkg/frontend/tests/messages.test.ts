import { describe, expect, it } from "vitest";

import {
  decodeBundle,
  decodeTelemetry,
  encodeUtterance,
  isErrorBundle,
  wavDurationSeconds,
} from "../src/messages.js";

const encoder = new TextEncoder();

describe("encodeUtterance", () => {
  it("emits the snake_case fields the pipeline expects", () => {
    const obj = JSON.parse(
      new TextDecoder().decode(encodeUtterance("s1", 3, "hello there")),
    );
    expect(obj.session_id).toBe("s1");
    expect(obj.utterance_id).toBe(3);
    expect(obj.text).toBe("hello there");
  });
});

describe("decodeBundle", () => {
  it("decodes a playback bundle with embedded audio", () => {
    const audio = new Uint8Array([1, 2, 3, 4]);
    const body = encoder.encode(
      JSON.stringify({
        session_id: "s1",
        utterance_id: 2,
        reply_text: "hi",
        audio_b64: btoa(String.fromCharCode(...audio)),
        motion: {
          session_id: "s1",
          utterance_id: 2,
          fps: 20,
          joint_names: ["Hips"],
          frames: [[0, 0, 0]],
        },
      }),
    );
    const bundle = decodeBundle(body);
    expect(isErrorBundle(bundle)).toBe(false);
    if (!isErrorBundle(bundle)) {
      expect(bundle.replyText).toBe("hi");
      expect(Array.from(bundle.audioWav)).toEqual([1, 2, 3, 4]);
      expect(bundle.motion.frames).toEqual([[0, 0, 0]]);
    }
  });

  it("decodes an error-status bundle", () => {
    const body = encoder.encode(
      JSON.stringify({
        status: "error",
        session_id: "s1",
        utterance_id: 2,
        error: "busy",
      }),
    );
    const bundle = decodeBundle(body);
    expect(isErrorBundle(bundle)).toBe(true);
    if (isErrorBundle(bundle)) expect(bundle.error).toBe("busy");
  });
});

describe("decodeTelemetry", () => {
  it("maps the wire fields", () => {
    const body = encoder.encode(
      JSON.stringify({
        session_id: "s1",
        utterance_id: 0,
        stage: "total",
        elapsed_ms: 104.5,
      }),
    );
    const t = decodeTelemetry(body);
    expect(t.stage).toBe("total");
    expect(t.elapsedMs).toBeCloseTo(104.5, 9);
  });
});

describe("wavDurationSeconds", () => {
  function wav(nSamples: number, extraChunk = false): Uint8Array {
    const dataBytes = nSamples * 2;
    const extra = extraChunk ? 12 : 0;
    const buf = new ArrayBuffer(44 + extra + dataBytes);
    const view = new DataView(buf);
    const ascii = (offset: number, text: string) => {
      for (let i = 0; i < text.length; i++) {
        view.setUint8(offset + i, text.charCodeAt(i));
      }
    };
    ascii(0, "RIFF");
    view.setUint32(4, 36 + extra + dataBytes, true);
    ascii(8, "WAVE");
    ascii(12, "fmt ");
    view.setUint32(16, 16, true);
    view.setUint16(20, 1, true);
    view.setUint16(22, 1, true);
    view.setUint32(24, 16000, true);
    view.setUint32(28, 32000, true);
    view.setUint16(32, 2, true);
    view.setUint16(34, 16, true);
    let offset = 36;
    if (extraChunk) {
      ascii(offset, "LIST");
      view.setUint32(offset + 4, 4, true);
      offset += 12;
    }
    ascii(offset, "data");
    view.setUint32(offset + 4, dataBytes, true);
    return new Uint8Array(buf);
  }

  it("computes duration from the data chunk", () => {
    expect(wavDurationSeconds(wav(16000))).toBeCloseTo(1.0, 9);
    expect(wavDurationSeconds(wav(8000))).toBeCloseTo(0.5, 9);
  });

  it("walks past non-data chunks", () => {
    expect(wavDurationSeconds(wav(16000, true))).toBeCloseTo(1.0, 9);
  });

  it("rejects non-WAV payloads", () => {
    expect(() => wavDurationSeconds(new Uint8Array(100))).toThrow("RIFF");
  });
});

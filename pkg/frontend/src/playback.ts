// Playback synchronization: the animation clock is slaved to the audio
// position, never to wall time. A bundle is validated before any frame
// is shown; mismatched bundles are refused outright.

import { FPS, MotionClip, PlaybackBundle, wavDurationSeconds } from "./messages.js";

// Displayed motion frame for audio time t, clamped to the last frame.
export function frameIndexAt(audioTimeS: number, nFrames: number): number {
  if (nFrames <= 0) throw new Error("clip has no frames");
  const index = Math.floor(audioTimeS * FPS);
  return Math.min(Math.max(index, 0), nFrames - 1);
}

export function validateBundle(bundle: PlaybackBundle): string[] {
  const violations: string[] = [];
  const duration = wavDurationSeconds(bundle.audioWav);
  const expected = Math.round(duration * FPS);
  if (Math.abs(bundle.motion.frames.length - expected) > 1) {
    violations.push(
      `frame-count: got ${bundle.motion.frames.length}, expected ${expected} ±1`,
    );
  }
  if (bundle.motion.fps !== FPS) {
    violations.push(`fps: got ${bundle.motion.fps}, expected ${FPS}`);
  }
  if (
    bundle.motion.sessionId !== bundle.sessionId ||
    bundle.motion.utteranceId !== bundle.utteranceId
  ) {
    violations.push("ids: motion does not belong to this bundle");
  }
  return violations;
}

export interface PlaybackStats {
  framesDropped: number;
  driftMs: number;
  lastFrame: number;
}

// Drives frame selection from a pluggable audio clock so it can be
// tested headlessly against a mocked clock.
export class PlaybackController {
  readonly motion: MotionClip;
  private clock: () => number;
  private stats: PlaybackStats = { framesDropped: 0, driftMs: 0, lastFrame: -1 };

  constructor(bundle: PlaybackBundle, clock: () => number) {
    const violations = validateBundle(bundle);
    if (violations.length > 0) {
      throw new Error(`playback refused: ${violations.join("; ")}`);
    }
    this.motion = bundle.motion;
    this.clock = clock;
  }

  currentFrameIndex(): number {
    const t = this.clock();
    const index = frameIndexAt(t, this.motion.frames.length);
    if (this.stats.lastFrame >= 0 && index > this.stats.lastFrame + 1) {
      this.stats.framesDropped += index - this.stats.lastFrame - 1;
    }
    this.stats.driftMs = (t - index / FPS) * 1000;
    this.stats.lastFrame = index;
    return index;
  }

  currentFrame(): number[] {
    return this.motion.frames[this.currentFrameIndex()];
  }

  playbackStats(): PlaybackStats {
    return { ...this.stats };
  }
}

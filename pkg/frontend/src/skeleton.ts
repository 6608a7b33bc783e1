// 15-joint upper-body skeleton and its 2D forward kinematics.
// Joint angles rotate about the drawing-plane axis (the z channel);
// the x/y channels drive limb shading instead of geometry.

export interface Skeleton {
  jointNames: string[];
  parents: number[];
  boneLengths: number[]; // metres
  restDirections: number[]; // degrees, bone direction at zero pose
}

// Must match the pipeline's skeleton config (names, parents, lengths).
export const DEFAULT_SKELETON: Skeleton = {
  jointNames: [
    "Hips", "Spine", "Spine1", "Spine2", "Spine3", "Neck", "Head",
    "RShoulder", "RArm", "RForeArm", "RHand",
    "LShoulder", "LArm", "LForeArm", "LHand",
  ],
  parents: [-1, 0, 1, 2, 3, 4, 5, 4, 7, 8, 9, 4, 11, 12, 13],
  boneLengths: [
    0.0, 0.12, 0.12, 0.12, 0.12, 0.10, 0.12,
    0.18, 0.28, 0.26, 0.08,
    0.18, 0.28, 0.26, 0.08,
  ],
  // up the spine, then shoulders out, arms hanging down-and-out
  restDirections: [
    0, 90, 90, 90, 90, 90, 90,
    180, -110, -100, -100,
    0, -70, -80, -80,
  ],
};

export interface Point {
  x: number;
  y: number;
}

// Positions in metres relative to the root; y grows upward. A joint's
// z angle rotates its own bone and everything below it in the chain.
export function forwardKinematics2D(
  skeleton: Skeleton,
  frame: number[],
): Point[] {
  const n = skeleton.jointNames.length;
  const positions: Point[] = new Array(n);
  const rotations: number[] = new Array(n);
  for (let j = 0; j < n; j++) {
    const parent = skeleton.parents[j];
    const localZ = frame[3 * j + 2];
    if (parent < 0) {
      positions[j] = { x: 0, y: 0 };
      rotations[j] = localZ;
      continue;
    }
    rotations[j] = rotations[parent] + localZ;
    const angle = skeleton.restDirections[j] + rotations[j];
    const rad = (angle * Math.PI) / 180;
    positions[j] = {
      x: positions[parent].x + skeleton.boneLengths[j] * Math.cos(rad),
      y: positions[parent].y + skeleton.boneLengths[j] * Math.sin(rad),
    };
  }
  return positions;
}

// Per-joint shading factor in [0, 1] from the out-of-plane channels.
export function limbShade(frame: number[], joint: number): number {
  const xy = Math.abs(frame[3 * joint]) + Math.abs(frame[3 * joint + 1]);
  return Math.min(xy / 180, 1);
}

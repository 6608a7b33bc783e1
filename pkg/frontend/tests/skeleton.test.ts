import { describe, expect, it } from "vitest";

import {
  DEFAULT_SKELETON,
  forwardKinematics2D,
  limbShade,
} from "../src/skeleton.js";

const zeroPose = new Array(45).fill(0);

describe("forwardKinematics2D", () => {
  it("places the root at the origin", () => {
    const points = forwardKinematics2D(DEFAULT_SKELETON, zeroPose);
    expect(points[0]).toEqual({ x: 0, y: 0 });
  });

  it("stacks the spine vertically at the zero pose", () => {
    const points = forwardKinematics2D(DEFAULT_SKELETON, zeroPose);
    const head = points[DEFAULT_SKELETON.jointNames.indexOf("Head")];
    expect(head.x).toBeCloseTo(0, 9);
    // Hips..Head spine bone lengths sum
    expect(head.y).toBeCloseTo(0.12 * 5 + 0.1, 9);
  });

  it("keeps every bone at its configured length", () => {
    const pose = zeroPose.map((_, i) => ((i * 37) % 90) - 45);
    const points = forwardKinematics2D(DEFAULT_SKELETON, pose);
    for (let j = 1; j < points.length; j++) {
      const parent = DEFAULT_SKELETON.parents[j];
      const dx = points[j].x - points[parent].x;
      const dy = points[j].y - points[parent].y;
      expect(Math.hypot(dx, dy)).toBeCloseTo(
        DEFAULT_SKELETON.boneLengths[j],
        9,
      );
    }
  });

  it("is left-right symmetric at the zero pose", () => {
    const points = forwardKinematics2D(DEFAULT_SKELETON, zeroPose);
    const names = DEFAULT_SKELETON.jointNames;
    for (const limb of ["Shoulder", "Arm", "ForeArm", "Hand"]) {
      const right = points[names.indexOf(`R${limb}`)];
      const left = points[names.indexOf(`L${limb}`)];
      expect(right.x).toBeCloseTo(-left.x, 9);
      expect(right.y).toBeCloseTo(left.y, 9);
    }
  });

  it("propagates a parent rotation to all descendants", () => {
    const pose = zeroPose.slice();
    const spine = DEFAULT_SKELETON.jointNames.indexOf("Spine");
    pose[3 * spine + 2] = 90; // bend the whole torso over
    const points = forwardKinematics2D(DEFAULT_SKELETON, pose);
    const head = points[DEFAULT_SKELETON.jointNames.indexOf("Head")];
    // the entire spine chain rotates from vertical (+y) to -x
    expect(head.y).toBeCloseTo(0, 9);
    expect(head.x).toBeCloseTo(-(0.12 * 5 + 0.1), 9);
  });
});

describe("limbShade", () => {
  it("is zero for in-plane motion and saturates at one", () => {
    expect(limbShade(zeroPose, 3)).toBe(0);
    const pose = zeroPose.slice();
    pose[3 * 8] = 400;
    expect(limbShade(pose, 8)).toBe(1);
  });

  it("grows with the out-of-plane channels", () => {
    const pose = zeroPose.slice();
    pose[3 * 8] = 45;
    pose[3 * 8 + 1] = 45;
    expect(limbShade(pose, 8)).toBeCloseTo(0.5, 9);
  });
});

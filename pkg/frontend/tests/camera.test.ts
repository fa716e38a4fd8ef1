import { describe, expect, it } from "vitest";

import { forward, move, poseQuat, rotate, turn, unproject } from "../src/camera.js";

const close = (a: number[], b: number[], tol = 1e-9) => {
  for (let i = 0; i < a.length; i++) {
    expect(Math.abs(a[i] - b[i])).toBeLessThan(tol);
  }
};

describe("pose math", () => {
  it("identity pose looks along +z", () => {
    const p = { position: [0, 0, 0] as [number, number, number],
                yaw: 0, pitch: 0 };
    close(forward(p), [0, 0, 1]);
    close(poseQuat(p), [0, 0, 0, 1]);
  });

  it("quaternion rotation matches the server convention", () => {
    // 90 deg about +y sends +z to +x
    const q: [number, number, number, number] =
      [0, Math.SQRT1_2, 0, Math.SQRT1_2];
    close(rotate(q, [0, 0, 1]), [1, 0, 0], 1e-7);
  });

  it("pitch clamps short of the pole", () => {
    let p = { position: [0, 0, 0] as [number, number, number],
              yaw: 0, pitch: 0 };
    for (let i = 0; i < 100; i++) p = turn(p, 0, 0.5);
    expect(p.pitch).toBeLessThan(Math.PI / 2);
    expect(Math.abs(forward(p)[2])).toBeGreaterThan(0.005);
  });

  it("wasd moves along view axes", () => {
    const p = { position: [0, 0, 0] as [number, number, number],
                yaw: Math.PI / 2, pitch: 0 };
    const fwd = move(p, new Set(["w"]), 1.0, 1.0);
    close(fwd.position, forward(p), 1e-9);
    const strafed = move(p, new Set(["d"]), 2.0, 1.0);
    expect(Math.hypot(...strafed.position)).toBeCloseTo(2.0, 9);
  });

  it("unprojects the image center along forward", () => {
    const p = { position: [1, 2, 3] as [number, number, number],
                yaw: 0.3, pitch: -0.1 };
    const out = unproject(p, 40, 100, 50, 50, 2.0);
    const f = forward(p);
    close(out, [p.position[0] + 2 * f[0], p.position[1] + 2 * f[1],
                p.position[2] + 2 * f[2]], 1e-9);
  });
});

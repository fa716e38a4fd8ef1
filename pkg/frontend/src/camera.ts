/** Quaternion pose math for the fly camera. Conventions match the server:
 * quaternions are [x, y, z, w], camera looks along +z with +y down. */

export type Quat = [number, number, number, number];
export type Vec3 = [number, number, number];

export function quatMul(a: Quat, b: Quat): Quat {
  const [ax, ay, az, aw] = a;
  const [bx, by, bz, bw] = b;
  return [
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
    aw * bw - ax * bx - ay * by - az * bz,
  ];
}

export function quatFromAxisAngle(axis: Vec3, angle: number): Quat {
  const n = Math.hypot(...axis) || 1;
  const s = Math.sin(angle / 2);
  return [axis[0] / n * s, axis[1] / n * s, axis[2] / n * s,
          Math.cos(angle / 2)];
}

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(...q) || 1;
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function rotate(q: Quat, v: Vec3): Vec3 {
  const [x, y, z, w] = q;
  // v + 2 w (u x v) + 2 (u x (u x v)) with u = (x, y, z)
  const ux = y * v[2] - z * v[1];
  const uy = z * v[0] - x * v[2];
  const uz = x * v[1] - y * v[0];
  const vx = v[0] + 2 * (w * ux + y * uz - z * uy);
  const vy = v[1] + 2 * (w * uy + z * ux - x * uz);
  const vz = v[2] + 2 * (w * uz + x * uy - y * ux);
  return [vx, vy, vz];
}

export interface Pose {
  position: Vec3;
  yaw: number;   // radians about world -y (drag right looks right)
  pitch: number; // radians about camera x
}

const PITCH_LIMIT = Math.PI / 2 - 0.01;

export function poseQuat(p: Pose): Quat {
  const qYaw = quatFromAxisAngle([0, 1, 0], p.yaw);
  const qPitch = quatFromAxisAngle([1, 0, 0], p.pitch);
  return quatNormalize(quatMul(qYaw, qPitch));
}

export function forward(p: Pose): Vec3 {
  return rotate(poseQuat(p), [0, 0, 1]);
}

export function right(p: Pose): Vec3 {
  return rotate(poseQuat(p), [1, 0, 0]);
}

export function turn(p: Pose, dYaw: number, dPitch: number): Pose {
  const pitch = Math.max(-PITCH_LIMIT, Math.min(PITCH_LIMIT, p.pitch + dPitch));
  return { ...p, yaw: p.yaw + dYaw, pitch };
}

/** WASD step: keys is a set of currently held keys, dt in seconds. */
export function move(p: Pose, keys: Set<string>, dt: number,
                     speed = 1.0): Pose {
  const f = forward(p);
  const r = right(p);
  let [x, y, z] = p.position;
  const step = speed * dt;
  if (keys.has("w")) { x += f[0] * step; y += f[1] * step; z += f[2] * step; }
  if (keys.has("s")) { x -= f[0] * step; y -= f[1] * step; z -= f[2] * step; }
  if (keys.has("d")) { x += r[0] * step; y += r[1] * step; z += r[2] * step; }
  if (keys.has("a")) { x -= r[0] * step; y -= r[1] * step; z -= r[2] * step; }
  if (keys.has("q")) { y -= step; }
  if (keys.has("e")) { y += step; }
  return { ...p, position: [x, y, z] };
}

/** Unproject a canvas point to a world position at the given ray distance. */
export function unproject(p: Pose, fovDeg: number, res: number,
                          px: number, py: number, dist: number): Vec3 {
  const focal = (res / 2) / Math.tan((fovDeg * Math.PI) / 360);
  const u = (px - res / 2) / focal;
  const v = (py - res / 2) / focal;
  const n = Math.hypot(u, v, 1);
  const dir = rotate(poseQuat(p), [u / n, v / n, 1 / n]);
  return [p.position[0] + dir[0] * dist,
          p.position[1] + dir[1] * dist,
          p.position[2] + dir[2] * dist];
}

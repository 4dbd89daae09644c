// Just enough linear algebra for the viewer: orbit camera poses and stereo
// eye offsets, matching the server's conventions (camera-to-world, -Z
// forward, +Y up, row-major matrices).

export type Vec3 = [number, number, number];

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  if (n === 0) throw new Error('cannot normalize the zero vector');
  return scale(a, 1 / n);
}

/** Row-major 3x3 rotation whose columns are the camera axes in world space. */
export type Mat3 = number[]; // length 9

export interface CameraPose {
  rotation: Mat3;
  translation: Vec3;
}

/**
 * Camera position on the orbit sphere, looking at the target.
 *
 * yaw spins around world +Y (0 puts the camera on +Z of the target), pitch
 * lifts it toward +Y; the camera's -Z axis points at the target and its +X
 * stays parallel to the ground plane.
 */
export function orbitPose(target: Vec3, yaw: number, pitch: number, radius: number): CameraPose {
  const cp = Math.cos(pitch);
  const offset: Vec3 = [
    radius * cp * Math.sin(yaw),
    radius * Math.sin(pitch),
    radius * cp * Math.cos(yaw),
  ];
  const position = add(target, offset);
  const zAxis = normalize(offset); // -Z looks at the target
  let xAxis: Vec3;
  const up: Vec3 = [0, 1, 0];
  const xRaw = cross(up, zAxis);
  if (norm(xRaw) < 1e-9) {
    // Looking straight up/down: keep x from the yaw angle.
    xAxis = [Math.cos(yaw), 0, -Math.sin(yaw)];
  } else {
    xAxis = normalize(xRaw);
  }
  const yAxis = cross(zAxis, xAxis);
  const rotation: Mat3 = [
    xAxis[0], yAxis[0], zAxis[0],
    xAxis[1], yAxis[1], zAxis[1],
    xAxis[2], yAxis[2], zAxis[2],
  ];
  return { rotation, translation: position };
}

/** Column of a row-major 3x3 matrix. */
export function column(m: Mat3, i: number): Vec3 {
  return [m[i], m[3 + i], m[6 + i]];
}

/** Left/right eye translations: head +- (ipd/2) along the head x-axis. */
export function stereoEyeTranslations(pose: CameraPose, ipdM: number): { left: Vec3; right: Vec3 } {
  const half = scale(column(pose.rotation, 0), ipdM / 2);
  return { left: sub(pose.translation, half), right: add(pose.translation, half) };
}

/** Row-major 4x4 camera-to-world matrix as the wire format wants it. */
export function poseMatrix(pose: CameraPose, translation?: Vec3): Float32Array {
  const t = translation ?? pose.translation;
  const r = pose.rotation;
  return new Float32Array([
    r[0], r[1], r[2], t[0],
    r[3], r[4], r[5], t[1],
    r[6], r[7], r[8], t[2],
    0, 0, 0, 1,
  ]);
}

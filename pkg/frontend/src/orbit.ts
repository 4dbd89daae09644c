// Orbit/pan/zoom camera control. The math lives in a plain state object so
// it can be tested without a DOM; attach() wires pointer and wheel events.

import { add, CameraPose, column, orbitPose, scale, Vec3 } from './math.js';

const MIN_PITCH = -1.45; // just short of straight down/up
const MAX_PITCH = 1.45;
const MIN_RADIUS = 0.2;
const MAX_RADIUS = 20;

export class OrbitControls {
  target: Vec3 = [0, 0, -2];
  yaw = Math.PI; // start on the -Z side, looking along -Z like the server scenes
  pitch = 0;
  radius = 2;
  rotateSpeed = 0.008; // rad per px
  panSpeed = 0.002; // m per px per m of radius
  changed = false;

  pose(): CameraPose {
    return orbitPose(this.target, this.yaw, this.pitch, this.radius);
  }

  rotate(dxPx: number, dyPx: number): void {
    this.yaw -= dxPx * this.rotateSpeed;
    this.pitch += dyPx * this.rotateSpeed;
    this.pitch = Math.min(MAX_PITCH, Math.max(MIN_PITCH, this.pitch));
    this.changed = true;
  }

  zoom(wheelDelta: number): void {
    const factor = Math.exp(wheelDelta * 0.001);
    this.radius = Math.min(MAX_RADIUS, Math.max(MIN_RADIUS, this.radius * factor));
    this.changed = true;
  }

  pan(dxPx: number, dyPx: number): void {
    const pose = this.pose();
    const step = this.panSpeed * this.radius;
    const move = add(
      scale(column(pose.rotation, 0), -dxPx * step),
      scale(column(pose.rotation, 1), dyPx * step),
    );
    this.target = add(this.target, move);
    this.changed = true;
  }

  attach(element: HTMLElement): void {
    let dragging = false;
    let panning = false;
    let lastX = 0;
    let lastY = 0;
    element.addEventListener('pointerdown', (e) => {
      dragging = true;
      panning = e.button === 2 || e.shiftKey;
      lastX = e.clientX;
      lastY = e.clientY;
      element.setPointerCapture(e.pointerId);
    });
    element.addEventListener('pointermove', (e) => {
      if (!dragging) return;
      const dx = e.clientX - lastX;
      const dy = e.clientY - lastY;
      lastX = e.clientX;
      lastY = e.clientY;
      if (panning) this.pan(dx, dy);
      else this.rotate(dx, dy);
    });
    element.addEventListener('pointerup', () => {
      dragging = false;
    });
    element.addEventListener('wheel', (e) => {
      e.preventDefault();
      this.zoom(e.deltaY);
    });
    element.addEventListener('contextmenu', (e) => e.preventDefault());
  }

  /** Optional device-orientation steering (mobile); needs user permission. */
  enableDeviceOrientation(win: Window): void {
    let base: { alpha: number; beta: number } | null = null;
    win.addEventListener('deviceorientation', (e) => {
      if (e.alpha == null || e.beta == null) return;
      if (base == null) base = { alpha: e.alpha, beta: e.beta };
      this.yaw = Math.PI + ((e.alpha - base.alpha) * Math.PI) / 180;
      this.pitch = Math.min(
        MAX_PITCH,
        Math.max(MIN_PITCH, ((e.beta - base.beta) * Math.PI) / 180),
      );
      this.changed = true;
    });
  }
}

// The interactive loop: orbit camera -> labeled pose packets at display
// cadence -> rendered frames blitted onto per-label canvases, with a live
// RTL/fps overlay. Stale frames (echoed timestamp <= last displayed) are
// dropped so each canvas always shows the newest server result.

import { poseMatrix, stereoEyeTranslations } from './math.js';
import { SocketTransport } from './net.js';
import { OrbitControls } from './orbit.js';
import { createHud, formatOverlay, RollingMetrics } from './overlay.js';
import {
  decodeMessage,
  encodeMessage,
  FrameEncoding,
  FramePacket,
  IntrinsicsMessage,
  Message,
} from './protocol.js';

export interface ViewerOptions {
  url: string;
  stereo: 'mono' | 'sbs';
  ipdM: number;
  clientId: string;
}

export function labelsFor(stereo: 'mono' | 'sbs'): number[] {
  return stereo === 'sbs' ? [0, 1] : [0];
}

/** Latest-wins display policy: show only frames fresher than the last shown. */
export function shouldDisplay(lastShownTs: number | undefined, frameTs: number): boolean {
  return lastShownTs === undefined || frameTs > lastShownTs;
}

/** Expand packed RGB8 into RGBA for ImageData (alpha opaque). */
export function rgbToRgba(
  rgb: Uint8Array,
  widthPx: number,
  heightPx: number,
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(new ArrayBuffer(4 * widthPx * heightPx));
  for (let i = 0, j = 0; j < out.length; i += 3, j += 4) {
    out[j] = rgb[i];
    out[j + 1] = rgb[i + 1];
    out[j + 2] = rgb[i + 2];
    out[j + 3] = 255;
  }
  return out;
}

export class Viewer {
  readonly controls = new OrbitControls();
  readonly metrics = new RollingMetrics();
  private transport: SocketTransport | null = null;
  private state: 'connecting' | 'handshaking' | 'streaming' | 'reconnecting' = 'connecting';
  private readonly labels: number[];
  private readonly intrinsics = new Map<number, IntrinsicsMessage>();
  private readonly canvases = new Map<number, HTMLCanvasElement>();
  private readonly lastShown = new Map<number, number>();
  private lastTimestamp = 0;
  private hud: { element: HTMLElement; update: (lines: string[]) => void };
  private banner: HTMLElement;
  private raf = 0;

  constructor(
    readonly root: HTMLElement,
    readonly opts: ViewerOptions,
    readonly doc: Document = document,
  ) {
    this.labels = labelsFor(opts.stereo);
    this.hud = createHud(doc);
    this.banner = doc.createElement('div');
    this.banner.style.cssText =
      'position:fixed;top:8px;right:8px;padding:6px 10px;font:13px monospace;' +
      'background:#922;color:#fff;border-radius:4px;display:none;z-index:10';
    root.appendChild(this.hud.element);
    root.appendChild(this.banner);
    this.controls.attach(root);
  }

  start(): void {
    this.transport = new SocketTransport(this.opts.url, {
      onOpen: () => this.handshake(),
      onMessage: (data) => this.handleBytes(data),
      onClose: (reason) => {
        this.state = 'reconnecting';
        this.showBanner(`connection lost (${reason}); retrying…`);
      },
    });
    const tick = () => {
      this.poseTick();
      this.hud.update(formatOverlay(this.metrics, this.state));
      this.raf = requestAnimationFrame(tick);
    };
    this.raf = requestAnimationFrame(tick);
  }

  stop(): void {
    cancelAnimationFrame(this.raf);
    this.transport?.close();
  }

  private showBanner(text: string | null): void {
    this.banner.style.display = text ? 'block' : 'none';
    if (text) this.banner.textContent = text;
  }

  private handshake(): void {
    this.state = 'handshaking';
    this.showBanner(null);
    this.intrinsics.clear();
    this.transport?.send(
      encodeMessage({ kind: 'hello', clientId: this.opts.clientId, labels: this.labels }),
    );
  }

  private handleBytes(data: Uint8Array): void {
    let msg: Message;
    try {
      msg = decodeMessage(data);
    } catch (err) {
      console.warn('[viewer] undecodable message dropped:', err);
      return;
    }
    if (msg.kind === 'intrinsics') this.handleIntrinsics(msg);
    else if (msg.kind === 'frame') this.displayFrame(msg);
    else if (msg.kind === 'ping') {
      this.transport?.send(encodeMessage({ kind: 'pong', nonce: msg.nonce }));
    }
  }

  private handleIntrinsics(msg: IntrinsicsMessage): void {
    if (!this.labels.includes(msg.label)) return;
    this.intrinsics.set(msg.label, msg);
    let canvas = this.canvases.get(msg.label);
    if (!canvas) {
      canvas = this.doc.createElement('canvas');
      canvas.style.cssText = 'image-rendering:pixelated;flex:1;max-width:50vw';
      this.root.appendChild(canvas);
      this.canvases.set(msg.label, canvas);
    }
    canvas.width = msg.widthPx;
    canvas.height = msg.heightPx;
    if (this.intrinsics.size === this.labels.length) {
      this.state = 'streaming';
    }
  }

  private poseTick(): void {
    if (this.state !== 'streaming' || !this.transport?.ready) return;
    const pose = this.controls.pose();
    let timestamp = Date.now();
    if (timestamp <= this.lastTimestamp) timestamp = this.lastTimestamp + 1;
    this.lastTimestamp = timestamp;
    const eyes =
      this.labels.length === 2
        ? stereoEyeTranslations(pose, this.opts.ipdM)
        : { left: pose.translation, right: pose.translation };
    for (const label of this.labels) {
      const translation = label === this.labels[0] ? eyes.left : eyes.right;
      this.transport.send(
        encodeMessage({
          kind: 'pose',
          label,
          timestampMs: timestamp,
          pose: poseMatrix(pose, translation),
        }),
      );
    }
  }

  private displayFrame(frame: FramePacket): void {
    if (!this.canvases.has(frame.label)) {
      console.warn(`[viewer] frame for unknown label ${frame.label} ignored`);
      return;
    }
    if (!shouldDisplay(this.lastShown.get(frame.label), frame.echoedTimestampMs)) {
      return; // stale: a fresher frame was already displayed
    }
    this.lastShown.set(frame.label, frame.echoedTimestampMs);
    this.metrics.addFrame(frame.label, Date.now(), frame.echoedTimestampMs);
    const canvas = this.canvases.get(frame.label)!;
    if (frame.encoding !== FrameEncoding.RawRgb8) {
      console.warn('[viewer] only RAW_RGB8 frames are displayed');
      return;
    }
    const ctx = canvas.getContext('2d');
    if (!ctx) return;
    const rgba = rgbToRgba(frame.image, frame.widthPx, frame.heightPx);
    ctx.putImageData(new ImageData(rgba, frame.widthPx, frame.heightPx), 0, 0);
  }
}

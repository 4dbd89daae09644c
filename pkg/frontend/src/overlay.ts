// Live RTL / fps metrics for the heads-up overlay.
//
// Same two formulas the headless client's metrics use: RTL is
// receive_time - echoed_timestamp on the client clock, instantaneous fps is
// 1000 / inter-arrival gap with same-millisecond bursts collapsed, both
// smoothed by a mean over a sliding window (default 500 ms).

interface FrameRecord {
  t: number;
  rtl: number;
}

export class RollingMetrics {
  private frames = new Map<number, FrameRecord[]>();
  private lastArrival = new Map<number, number>();
  private instFps = new Map<number, { t: number; fps: number }[]>();

  constructor(readonly windowMs = 500) {}

  addFrame(label: number, receiveTimeMs: number, echoedTimestampMs: number): void {
    const rtl = receiveTimeMs - echoedTimestampMs;
    if (rtl < 0) return; // clock skew: quarantine, do not display
    const records = this.frames.get(label) ?? [];
    records.push({ t: receiveTimeMs, rtl });
    this.frames.set(label, records);

    const last = this.lastArrival.get(label);
    if (last !== undefined && receiveTimeMs > last) {
      const series = this.instFps.get(label) ?? [];
      series.push({ t: receiveTimeMs, fps: 1000 / (receiveTimeMs - last) });
      this.instFps.set(label, series);
    }
    if (last === undefined || receiveTimeMs > last) {
      this.lastArrival.set(label, receiveTimeMs);
    }
    this.trim(records, receiveTimeMs);
    const series = this.instFps.get(label);
    if (series) this.trim(series, receiveTimeMs);
  }

  private trim(arr: { t: number }[], now: number): void {
    const cutoff = now - this.windowMs;
    let drop = 0;
    while (drop < arr.length && arr[drop].t <= cutoff) drop++;
    if (drop > 0) arr.splice(0, drop);
  }

  rtlMs(label: number): number | null {
    const records = this.frames.get(label);
    if (!records || records.length === 0) return null;
    return records.reduce((acc, r) => acc + r.rtl, 0) / records.length;
  }

  windowedFps(label: number): number | null {
    const series = this.instFps.get(label);
    if (!series || series.length === 0) return null;
    return series.reduce((acc, p) => acc + p.fps, 0) / series.length;
  }

  labels(): number[] {
    return [...this.frames.keys()].sort((a, b) => a - b);
  }
}

export function formatOverlay(metrics: RollingMetrics, state: string): string[] {
  const lines = [`link: ${state}`];
  for (const label of metrics.labels()) {
    const rtl = metrics.rtlMs(label);
    const fps = metrics.windowedFps(label);
    lines.push(
      `label ${label}: RTL ${rtl === null ? '—' : rtl.toFixed(0) + ' ms'}  ` +
        `fps ${fps === null ? '—' : fps.toFixed(1)}`,
    );
  }
  return lines;
}

export function createHud(doc: Document): { element: HTMLElement; update: (lines: string[]) => void } {
  const hud = doc.createElement('div');
  hud.style.cssText =
    'position:fixed;top:8px;left:8px;padding:6px 10px;font:13px monospace;' +
    'background:rgba(0,0,0,0.65);color:#9f9;border-radius:4px;white-space:pre;' +
    'pointer-events:none;z-index:10';
  return {
    element: hud,
    update(lines: string[]) {
      hud.textContent = lines.join('\n');
    },
  };
}

// Binary wire codec, byte-compatible with the server's protocol module.
//
// Every message: 10-byte header ("NARP", version u8 = 1, type u8,
// payload_len u32 LE) followed by a fixed-layout little-endian payload.
// Poses are row-major 4x4 camera-to-world matrices (camera looks along -Z,
// +Y up), f32 on the wire. One message per binary WebSocket message.

export const MAGIC = [0x4e, 0x41, 0x52, 0x50] as const; // "NARP"
export const VERSION = 1;
export const HEADER_SIZE = 10;

export enum MsgType {
  Hello = 0x01,
  Intrinsics = 0x02,
  Pose = 0x03,
  Frame = 0x04,
  Ping = 0x05,
  Pong = 0x06,
}

export enum FrameEncoding {
  RawRgb8 = 0,
  Png = 1,
}

export class ProtocolError extends Error {}
export class BadMagic extends ProtocolError {}
export class UnsupportedVersion extends ProtocolError {}
export class UnknownType extends ProtocolError {}
export class TruncatedPayload extends ProtocolError {}
export class LengthMismatch extends ProtocolError {}
export class InvariantViolation extends ProtocolError {}

export interface HelloMessage {
  kind: 'hello';
  clientId: string;
  labels: number[];
}

export interface IntrinsicsMessage {
  kind: 'intrinsics';
  label: number;
  widthPx: number;
  heightPx: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

export interface PosePacket {
  kind: 'pose';
  label: number;
  timestampMs: number;
  pose: Float32Array; // 16 values, row-major
}

export interface FramePacket {
  kind: 'frame';
  label: number;
  echoedTimestampMs: number;
  renderTimeMs: number;
  widthPx: number;
  heightPx: number;
  encoding: FrameEncoding;
  image: Uint8Array;
}

export interface PingMessage {
  kind: 'ping';
  nonce: number;
}

export interface PongMessage {
  kind: 'pong';
  nonce: number;
}

export type Message =
  | HelloMessage
  | IntrinsicsMessage
  | PosePacket
  | FramePacket
  | PingMessage
  | PongMessage;

function checkU8(name: string, v: number): void {
  if (!Number.isInteger(v) || v < 0 || v > 0xff) {
    throw new InvariantViolation(`${name}=${v} out of u8 range`);
  }
}

function setU64(view: DataView, offset: number, value: number): void {
  if (!Number.isInteger(value) || value < 0 || value > Number.MAX_SAFE_INTEGER) {
    throw new InvariantViolation(`u64 field ${value} not a safe non-negative integer`);
  }
  view.setBigUint64(offset, BigInt(value), true);
}

function getU64(view: DataView, offset: number): number {
  const big = view.getBigUint64(offset, true);
  if (big > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new LengthMismatch(`u64 value ${big} exceeds the safe integer range`);
  }
  return Number(big);
}

function validatePose(pose: Float32Array): void {
  if (pose.length !== 16) throw new InvariantViolation('pose must have 16 values');
  const bottom = [pose[12], pose[13], pose[14], pose[15]];
  const expected = [0, 0, 0, 1];
  for (let i = 0; i < 4; i++) {
    if (Math.abs(bottom[i] - expected[i]) > 1e-6) {
      throw new InvariantViolation(`pose bottom row must be (0,0,0,1), got ${bottom}`);
    }
  }
  // R * R^T = I within 1e-4 (row-major 3x3 block).
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      let dot = 0;
      for (let k = 0; k < 3; k++) dot += pose[i * 4 + k] * pose[j * 4 + k];
      if (Math.abs(dot - (i === j ? 1 : 0)) > 1e-4) {
        throw new InvariantViolation('pose rotation block is not orthonormal');
      }
    }
  }
}

function header(msgType: MsgType, payloadLen: number): Uint8Array {
  const out = new Uint8Array(HEADER_SIZE + payloadLen);
  out.set(MAGIC, 0);
  out[4] = VERSION;
  out[5] = msgType;
  new DataView(out.buffer).setUint32(6, payloadLen, true);
  return out;
}

const utf8 = { enc: new TextEncoder(), dec: new TextDecoder('utf-8', { fatal: true }) };

export function encodeMessage(msg: Message): Uint8Array {
  switch (msg.kind) {
    case 'hello': {
      if (msg.labels.length < 1) throw new InvariantViolation('need at least one label');
      if (new Set(msg.labels).size !== msg.labels.length) {
        throw new InvariantViolation(`duplicate labels: ${msg.labels}`);
      }
      msg.labels.forEach((l) => checkU8('label', l));
      const id = utf8.enc.encode(msg.clientId);
      const out = header(MsgType.Hello, 2 + id.length + 1 + msg.labels.length);
      const view = new DataView(out.buffer);
      view.setUint16(HEADER_SIZE, id.length, true);
      out.set(id, HEADER_SIZE + 2);
      out[HEADER_SIZE + 2 + id.length] = msg.labels.length;
      out.set(msg.labels, HEADER_SIZE + 3 + id.length);
      return out;
    }
    case 'intrinsics': {
      checkU8('label', msg.label);
      const out = header(MsgType.Intrinsics, 21);
      const view = new DataView(out.buffer);
      out[HEADER_SIZE] = msg.label;
      view.setUint16(HEADER_SIZE + 1, msg.widthPx, true);
      view.setUint16(HEADER_SIZE + 3, msg.heightPx, true);
      [msg.fx, msg.fy, msg.cx, msg.cy].forEach((v, i) =>
        view.setFloat32(HEADER_SIZE + 5 + 4 * i, v, true),
      );
      return out;
    }
    case 'pose': {
      checkU8('label', msg.label);
      validatePose(msg.pose);
      const out = header(MsgType.Pose, 73);
      const view = new DataView(out.buffer);
      out[HEADER_SIZE] = msg.label;
      setU64(view, HEADER_SIZE + 1, msg.timestampMs);
      msg.pose.forEach((v, i) => view.setFloat32(HEADER_SIZE + 9 + 4 * i, v, true));
      return out;
    }
    case 'frame': {
      checkU8('label', msg.label);
      if (
        msg.encoding === FrameEncoding.RawRgb8 &&
        msg.image.length !== 3 * msg.widthPx * msg.heightPx
      ) {
        throw new InvariantViolation('RAW_RGB8 image length must be 3*w*h');
      }
      const out = header(MsgType.Frame, 22 + msg.image.length);
      const view = new DataView(out.buffer);
      out[HEADER_SIZE] = msg.label;
      setU64(view, HEADER_SIZE + 1, msg.echoedTimestampMs);
      view.setFloat32(HEADER_SIZE + 9, msg.renderTimeMs, true);
      view.setUint16(HEADER_SIZE + 13, msg.widthPx, true);
      view.setUint16(HEADER_SIZE + 15, msg.heightPx, true);
      out[HEADER_SIZE + 17] = msg.encoding;
      view.setUint32(HEADER_SIZE + 18, msg.image.length, true);
      out.set(msg.image, HEADER_SIZE + 22);
      return out;
    }
    case 'ping':
    case 'pong': {
      const out = header(msg.kind === 'ping' ? MsgType.Ping : MsgType.Pong, 8);
      setU64(new DataView(out.buffer), HEADER_SIZE, msg.nonce);
      return out;
    }
  }
}

class Reader {
  pos = 0;
  readonly view: DataView;

  constructor(readonly data: Uint8Array) {
    this.view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  }

  need(n: number): number {
    if (this.pos + n > this.data.length) {
      throw new LengthMismatch(
        `payload needs ${this.pos + n} bytes but only ${this.data.length} present`,
      );
    }
    const at = this.pos;
    this.pos += n;
    return at;
  }

  u8(): number {
    return this.data[this.need(1)];
  }

  u16(): number {
    return this.view.getUint16(this.need(2), true);
  }

  u32(): number {
    return this.view.getUint32(this.need(4), true);
  }

  u64(): number {
    return getU64(this.view, this.need(8));
  }

  f32(): number {
    return this.view.getFloat32(this.need(4), true);
  }

  bytes(n: number): Uint8Array {
    const at = this.need(n);
    return this.data.slice(at, at + n);
  }

  end(): void {
    if (this.pos !== this.data.length) {
      throw new LengthMismatch(`${this.data.length - this.pos} trailing payload bytes`);
    }
  }
}

export function decodeMessage(data: Uint8Array): Message {
  for (let i = 0; i < Math.min(4, data.length); i++) {
    if (data[i] !== MAGIC[i]) throw new BadMagic(`bad magic at byte ${i}`);
  }
  if (data.length < HEADER_SIZE) {
    throw new TruncatedPayload(`header needs ${HEADER_SIZE} bytes, got ${data.length}`);
  }
  const head = new DataView(data.buffer, data.byteOffset, data.byteLength);
  if (data[4] !== VERSION) throw new UnsupportedVersion(`version ${data[4]}`);
  const msgType = data[5];
  if (!(msgType in MsgType)) throw new UnknownType(`unknown msg_type 0x${msgType.toString(16)}`);
  const payloadLen = head.getUint32(6, true);
  if (data.length < HEADER_SIZE + payloadLen) {
    throw new TruncatedPayload(
      `payload_len=${payloadLen} but only ${data.length - HEADER_SIZE} bytes`,
    );
  }
  if (data.length > HEADER_SIZE + payloadLen) {
    throw new LengthMismatch(`${data.length - HEADER_SIZE - payloadLen} bytes beyond payload`);
  }
  const r = new Reader(data.subarray(HEADER_SIZE));
  switch (msgType as MsgType) {
    case MsgType.Hello: {
      const idLen = r.u16();
      let clientId: string;
      try {
        clientId = utf8.dec.decode(r.bytes(idLen));
      } catch {
        throw new LengthMismatch('client_id is not valid UTF-8');
      }
      const count = r.u8();
      const labels = Array.from(r.bytes(count));
      r.end();
      return { kind: 'hello', clientId, labels };
    }
    case MsgType.Intrinsics: {
      const msg: IntrinsicsMessage = {
        kind: 'intrinsics',
        label: r.u8(),
        widthPx: r.u16(),
        heightPx: r.u16(),
        fx: r.f32(),
        fy: r.f32(),
        cx: r.f32(),
        cy: r.f32(),
      };
      r.end();
      return msg;
    }
    case MsgType.Pose: {
      const label = r.u8();
      const timestampMs = r.u64();
      const pose = new Float32Array(16);
      for (let i = 0; i < 16; i++) pose[i] = r.f32();
      r.end();
      return { kind: 'pose', label, timestampMs, pose };
    }
    case MsgType.Frame: {
      const label = r.u8();
      const echoedTimestampMs = r.u64();
      const renderTimeMs = r.f32();
      const widthPx = r.u16();
      const heightPx = r.u16();
      const encoding = r.u8() as FrameEncoding;
      const imageLen = r.u32();
      const image = r.bytes(imageLen);
      r.end();
      return { kind: 'frame', label, echoedTimestampMs, renderTimeMs, widthPx, heightPx, encoding, image };
    }
    case MsgType.Ping: {
      const nonce = r.u64();
      r.end();
      return { kind: 'ping', nonce };
    }
    case MsgType.Pong: {
      const nonce = r.u64();
      r.end();
      return { kind: 'pong', nonce };
    }
  }
  throw new UnknownType(`unknown msg_type 0x${msgType.toString(16)}`);
}

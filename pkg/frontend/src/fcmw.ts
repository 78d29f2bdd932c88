/**
 * FCMW container: magic "FCMW" | version u16 LE = 1 | layer_count u16 |
 * per layer { name_len u16, name utf-8, out u32, in u32, kh u32, kw u32,
 * weights f32 LE (out,in,kh,kw) row-major, bias f32 LE (out,) } |
 * CRC32 of all preceding bytes, u32 LE.
 */

import { crc32 } from "./crc32";

export interface ConvLayer {
  name: string;
  /** [out, in, kh, kw] */
  shape: [number, number, number, number];
  weights: Float32Array;
  bias: Float32Array;
}

export const FCMW_MAGIC = "FCMW";
export const FCMW_VERSION = 1;

export function writeFcmw(layers: ConvLayer[]): Uint8Array {
  const chunks: Uint8Array[] = [];
  const head = new Uint8Array(8);
  head.set([0x46, 0x43, 0x4d, 0x57]); // "FCMW"
  const hv = new DataView(head.buffer);
  hv.setUint16(4, FCMW_VERSION, true);
  hv.setUint16(6, layers.length, true);
  chunks.push(head);
  for (const layer of layers) {
    const [out, cin, kh, kw] = layer.shape;
    if (layer.weights.length !== out * cin * kh * kw) {
      throw new Error(`layer ${layer.name}: weight count != shape product`);
    }
    if (layer.bias.length !== out) {
      throw new Error(`layer ${layer.name}: bias length ${layer.bias.length} != ${out}`);
    }
    const name = new TextEncoder().encode(layer.name);
    const meta = new Uint8Array(2 + name.length + 16);
    const mv = new DataView(meta.buffer);
    mv.setUint16(0, name.length, true);
    meta.set(name, 2);
    const base = 2 + name.length;
    [out, cin, kh, kw].forEach((v, i) => mv.setUint32(base + 4 * i, v, true));
    chunks.push(meta);
    chunks.push(floatsToLeBytes(layer.weights));
    chunks.push(floatsToLeBytes(layer.bias));
  }
  const bodyLen = chunks.reduce((acc, c) => acc + c.length, 0);
  const body = new Uint8Array(bodyLen + 4);
  let pos = 0;
  for (const c of chunks) {
    body.set(c, pos);
    pos += c.length;
  }
  new DataView(body.buffer).setUint32(bodyLen, crc32(body.subarray(0, bodyLen)), true);
  return body;
}

export function readFcmw(data: Uint8Array): ConvLayer[] {
  if (data.length < 12) throw new Error("truncated FCMW stream");
  const dv = new DataView(data.buffer, data.byteOffset, data.byteLength);
  if (new TextDecoder().decode(data.subarray(0, 4)) !== FCMW_MAGIC) {
    throw new Error("bad magic");
  }
  const stored = dv.getUint32(data.length - 4, true);
  const actual = crc32(data.subarray(0, data.length - 4));
  if (stored !== actual) throw new Error("checksum failure");
  const version = dv.getUint16(4, true);
  if (version !== FCMW_VERSION) throw new Error(`version mismatch: ${version}`);
  const count = dv.getUint16(6, true);
  let pos = 8;
  const layers: ConvLayer[] = [];
  for (let i = 0; i < count; i++) {
    const nameLen = dv.getUint16(pos, true);
    pos += 2;
    const name = new TextDecoder().decode(data.subarray(pos, pos + nameLen));
    pos += nameLen;
    const shape: [number, number, number, number] = [
      dv.getUint32(pos, true),
      dv.getUint32(pos + 4, true),
      dv.getUint32(pos + 8, true),
      dv.getUint32(pos + 12, true),
    ];
    pos += 16;
    const wCount = shape[0] * shape[1] * shape[2] * shape[3];
    const weights = leBytesToFloats(data.subarray(pos, pos + 4 * wCount));
    pos += 4 * wCount;
    const bias = leBytesToFloats(data.subarray(pos, pos + 4 * shape[0]));
    pos += 4 * shape[0];
    layers.push({ name, shape, weights, bias });
  }
  if (pos !== data.length - 4) throw new Error("trailing bytes after last layer");
  return layers;
}

export function floatsToLeBytes(values: Float32Array): Uint8Array {
  const out = new Uint8Array(values.length * 4);
  const dv = new DataView(out.buffer);
  for (let i = 0; i < values.length; i++) dv.setFloat32(4 * i, values[i], true);
  return out;
}

export function leBytesToFloats(bytes: Uint8Array): Float32Array {
  if (bytes.length % 4 !== 0) throw new Error("byte length not a multiple of 4");
  const dv = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const out = new Float32Array(bytes.length / 4);
  for (let i = 0; i < out.length; i++) out[i] = dv.getFloat32(4 * i, true);
  return out;
}

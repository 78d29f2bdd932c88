/**
 * Minimal safetensors reader: u64 LE header length, JSON header mapping
 * tensor names to { dtype, shape, data_offsets } relative to the byte
 * buffer that follows the header. Only F32 and F64 payloads are needed
 * for checkpoint slicing; everything is normalized to float32.
 */

export interface TensorRecord {
  dtype: string;
  shape: number[];
  data: Float32Array;
}

export function readSafetensors(data: Uint8Array): Map<string, TensorRecord> {
  if (data.length < 8) throw new Error("truncated safetensors stream");
  const dv = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const headerLen = Number(dv.getBigUint64(0, true));
  if (8 + headerLen > data.length) throw new Error("header overruns stream");
  const header = JSON.parse(new TextDecoder().decode(data.subarray(8, 8 + headerLen)));
  const body = data.subarray(8 + headerLen);
  const out = new Map<string, TensorRecord>();
  for (const [name, info] of Object.entries<any>(header)) {
    if (name === "__metadata__") continue;
    const { dtype, shape, data_offsets: [start, end] } = info;
    const bytes = body.subarray(start, end);
    const count = shape.reduce((a: number, b: number) => a * b, 1);
    let values: Float32Array;
    if (dtype === "F32") {
      if (bytes.length !== 4 * count) throw new Error(`${name}: payload size mismatch`);
      const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
      values = new Float32Array(count);
      for (let i = 0; i < count; i++) values[i] = view.getFloat32(4 * i, true);
    } else if (dtype === "F64") {
      if (bytes.length !== 8 * count) throw new Error(`${name}: payload size mismatch`);
      const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
      values = new Float32Array(count);
      for (let i = 0; i < count; i++) values[i] = Math.fround(view.getFloat64(8 * i, true));
    } else {
      throw new Error(`${name}: unsupported dtype ${dtype} (need F32 or F64)`);
    }
    out.set(name, { dtype, shape, data: values });
  }
  return out;
}

export function writeSafetensors(
  tensors: Map<string, { shape: number[]; data: Float32Array }>
): Uint8Array {
  const header: Record<string, unknown> = {};
  let offset = 0;
  const blobs: Uint8Array[] = [];
  for (const [name, t] of tensors) {
    const bytes = new Uint8Array(t.data.length * 4);
    const dv = new DataView(bytes.buffer);
    for (let i = 0; i < t.data.length; i++) dv.setFloat32(4 * i, t.data[i], true);
    header[name] = { dtype: "F32", shape: t.shape, data_offsets: [offset, offset + bytes.length] };
    offset += bytes.length;
    blobs.push(bytes);
  }
  const headerBytes = new TextEncoder().encode(JSON.stringify(header));
  const out = new Uint8Array(8 + headerBytes.length + offset);
  new DataView(out.buffer).setBigUint64(0, BigInt(headerBytes.length), true);
  out.set(headerBytes, 8);
  let pos = 8 + headerBytes.length;
  for (const b of blobs) {
    out.set(b, pos);
    pos += b.length;
  }
  return out;
}

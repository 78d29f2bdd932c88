import { describe, expect, it } from "vitest";

import { crc32 } from "../src/crc32";
import { ConvLayer, readFcmw, writeFcmw } from "../src/fcmw";
import { mulberry32 } from "../src/synthetic";

function randomLayer(name: string, out: number, cin: number, seed: number): ConvLayer {
  const rand = mulberry32(seed);
  const weights = new Float32Array(out * cin * 9);
  for (let i = 0; i < weights.length; i++) weights[i] = Math.fround(rand() - 0.5);
  const bias = new Float32Array(out);
  for (let i = 0; i < out; i++) bias[i] = Math.fround(rand());
  return { name, shape: [out, cin, 3, 3], weights, bias };
}

describe("crc32", () => {
  it("matches the zlib check value", () => {
    // CRC32("123456789") = 0xCBF43926, the standard check vector.
    expect(crc32(new TextEncoder().encode("123456789"))).toBe(0xcbf43926);
  });

  it("empty input is zero", () => {
    expect(crc32(new Uint8Array(0))).toBe(0);
  });
});

describe("fcmw container", () => {
  const layers = [randomLayer("conv1_1", 4, 3, 1), randomLayer("conv1_2", 5, 4, 2)];

  it("round-trips bit-identically", () => {
    const data = writeFcmw(layers);
    const back = readFcmw(data);
    expect(back.length).toBe(2);
    for (let i = 0; i < 2; i++) {
      expect(back[i].name).toBe(layers[i].name);
      expect(back[i].shape).toEqual(layers[i].shape);
      expect(Array.from(back[i].weights)).toEqual(Array.from(layers[i].weights));
      expect(Array.from(back[i].bias)).toEqual(Array.from(layers[i].bias));
    }
  });

  it("is deterministic", () => {
    const a = writeFcmw(layers);
    const b = writeFcmw(layers);
    expect(Buffer.from(a).equals(Buffer.from(b))).toBe(true);
  });

  it("detects a flipped checksum byte", () => {
    const data = writeFcmw(layers);
    data[data.length - 1] ^= 0xff;
    expect(() => readFcmw(data)).toThrow(/checksum/);
  });

  it("detects payload corruption", () => {
    const data = writeFcmw(layers);
    data[30] ^= 0x10;
    expect(() => readFcmw(data)).toThrow(/checksum/);
  });

  it("rejects inconsistent bias lengths", () => {
    const bad = { ...layers[0], bias: new Float32Array(3) };
    expect(() => writeFcmw([bad])).toThrow(/bias/);
  });

  it("starts with the magic and version", () => {
    const data = writeFcmw(layers);
    expect(new TextDecoder().decode(data.subarray(0, 4))).toBe("FCMW");
    expect(new DataView(data.buffer).getUint16(4, true)).toBe(1);
  });
});

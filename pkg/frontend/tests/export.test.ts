import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { crc32 } from "../src/crc32";
import { readFcmw } from "../src/fcmw";
import { FIXTURE_TOLERANCE } from "../src/plan";
import { exportPrefix, main, sliceCheckpoint } from "../src/export";
import { readSafetensors, writeSafetensors } from "../src/safetensors";
import { makeSyntheticCheckpoint } from "../src/synthetic";

let workDir: string;

beforeAll(() => {
  workDir = fs.mkdtempSync(path.join(os.tmpdir(), "fcmw-"));
});

afterAll(() => {
  fs.rmSync(workDir, { recursive: true, force: true });
});

describe("safetensors", () => {
  it("round-trips", () => {
    const tensors = new Map([
      ["a.weight", { shape: [2, 3], data: new Float32Array([1, 2, 3, 4, 5, 6]) }],
      ["a.bias", { shape: [2], data: new Float32Array([0.5, -0.5]) }],
    ]);
    const back = readSafetensors(writeSafetensors(tensors));
    expect(back.get("a.weight")!.shape).toEqual([2, 3]);
    expect(Array.from(back.get("a.bias")!.data)).toEqual([0.5, -0.5]);
  });

  it("rejects unsupported dtypes", () => {
    const header = JSON.stringify({
      x: { dtype: "BF16", shape: [1], data_offsets: [0, 2] },
    });
    const hb = new TextEncoder().encode(header);
    const data = new Uint8Array(8 + hb.length + 2);
    new DataView(data.buffer).setBigUint64(0, BigInt(hb.length), true);
    data.set(hb, 8);
    expect(() => readSafetensors(data)).toThrow(/dtype/);
  });
});

describe("sliceCheckpoint", () => {
  it("keeps the exact prefix shapes", () => {
    const layers = sliceCheckpoint(makeSyntheticCheckpoint(7), 3);
    expect(layers.map((l) => l.shape)).toEqual([
      [64, 3, 3, 3],
      [64, 64, 3, 3],
      [128, 64, 3, 3],
    ]);
    expect(layers.map((l) => l.name)).toEqual(["conv1_1", "conv1_2", "conv2_1"]);
  });

  it("rejects other layer counts", () => {
    expect(() => sliceCheckpoint(makeSyntheticCheckpoint(7), 2)).toThrow(/prefix/);
  });

  it("rejects shape mismatches", () => {
    const tensors = readSafetensors(makeSyntheticCheckpoint(7));
    const bad = new Map<string, { shape: number[]; data: Float32Array }>();
    for (const [k, v] of tensors) bad.set(k, { shape: v.shape, data: v.data });
    bad.set("features.0.weight", { shape: [32, 3, 3, 3], data: new Float32Array(32 * 27) });
    expect(() => sliceCheckpoint(writeSafetensors(bad), 3)).toThrow(/shape/);
  });

  it("rejects missing keys", () => {
    const tensors = readSafetensors(makeSyntheticCheckpoint(7));
    const bad = new Map<string, { shape: number[]; data: Float32Array }>();
    for (const [k, v] of tensors) {
      if (k !== "features.5.bias") bad.set(k, { shape: v.shape, data: v.data });
    }
    expect(() => sliceCheckpoint(writeSafetensors(bad), 3)).toThrow(/missing/);
  });

  it("performs no value modification beyond dtype normalization", () => {
    const checkpoint = makeSyntheticCheckpoint(7);
    const tensors = readSafetensors(checkpoint);
    const layers = sliceCheckpoint(checkpoint, 3);
    expect(Array.from(layers[0].weights)).toEqual(
      Array.from(tensors.get("features.0.weight")!.data)
    );
  });
});

describe("exportPrefix", () => {
  it("re-export is byte-identical and the manifest checks out", () => {
    const checkpoint = makeSyntheticCheckpoint(11);
    const dirA = path.join(workDir, "a");
    const dirB = path.join(workDir, "b");
    exportPrefix(checkpoint, 3, dirA);
    exportPrefix(checkpoint, 3, dirB);
    const bytesA = fs.readFileSync(path.join(dirA, "vgg.fcmw"));
    const bytesB = fs.readFileSync(path.join(dirB, "vgg.fcmw"));
    expect(bytesA.equals(bytesB)).toBe(true);

    const manifest = JSON.parse(fs.readFileSync(path.join(dirA, "manifest.json"), "utf8"));
    expect(manifest.layers.map((l: any) => l.weight_shape)).toEqual([
      [64, 3, 3, 3],
      [64, 64, 3, 3],
      [128, 64, 3, 3],
    ]);
    const body = new Uint8Array(bytesA).subarray(0, bytesA.length - 4);
    expect(parseInt(manifest.weight_crc32, 16)).toBe(crc32(body));
    expect(manifest.tolerance).toBe(FIXTURE_TOLERANCE);
    expect(manifest.preprocessing.mean).toEqual([0.485, 0.456, 0.406]);

    // The written container parses back to the sliced layers.
    const layers = readFcmw(new Uint8Array(bytesA));
    expect(layers.map((l) => l.name)).toEqual(["conv1_1", "conv1_2", "conv2_1"]);
  });

  it("emits both fixtures with stats and hashes", () => {
    const dir = path.join(workDir, "fx");
    exportPrefix(makeSyntheticCheckpoint(3), 3, dir);
    const manifest = JSON.parse(fs.readFileSync(path.join(dir, "manifest.json"), "utf8"));
    const names = manifest.fixtures.map((f: any) => f.name);
    expect(names).toContain("gradient_checker");
    expect(names).toContain("zero_image");
    for (const fixture of manifest.fixtures) {
      expect(fixture.input_sha256).toMatch(/^[0-9a-f]{64}$/);
      expect(fs.existsSync(path.join(dir, fixture.input_file))).toBe(true);
      for (const layer of fixture.layers) {
        expect(fs.existsSync(path.join(dir, layer.file))).toBe(true);
        expect(Number.isFinite(layer.mean)).toBe(true);
        expect(layer.max).toBeGreaterThanOrEqual(0);
        const count = layer.shape.reduce((a: number, b: number) => a * b, 1);
        expect(fs.statSync(path.join(dir, layer.file)).size).toBe(4 * count);
      }
    }
    // Fixture regeneration is bit-identical for fixed source weights.
    const dir2 = path.join(workDir, "fx2");
    exportPrefix(makeSyntheticCheckpoint(3), 3, dir2);
    const f = manifest.fixtures[0].layers[0].file;
    expect(fs.readFileSync(path.join(dir, f)).equals(fs.readFileSync(path.join(dir2, f)))).toBe(
      true
    );
  });
});

describe("cli", () => {
  it("export requires a source", () => {
    expect(main(["export"])).toBe(1);
  });

  it("synthetic then export works end to end", () => {
    const src = path.join(workDir, "synth.safetensors");
    expect(main(["synthetic", "--out", src, "--seed", "9"])).toBe(0);
    const out = path.join(workDir, "cli-out", "vgg.fcmw");
    fs.mkdirSync(path.dirname(out), { recursive: true });
    expect(main(["export", "--source", src, "--layers", "3", "--out", out])).toBe(0);
    expect(fs.existsSync(out)).toBe(true);
  });

  it("fixtures command populates a directory", () => {
    const dir = path.join(workDir, "cli-fixtures");
    expect(main(["fixtures", "--out-dir", dir])).toBe(0);
    expect(fs.existsSync(path.join(dir, "manifest.json"))).toBe(true);
    expect(fs.existsSync(path.join(dir, "vgg.fcmw"))).toBe(true);
  });
});

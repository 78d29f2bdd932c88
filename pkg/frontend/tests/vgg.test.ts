import { describe, expect, it } from "vitest";

import { ConvLayer } from "../src/fcmw";
import { gradientCheckerCard, zeroImage } from "../src/testcard";
import {
  conv3x3,
  forwardFeatures,
  maxpool2x2,
  preprocess,
  PREPROC_MEAN,
  PREPROC_STD,
  relu,
  tensor3,
} from "../src/vgg";

function identityLayer(name: string, out: number, cin: number): ConvLayer {
  const weights = new Float32Array(out * cin * 9);
  for (let o = 0; o < out; o++) {
    weights[(o * cin + (o % cin)) * 9 + 4] = 1; // center tap
  }
  return { name, shape: [out, cin, 3, 3], weights, bias: new Float32Array(out) };
}

describe("conv3x3", () => {
  it("identity kernel passes input through", () => {
    const x = tensor3(2, 4, 5);
    for (let i = 0; i < x.data.length; i++) x.data[i] = i * 0.01;
    const y = conv3x3(x, identityLayer("conv1_1", 2, 2));
    expect(Array.from(y.data)).toEqual(Array.from(x.data));
  });

  it("all-ones kernel counts zero padding", () => {
    const x = tensor3(1, 5, 5);
    x.data.fill(0.5);
    const layer: ConvLayer = {
      name: "conv1_1",
      shape: [1, 1, 3, 3],
      weights: new Float32Array(9).fill(1),
      bias: new Float32Array(1),
    };
    const y = conv3x3(x, layer);
    expect(y.data[2 * 5 + 2]).toBeCloseTo(4.5, 6); // 9 taps
    expect(y.data[0]).toBeCloseTo(2.0, 6); // corner: 4 taps
    expect(y.data[2]).toBeCloseTo(3.0, 6); // edge: 6 taps
  });

  it("rejects channel mismatches", () => {
    expect(() => conv3x3(tensor3(2, 3, 3), identityLayer("conv1_1", 1, 3))).toThrow(/channel/);
  });
});

describe("pool and preprocessing", () => {
  it("maxpool halves with floor", () => {
    const x = tensor3(1, 5, 6);
    for (let i = 0; i < x.data.length; i++) x.data[i] = i;
    const y = maxpool2x2(x);
    expect([y.channels, y.height, y.width]).toEqual([1, 2, 3]);
    expect(y.data[0]).toBe(7); // max of rows 0-1, cols 0-1
  });

  it("preprocess normalizes per channel", () => {
    const x = tensor3(3, 1, 1);
    x.data.set([0.485, 0.456, 0.406]);
    const y = preprocess(x);
    for (let c = 0; c < 3; c++) {
      expect(y.data[c]).toBeCloseTo(0, 6); // float32 storage of the means
    }
    const ones = tensor3(3, 1, 1);
    ones.data.fill(1);
    const z = preprocess(ones);
    for (let c = 0; c < 3; c++) {
      expect(z.data[c]).toBeCloseTo((1 - PREPROC_MEAN[c]) / PREPROC_STD[c], 6);
    }
  });

  it("relu clamps negatives", () => {
    const x = tensor3(1, 1, 3);
    x.data.set([-1, 0, 2]);
    expect(Array.from(relu(x).data)).toEqual([0, 0, 2]);
  });
});

describe("forwardFeatures", () => {
  const layers = [
    identityLayer("conv1_1", 4, 3),
    identityLayer("conv1_2", 4, 4),
    identityLayer("conv2_1", 6, 4),
  ];

  it("pools exactly once, before the block-2 layer", () => {
    const acts = forwardFeatures(gradientCheckerCard(16), layers);
    expect([acts[0].height, acts[0].width]).toEqual([16, 16]);
    expect([acts[1].height, acts[1].width]).toEqual([16, 16]);
    expect([acts[2].height, acts[2].width]).toEqual([8, 8]);
  });

  it("is deterministic", () => {
    const a = forwardFeatures(gradientCheckerCard(), layers);
    const b = forwardFeatures(gradientCheckerCard(), layers);
    for (let i = 0; i < a.length; i++) {
      expect(Array.from(a[i].data)).toEqual(Array.from(b[i].data));
    }
  });

  it("zero image yields bias-free zero activations for identity layers", () => {
    const acts = forwardFeatures(zeroImage(8), layers);
    // Preprocessed zeros are negative constants; ReLU kills them.
    expect(acts[0].data.every((v) => v === 0)).toBe(true);
  });
});

describe("test card", () => {
  it("has ramps and a checker", () => {
    const card = gradientCheckerCard();
    expect(card.data[0]).toBe(0); // R ramp starts at 0
    expect(card.data[31]).toBe(1); // R ramp ends at 1
    expect(card.data[2 * 32 * 32]).toBe(0); // checker block (0,0)
    expect(card.data[2 * 32 * 32 + 4]).toBe(1); // next block flips
  });
});

/**
 * Deterministic synthetic VGG19-prefix checkpoint in safetensors form.
 * Stands in for the real pretrained file where no model zoo is reachable;
 * shapes and key names follow the torchvision convention so the export
 * path is identical for real weights.
 */

import { writeSafetensors } from "./safetensors";
import { PREFIX_PLAN } from "./plan";

/** mulberry32: tiny deterministic PRNG, plenty for synthetic weights. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function makeSyntheticCheckpoint(seed: number): Uint8Array {
  const rand = mulberry32(seed);
  const gauss = () => {
    // Box-Muller with the uniform stream above.
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  };
  const tensors = new Map<string, { shape: number[]; data: Float32Array }>();
  for (const plan of PREFIX_PLAN) {
    const [out, cin, kh, kw] = plan.shape;
    const fanIn = cin * kh * kw;
    const std = Math.sqrt(2 / fanIn);
    const weights = new Float32Array(out * fanIn);
    for (let i = 0; i < weights.length; i++) weights[i] = Math.fround(gauss() * std);
    const bias = new Float32Array(out);
    for (let i = 0; i < out; i++) bias[i] = Math.fround(0.2 + 0.6 * rand());
    tensors.set(`${plan.key}.weight`, { shape: plan.shape, data: weights });
    tensors.set(`${plan.key}.bias`, { shape: [out], data: bias });
  }
  return writeSafetensors(tensors);
}

/**
 * Reference forward pass for the truncated VGG prefix: preprocessing,
 * 3x3 same-padding cross-correlation, ReLU, and a 2x2 max pool before the
 * block-2 layer. Independent of the consumer engine on purpose: the two
 * implementations are compared on fixture activations.
 */

import { ConvLayer } from "./fcmw";

export const PREPROC_MEAN = [0.485, 0.456, 0.406];
export const PREPROC_STD = [0.229, 0.224, 0.225];

export interface Tensor3 {
  channels: number;
  height: number;
  width: number;
  /** channel-major raster, length = channels * height * width */
  data: Float32Array;
}

export function tensor3(channels: number, height: number, width: number): Tensor3 {
  return { channels, height, width, data: new Float32Array(channels * height * width) };
}

export function preprocess(img: Tensor3): Tensor3 {
  if (img.channels !== 3) throw new Error("expected a 3-channel image");
  const out = tensor3(3, img.height, img.width);
  const hw = img.height * img.width;
  for (let c = 0; c < 3; c++) {
    for (let i = 0; i < hw; i++) {
      out.data[c * hw + i] = (img.data[c * hw + i] - PREPROC_MEAN[c]) / PREPROC_STD[c];
    }
  }
  return out;
}

export function conv3x3(x: Tensor3, layer: ConvLayer): Tensor3 {
  const [outCh, inCh, kh, kw] = layer.shape;
  if (kh !== 3 || kw !== 3) throw new Error("kernel must be 3x3");
  if (x.channels !== inCh) throw new Error(`channel mismatch: ${x.channels} vs ${inCh}`);
  const { height: h, width: w } = x;
  const y = tensor3(outCh, h, w);
  const hw = h * w;
  for (let oc = 0; oc < outCh; oc++) {
    const bias = layer.bias[oc];
    for (let i = 0; i < h; i++) {
      for (let j = 0; j < w; j++) {
        let acc = bias;
        for (let ic = 0; ic < inCh; ic++) {
          const wBase = ((oc * inCh + ic) * 3) * 3;
          const xBase = ic * hw;
          for (let di = 0; di < 3; di++) {
            const si = i + di - 1;
            if (si < 0 || si >= h) continue;
            for (let dj = 0; dj < 3; dj++) {
              const sj = j + dj - 1;
              if (sj < 0 || sj >= w) continue;
              acc += layer.weights[wBase + di * 3 + dj] * x.data[xBase + si * w + sj];
            }
          }
        }
        y.data[oc * hw + i * w + j] = Math.fround(acc);
      }
    }
  }
  return y;
}

export function relu(x: Tensor3): Tensor3 {
  const out = tensor3(x.channels, x.height, x.width);
  for (let i = 0; i < x.data.length; i++) out.data[i] = Math.max(x.data[i], 0);
  return out;
}

export function maxpool2x2(x: Tensor3): Tensor3 {
  const h2 = Math.floor(x.height / 2);
  const w2 = Math.floor(x.width / 2);
  const out = tensor3(x.channels, h2, w2);
  const hw = x.height * x.width;
  for (let c = 0; c < x.channels; c++) {
    for (let i = 0; i < h2; i++) {
      for (let j = 0; j < w2; j++) {
        const base = c * hw + 2 * i * x.width + 2 * j;
        const m = Math.max(
          x.data[base],
          x.data[base + 1],
          x.data[base + x.width],
          x.data[base + x.width + 1]
        );
        out.data[c * h2 * w2 + i * w2 + j] = m;
      }
    }
  }
  return out;
}

/** Block index parsed from conv<block>_<idx>; pools sit between blocks. */
function blockOf(name: string): number | null {
  const m = /^conv(\d+)_(\d+)$/.exec(name);
  return m ? parseInt(m[1], 10) : null;
}

export function forwardFeatures(img: Tensor3, layers: ConvLayer[]): Tensor3[] {
  let x = preprocess(img);
  const acts: Tensor3[] = [];
  let prevBlock: number | null = null;
  for (const layer of layers) {
    const block = blockOf(layer.name);
    if (block !== null && prevBlock !== null && block > prevBlock) {
      x = maxpool2x2(x);
    }
    prevBlock = block;
    x = relu(conv3x3(x, layer));
    acts.push(x);
  }
  return acts;
}

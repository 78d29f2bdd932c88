/**
 * Deterministic probe images for parity fixtures. The 32x32 card carries
 * horizontal and vertical ramps plus a 4x4 checker so every feature
 * orientation responds; the zero image probes the bias-only path.
 */

import { Tensor3, tensor3 } from "./vgg";

export const CARD_SIZE = 32;

export function gradientCheckerCard(size = CARD_SIZE): Tensor3 {
  const img = tensor3(3, size, size);
  const hw = size * size;
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = y * size + x;
      img.data[i] = x / (size - 1);
      img.data[hw + i] = y / (size - 1);
      img.data[2 * hw + i] = (Math.floor(x / 4) + Math.floor(y / 4)) % 2;
    }
  }
  return img;
}

export function zeroImage(size = CARD_SIZE): Tensor3 {
  return tensor3(3, size, size);
}

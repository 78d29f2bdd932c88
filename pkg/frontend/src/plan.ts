/** The exportable prefix: torchvision key layout and exact shapes. */

export const PREFIX_PLAN: Array<{ name: string; key: string; shape: number[] }> = [
  { name: "conv1_1", key: "features.0", shape: [64, 3, 3, 3] },
  { name: "conv1_2", key: "features.2", shape: [64, 64, 3, 3] },
  { name: "conv2_1", key: "features.5", shape: [128, 64, 3, 3] },
];

export const FIXTURE_TOLERANCE = 1e-4;

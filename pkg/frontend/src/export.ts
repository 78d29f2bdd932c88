/**
 * Slice the truncated VGG19 prefix out of a safetensors checkpoint, write
 * the FCMW weight file plus a JSON manifest, and emit reference-activation
 * fixtures computed by this tool's own forward pass.
 *
 *   node dist/export.js export --source vgg19.safetensors --layers 3 --out vgg.fcmw
 *   node dist/export.js fixtures --out-dir fixtures [--source vgg19.safetensors]
 *   node dist/export.js synthetic --out synthetic.safetensors [--seed 7]
 *
 * `fixtures` without --source generates the deterministic synthetic
 * checkpoint first (the build environment has no model-zoo access; a real
 * checkpoint flows through the identical path).
 */

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

import { crc32 } from "./crc32";
import { ConvLayer, floatsToLeBytes, writeFcmw } from "./fcmw";
import { readSafetensors, writeSafetensors } from "./safetensors";
import { FIXTURE_TOLERANCE, PREFIX_PLAN } from "./plan";
import { makeSyntheticCheckpoint } from "./synthetic";
import { gradientCheckerCard, zeroImage } from "./testcard";
import { forwardFeatures, PREPROC_MEAN, PREPROC_STD, Tensor3 } from "./vgg";

export { FIXTURE_TOLERANCE, PREFIX_PLAN };

export function sliceCheckpoint(checkpoint: Uint8Array, layerCount: number): ConvLayer[] {
  if (layerCount !== PREFIX_PLAN.length) {
    throw new Error(`only the ${PREFIX_PLAN.length}-layer prefix is exportable`);
  }
  const tensors = readSafetensors(checkpoint);
  const layers: ConvLayer[] = [];
  for (const plan of PREFIX_PLAN) {
    const weight = tensors.get(`${plan.key}.weight`);
    const bias = tensors.get(`${plan.key}.bias`);
    if (!weight || !bias) {
      throw new Error(`checkpoint is missing ${plan.key}.weight/.bias`);
    }
    if (JSON.stringify(weight.shape) !== JSON.stringify(plan.shape)) {
      throw new Error(
        `${plan.key}.weight shape ${JSON.stringify(weight.shape)} != expected ${JSON.stringify(plan.shape)}`
      );
    }
    if (JSON.stringify(bias.shape) !== JSON.stringify([plan.shape[0]])) {
      throw new Error(`${plan.key}.bias shape mismatch`);
    }
    layers.push({
      name: plan.name,
      shape: plan.shape as [number, number, number, number],
      weights: weight.data,
      bias: bias.data,
    });
  }
  return layers;
}

interface FixtureLayer {
  name: string;
  file: string;
  shape: number[];
  mean: number;
  max: number;
}

interface FixtureEntry {
  name: string;
  input_file: string;
  input_shape: number[];
  input_sha256: string;
  layers: FixtureLayer[];
}

function tensorBytes(t: Tensor3): Uint8Array {
  return floatsToLeBytes(t.data);
}

function stats(t: Tensor3): { mean: number; max: number } {
  let sum = 0;
  let max = -Infinity;
  for (const v of t.data) {
    sum += v;
    if (v > max) max = v;
  }
  return { mean: sum / t.data.length, max };
}

export function emitFixture(
  name: string,
  img: Tensor3,
  layers: ConvLayer[],
  outDir: string
): FixtureEntry {
  const inputFile = `${name}_input.f32`;
  const inputBytes = tensorBytes(img);
  fs.writeFileSync(path.join(outDir, inputFile), inputBytes);
  const acts = forwardFeatures(img, layers);
  const fixtureLayers: FixtureLayer[] = acts.map((act, i) => {
    const file = `${name}_layer${i + 1}.f32`;
    fs.writeFileSync(path.join(outDir, file), tensorBytes(act));
    const { mean, max } = stats(act);
    return {
      name: layers[i].name,
      file,
      shape: [act.channels, act.height, act.width],
      mean,
      max,
    };
  });
  return {
    name,
    input_file: inputFile,
    input_shape: [img.channels, img.height, img.width],
    input_sha256: createHash("sha256").update(inputBytes).digest("hex"),
    layers: fixtureLayers,
  };
}

export function exportPrefix(
  checkpoint: Uint8Array,
  layerCount: number,
  outDir: string,
  weightFileName = "vgg.fcmw"
): { weightPath: string; manifestPath: string } {
  fs.mkdirSync(outDir, { recursive: true });
  const layers = sliceCheckpoint(checkpoint, layerCount);
  const fcmw = writeFcmw(layers);
  const weightPath = path.join(outDir, weightFileName);
  fs.writeFileSync(weightPath, fcmw);
  // Content checksum: the container's own trailer value (CRC over the body).
  // The CRC of the *whole* file is the constant residue 0x2144df1c for any
  // CRC-terminated stream and identifies nothing.
  const bodyCrc = crc32(fcmw.subarray(0, fcmw.length - 4));

  const fixtures = [
    emitFixture("gradient_checker", gradientCheckerCard(), layers, outDir),
    emitFixture("zero_image", zeroImage(), layers, outDir),
  ];
  const manifest = {
    format: "FCMW",
    version: 1,
    weight_file: weightFileName,
    weight_crc32: "0x" + bodyCrc.toString(16).padStart(8, "0"),
    layers: layers.map((l) => ({ name: l.name, weight_shape: l.shape, bias_shape: [l.shape[0]] })),
    preprocessing: { mean: PREPROC_MEAN, std: PREPROC_STD, input_range: [0, 1] },
    tolerance: FIXTURE_TOLERANCE,
    fixtures,
  };
  const manifestPath = path.join(outDir, "manifest.json");
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + "\n");
  return { weightPath, manifestPath };
}

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near ${argv[i]}`);
    }
    out.set(argv[i].slice(2), argv[i + 1]);
  }
  return out;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    const args = parseArgs(rest);
    if (command === "export") {
      const source = args.get("source");
      if (!source) throw new Error("--source <checkpoint.safetensors> is required");
      const layers = parseInt(args.get("layers") ?? "3", 10);
      const out = args.get("out") ?? "vgg.fcmw";
      const checkpoint = new Uint8Array(fs.readFileSync(source));
      const { weightPath, manifestPath } = exportPrefix(
        checkpoint,
        layers,
        path.dirname(path.resolve(out)),
        path.basename(out)
      );
      console.log(`wrote ${weightPath} and ${manifestPath}`);
      return 0;
    }
    if (command === "fixtures") {
      const outDir = args.get("out-dir") ?? "fixtures";
      let checkpoint: Uint8Array;
      if (args.has("source")) {
        checkpoint = new Uint8Array(fs.readFileSync(args.get("source")!));
      } else {
        console.log("no --source given: using the deterministic synthetic checkpoint");
        checkpoint = makeSyntheticCheckpoint(7);
      }
      const { weightPath, manifestPath } = exportPrefix(checkpoint, 3, outDir);
      console.log(`wrote ${weightPath}, fixtures, and ${manifestPath}`);
      return 0;
    }
    if (command === "synthetic") {
      const out = args.get("out") ?? "synthetic.safetensors";
      const seed = parseInt(args.get("seed") ?? "7", 10);
      fs.writeFileSync(out, makeSyntheticCheckpoint(seed));
      console.log(`wrote ${out}`);
      return 0;
    }
    console.error("usage: export|fixtures|synthetic [--flags]");
    return 2;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}

export { writeSafetensors };

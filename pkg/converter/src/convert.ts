/**
 * Conversion of external datasets into MOMD containers, one file per split:
 * `<prefix>.train.momd`, `<prefix>.val.momd`, `<prefix>.test.momd`.
 *
 * - `medmnist`: an NPZ archive carrying its own `{train,val,test}_images` /
 *   `_labels` members; images keep their native size and channel count.
 * - `image-folder`: a directory of PGM/PPM images with a metadata CSV
 *   (filename, patient, label). Images are reduced to one channel, resized
 *   bilinearly to the target size, and split patient-wise so no patient
 *   appears in two splits.
 */

import { readFileSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { MetaError, MetaRow, parseMetadataCsv } from './meta.js';
import { Dataset, encodeMomd } from './momd.js';
import { parsePnm } from './netpbm.js';
import { NpyArray, parseNpz } from './npz.js';
import { resizeBilinear, toLuminance } from './resize.js';
import { Ratios, splitPatients, PatientSplit } from './split.js';

export class ConvertError extends Error {}

export const SPLITS = ['train', 'val', 'test'] as const;
export type SplitName = (typeof SPLITS)[number];

export interface SourceSpec {
  kind: 'medmnist' | 'image-folder';
  input: string;
  /** metadata CSV path; image-folder only */
  metadata?: string;
  /** output side length; image-folder only (medmnist keeps native size) */
  targetSize?: number;
  /** patient-wise split ratios, image-folder only */
  ratios?: Ratios;
  seed?: number;
}

export interface ConvertResult {
  files: Record<SplitName, string>;
  counts: Record<SplitName, number>;
  numClasses: number;
  height: number;
  width: number;
  channels: number;
  /** present for image-folder sources */
  patients?: PatientSplit;
}

const DEFAULT_SIZE = 224;
const DEFAULT_RATIOS: Ratios = [0.6, 0.15, 0.25];

export function convert(spec: SourceSpec, outPrefix: string): ConvertResult {
  if (spec.kind === 'medmnist') {
    return convertMedmnist(spec, outPrefix);
  }
  if (spec.kind === 'image-folder') {
    return convertImageFolder(spec, outPrefix);
  }
  throw new ConvertError(`unknown source kind ${JSON.stringify((spec as SourceSpec).kind)}`);
}

function writeSplit(outPrefix: string, split: SplitName, ds: Dataset): string {
  const path = `${outPrefix}.${split}.momd`;
  writeFileSync(path, encodeMomd(ds));
  return path;
}

// ---------------------------------------------------------------------------
// medmnist
// ---------------------------------------------------------------------------

function asLabels(arr: NpyArray, member: string): Int32Array {
  if (arr.shape.length === 2 && arr.shape[1] === 1) {
    // (N, 1) column vectors are the MedMNIST convention
  } else if (arr.shape.length !== 1) {
    throw new ConvertError(`${member}: expected shape (N,) or (N, 1), got (${arr.shape})`);
  }
  const out = new Int32Array(arr.shape[0]);
  for (let i = 0; i < out.length; i++) out[i] = Number(arr.data[i]);
  return out;
}

function convertMedmnist(spec: SourceSpec, outPrefix: string): ConvertResult {
  const archive = parseNpz(new Uint8Array(readFileSync(spec.input)));
  const splits: Partial<Record<SplitName, { images: NpyArray; labels: Int32Array }>> = {};
  for (const split of SPLITS) {
    const images = archive[`${split}_images`];
    const labels = archive[`${split}_labels`];
    if (images === undefined || labels === undefined) continue;
    if (!(images.data instanceof Uint8Array)) {
      throw new ConvertError(`${split}_images: expected uint8 pixels`);
    }
    splits[split] = { images, labels: asLabels(labels, `${split}_labels`) };
  }
  const reference = splits.train ?? splits.val ?? splits.test;
  if (!reference) {
    throw new ConvertError(`${spec.input}: no {train,val,test}_images members found`);
  }
  const shape = reference.images.shape;
  if (shape.length !== 3 && !(shape.length === 4 && shape[3] === 3)) {
    throw new ConvertError(`expected image arrays of shape (N, H, W) or (N, H, W, 3), got (${shape})`);
  }
  const [, height, width] = shape;
  const channels = shape.length === 4 ? 3 : 1;

  let maxLabel = 0;
  for (const split of SPLITS) {
    const part = splits[split];
    if (part) {
      for (const label of part.labels) maxLabel = Math.max(maxLabel, label);
    }
  }
  const numClasses = maxLabel + 1;

  const files = {} as Record<SplitName, string>;
  const counts = {} as Record<SplitName, number>;
  for (const split of SPLITS) {
    const part = splits[split];
    let ds: Dataset;
    if (part) {
      const n = part.images.shape[0];
      if (part.labels.length !== n) {
        throw new ConvertError(`${split}: ${n} images but ${part.labels.length} labels`);
      }
      const [, h, w] = part.images.shape;
      const c = part.images.shape.length === 4 ? 3 : 1;
      if (h !== height || w !== width || c !== channels) {
        throw new ConvertError(`${split}: image shape differs from the train split`);
      }
      ds = {
        count: n,
        height,
        width,
        channels,
        numClasses,
        images: part.images.data as Uint8Array,
        labels: part.labels,
      };
    } else {
      ds = { count: 0, height, width, channels, numClasses, images: new Uint8Array(0), labels: new Int32Array(0) };
    }
    files[split] = writeSplit(outPrefix, split, ds);
    counts[split] = ds.count;
  }
  return { files, counts, numClasses, height, width, channels };
}

// ---------------------------------------------------------------------------
// image folders
// ---------------------------------------------------------------------------

function loadImage(folder: string, row: MetaRow, size: number): Uint8Array {
  let raw: Uint8Array;
  try {
    raw = new Uint8Array(readFileSync(join(folder, row.filename)));
  } catch (err) {
    throw new ConvertError(`cannot read image ${row.filename}: ${(err as Error).message}`);
  }
  const image = parsePnm(raw);
  const gray = image.channels === 3 ? toLuminance(image.data, image.height, image.width) : image.data;
  return resizeBilinear(gray, image.height, image.width, 1, size, size);
}

function convertImageFolder(spec: SourceSpec, outPrefix: string): ConvertResult {
  if (!spec.metadata) {
    throw new ConvertError('image-folder sources need --meta <csv> with filename,patient,label columns');
  }
  let rows: MetaRow[];
  try {
    rows = parseMetadataCsv(readFileSync(spec.metadata, 'utf-8'));
  } catch (err) {
    if (err instanceof MetaError) throw new ConvertError(`${spec.metadata}: ${err.message}`);
    throw new ConvertError(`cannot read metadata ${spec.metadata}: ${(err as Error).message}`);
  }
  const size = spec.targetSize ?? DEFAULT_SIZE;
  const ratios = spec.ratios ?? DEFAULT_RATIOS;
  const seed = spec.seed ?? 0;
  const patients = splitPatients(rows.map((r) => r.patient), ratios, seed);
  const membership = new Map<string, SplitName>();
  for (const split of SPLITS) {
    for (const patient of patients[split]) membership.set(patient, split);
  }
  const numClasses = Math.max(...rows.map((r) => r.label)) + 1;

  const files = {} as Record<SplitName, string>;
  const counts = {} as Record<SplitName, number>;
  for (const split of SPLITS) {
    const splitRows = rows.filter((r) => membership.get(r.patient) === split);
    const images = new Uint8Array(splitRows.length * size * size);
    const labels = new Int32Array(splitRows.length);
    for (const [i, row] of splitRows.entries()) {
      images.set(loadImage(spec.input, row, size), i * size * size);
      labels[i] = row.label;
    }
    const ds: Dataset = {
      count: splitRows.length,
      height: size,
      width: size,
      channels: 1,
      numClasses,
      images,
      labels,
    };
    files[split] = writeSplit(outPrefix, split, ds);
    counts[split] = ds.count;
  }
  return { files, counts, numClasses, height: size, width: size, channels: 1, patients };
}

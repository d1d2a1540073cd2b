import { readFileSync } from 'node:fs';
import { join } from 'node:path';

import { beforeAll, describe, expect, it } from 'vitest';

import { parseNpz } from '../src/npz.js';
import { makeTempDir, python } from './helpers.js';

let dir: string;
let expected: { images: number[]; labels: number[]; shape: number[] };

beforeAll(() => {
  dir = makeTempDir('npz-');
  const out = python(
    `
import json
import numpy as np
rng = np.random.default_rng(5)
images = rng.integers(0, 256, size=(4, 3, 5), dtype=np.uint8)
labels = rng.integers(0, 3, size=(4, 1), dtype=np.uint8)
np.savez(r"${join(dir, 'plain.npz')}", train_images=images, train_labels=labels)
np.savez_compressed(r"${join(dir, 'packed.npz')}", train_images=images, train_labels=labels)
print(json.dumps({
    "images": images.ravel().tolist(),
    "labels": labels.ravel().tolist(),
    "shape": list(images.shape),
}))
`,
  );
  expected = JSON.parse(out);
});

describe('npz parsing against numpy-written archives', () => {
  for (const name of ['plain.npz', 'packed.npz']) {
    it(`decodes ${name} exactly`, () => {
      const archive = parseNpz(new Uint8Array(readFileSync(join(dir, name))));
      expect(Object.keys(archive).sort()).toEqual(['train_images', 'train_labels']);
      expect(archive.train_images.shape).toEqual(expected.shape);
      expect([...archive.train_images.data]).toEqual(expected.images);
      expect(archive.train_labels.shape).toEqual([4, 1]);
      expect([...archive.train_labels.data]).toEqual(expected.labels);
    });
  }

  it('rejects non-zip input', () => {
    expect(() => parseNpz(new Uint8Array(64))).toThrow(/zip/);
  });
});

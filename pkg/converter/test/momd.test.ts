import { describe, expect, it } from 'vitest';

import { decodeMomd, encodeMomd, FormatError, HEADER_SIZE } from '../src/momd.js';

function sample(count = 3, h = 4, w = 5, c = 1, numClasses = 2) {
  const images = new Uint8Array(count * h * w * c);
  for (let i = 0; i < images.length; i++) images[i] = (i * 37) % 256;
  const labels = new Int32Array(count);
  for (let i = 0; i < count; i++) labels[i] = i % numClasses;
  return { count, height: h, width: w, channels: c, numClasses, images, labels };
}

describe('momd container', () => {
  it('round-trips bit for bit', () => {
    const ds = sample();
    const bytes = encodeMomd(ds);
    const back = decodeMomd(bytes);
    expect(back.count).toBe(ds.count);
    expect([...back.images]).toEqual([...ds.images]);
    expect([...back.labels]).toEqual([...ds.labels]);
    expect([...encodeMomd(back)]).toEqual([...bytes]);
  });

  it('writes a 17-byte file for an empty dataset', () => {
    const ds = sample(0);
    expect(encodeMomd(ds).length).toBe(HEADER_SIZE);
  });

  it('uses two-byte labels above 256 classes', () => {
    const ds = sample(3, 2, 2, 1, 1000);
    ds.labels[0] = 999;
    const bytes = encodeMomd(ds);
    expect(bytes.length).toBe(HEADER_SIZE + 3 * 4 + 3 * 2);
    expect(decodeMomd(bytes).labels[0]).toBe(999);
  });

  it('rejects bad magic and truncation', () => {
    const bytes = encodeMomd(sample());
    const bad = new Uint8Array(bytes);
    bad[0] = 0x58;
    expect(() => decodeMomd(bad)).toThrow(FormatError);
    expect(() => decodeMomd(bytes.subarray(0, bytes.length - 2))).toThrow(FormatError);
  });

  it('rejects out-of-range labels', () => {
    const ds = sample();
    ds.labels[1] = 7;
    expect(() => encodeMomd(ds)).toThrow(FormatError);
  });
});

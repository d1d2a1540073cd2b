import { readFileSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { describe, expect, it } from 'vitest';

import { main } from '../src/cli.js';
import { convert } from '../src/convert.js';
import { verifyContainer } from '../src/verify.js';
import { makeTempDir, pgmBytes } from './helpers.js';

function fixture(dir: string) {
  const lines = ['filename,patient,label'];
  let seed = 50;
  for (let p = 0; p < 4; p++) {
    for (let i = 0; i < 3; i++) {
      const name = `f_${p}_${i}.pgm`;
      writeFileSync(join(dir, name), pgmBytes(8, 8, seed++));
      lines.push(`${name},pt${p},${p % 2}`);
    }
  }
  writeFileSync(join(dir, 'meta.csv'), lines.join('\n') + '\n');
  return convert(
    { kind: 'image-folder', input: dir, metadata: join(dir, 'meta.csv'), targetSize: 8, seed: 0 },
    join(dir, 'set'),
  );
}

describe('verify', () => {
  it('reports header fields and per-class counts that match an independent tally', () => {
    const dir = makeTempDir('verify-');
    const result = fixture(dir);
    const report = verifyContainer(result.files.train, result.counts.train);
    expect(report.ok).toBe(true);
    expect(report.count).toBe(result.counts.train);
    expect(report.perClass.reduce((a, b) => a + b, 0)).toBe(report.count);
    // independent tally from the metadata and the split assignment
    const meta = readFileSync(join(dir, 'meta.csv'), 'utf-8').trim().split('\n').slice(1);
    const trainPatients = new Set(result.patients!.train);
    const tally = [0, 0];
    for (const line of meta) {
      const [, patient, label] = line.split(',');
      if (trainPatients.has(patient)) tally[Number(label)] += 1;
    }
    expect(report.perClass).toEqual(tally);
  });

  it('flags a count mismatch', () => {
    const dir = makeTempDir('verify2-');
    const result = fixture(dir);
    expect(verifyContainer(result.files.train, result.counts.train + 1).ok).toBe(false);
  });

  it('rejects a corrupted header byte', () => {
    const dir = makeTempDir('verify3-');
    const result = fixture(dir);
    const bytes = readFileSync(result.files.test);
    bytes[2] = 0x21;
    const broken = join(dir, 'broken.momd');
    writeFileSync(broken, bytes);
    expect(() => verifyContainer(broken)).toThrow(/magic/);
  });
});

describe('cli', () => {
  it('convert + verify succeed end to end', () => {
    const dir = makeTempDir('cli-');
    const lines = ['filename,patient,label'];
    for (let p = 0; p < 4; p++) {
      for (let i = 0; i < 2; i++) {
        const name = `c_${p}_${i}.pgm`;
        writeFileSync(join(dir, name), pgmBytes(8, 8, p * 10 + i));
        lines.push(`${name},pat${p},${p % 2}`);
      }
    }
    writeFileSync(join(dir, 'meta.csv'), lines.join('\n') + '\n');
    const rc = main([
      'convert', '--kind', 'image-folder', '--in', dir, '--meta', join(dir, 'meta.csv'),
      '--out', join(dir, 'run'), '--size', '8', '--seed', '3', '--ratios', '0.6,0.15,0.25',
    ]);
    expect(rc).toBe(0);
    expect(main(['verify', '--in', join(dir, 'run.train.momd')])).toBe(0);
  });

  it('maps usage and data errors to exit codes 1 and 2', () => {
    expect(main(['convert', '--kind', 'nonsense', '--in', 'x', '--out', 'y'])).toBe(1);
    expect(main(['frobnicate'])).toBe(1);
    expect(main(['verify', '--in', '/nonexistent/file.momd'])).toBe(2);
    const dir = makeTempDir('cli2-');
    const result = fixture(dir);
    expect(main(['verify', '--in', result.files.train, '--expect', '999'])).toBe(2);
  });
});

/** Container inspection: header fields, per-class counts, checksum. */

import { createHash } from 'node:crypto';
import { readFileSync } from 'node:fs';

import { decodeMomd } from './momd.js';

export interface VerifyReport {
  path: string;
  count: number;
  height: number;
  width: number;
  channels: number;
  numClasses: number;
  perClass: number[];
  sha256: string;
  /** false when an expected count was given and disagrees */
  ok: boolean;
}

export function verifyContainer(path: string, expectedCount?: number): VerifyReport {
  const bytes = new Uint8Array(readFileSync(path));
  const ds = decodeMomd(bytes);
  const perClass = new Array<number>(ds.numClasses).fill(0);
  for (const label of ds.labels) perClass[label] += 1;
  const sha256 = createHash('sha256').update(bytes).digest('hex');
  const ok = expectedCount === undefined || expectedCount === ds.count;
  return {
    path,
    count: ds.count,
    height: ds.height,
    width: ds.width,
    channels: ds.channels,
    numClasses: ds.numClasses,
    perClass,
    sha256,
    ok,
  };
}

export function formatReport(report: VerifyReport): string {
  const lines = [
    `container ${report.path}`,
    `count=${report.count} size=${report.height}x${report.width}x${report.channels} num_classes=${report.numClasses}`,
    `per-class counts: ${report.perClass.join(' ')}`,
    `sha256=${report.sha256}`,
  ];
  if (!report.ok) lines.push('COUNT MISMATCH against the source');
  return lines.join('\n');
}

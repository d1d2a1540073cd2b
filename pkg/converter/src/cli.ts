#!/usr/bin/env node
/**
 * momae-convert: pack external datasets into MOMD containers.
 *
 *   convert --kind medmnist     --in archive.npz --out prefix
 *   convert --kind image-folder --in folder --meta meta.csv --out prefix
 *           [--size 224] [--seed 0] [--ratios 0.6,0.15,0.25]
 *   verify  --in container.momd [--expect N]
 *
 * Exit status: 0 success, 1 usage error, 2 data/format error (including a
 * count mismatch reported by verify).
 */

import { pathToFileURL } from 'node:url';

import { ConvertError, convert, SourceSpec } from './convert.js';
import { FormatError } from './momd.js';
import { MetaError } from './meta.js';
import { NpzError } from './npz.js';
import { PnmError } from './netpbm.js';
import { SplitError, Ratios } from './split.js';
import { formatReport, verifyContainer } from './verify.js';

class UsageError extends Error {}

function parseFlags(argv: string[], allowed: Set<string>): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    if (!flag.startsWith('--')) throw new UsageError(`expected a flag, got ${flag}`);
    if (!allowed.has(flag)) throw new UsageError(`unknown flag ${flag}`);
    const value = argv[i + 1];
    if (value === undefined) throw new UsageError(`flag ${flag} needs a value`);
    flags.set(flag, value);
  }
  return flags;
}

function need(flags: Map<string, string>, flag: string): string {
  const value = flags.get(flag);
  if (value === undefined) throw new UsageError(`missing required flag ${flag}`);
  return value;
}

function parseRatios(text: string): Ratios {
  const parts = text.split(',').map((t) => Number.parseFloat(t.trim()));
  if (parts.length !== 3 || parts.some((p) => !Number.isFinite(p))) {
    throw new UsageError(`--ratios must be three comma-separated numbers, got ${text}`);
  }
  return [parts[0], parts[1], parts[2]];
}

function parseIntFlag(flags: Map<string, string>, flag: string): number | undefined {
  const raw = flags.get(flag);
  if (raw === undefined) return undefined;
  const value = Number.parseInt(raw, 10);
  if (!Number.isInteger(value) || String(value) !== raw) {
    throw new UsageError(`${flag} must be an integer, got ${raw}`);
  }
  return value;
}

function cmdConvert(argv: string[]): number {
  const flags = parseFlags(
    argv,
    new Set(['--kind', '--in', '--meta', '--out', '--size', '--seed', '--ratios']),
  );
  const kind = need(flags, '--kind');
  if (kind !== 'medmnist' && kind !== 'image-folder') {
    throw new UsageError(`--kind must be medmnist or image-folder, got ${kind}`);
  }
  const spec: SourceSpec = {
    kind,
    input: need(flags, '--in'),
    metadata: flags.get('--meta'),
    targetSize: parseIntFlag(flags, '--size'),
    seed: parseIntFlag(flags, '--seed'),
    ratios: flags.has('--ratios') ? parseRatios(flags.get('--ratios')!) : undefined,
  };
  const result = convert(spec, need(flags, '--out'));
  for (const split of ['train', 'val', 'test'] as const) {
    console.log(`${result.files[split]}: ${result.counts[split]} images`);
  }
  if (result.patients) {
    console.log(
      `patients train/val/test: ${result.patients.train.length}/` +
        `${result.patients.val.length}/${result.patients.test.length}`,
    );
  }
  console.log(`size ${result.height}x${result.width}x${result.channels}, ${result.numClasses} classes`);
  return 0;
}

function cmdVerify(argv: string[]): number {
  const flags = parseFlags(argv, new Set(['--in', '--expect']));
  const report = verifyContainer(need(flags, '--in'), parseIntFlag(flags, '--expect'));
  console.log(formatReport(report));
  return report.ok ? 0 : 2;
}

export function main(argv: string[]): number {
  try {
    const [command, ...rest] = argv;
    if (command === 'convert') return cmdConvert(rest);
    if (command === 'verify') return cmdVerify(rest);
    throw new UsageError(`usage: momae-convert <convert|verify> [flags]; got ${command ?? 'nothing'}`);
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`usage error: ${err.message}`);
      return 1;
    }
    if (
      err instanceof ConvertError ||
      err instanceof FormatError ||
      err instanceof MetaError ||
      err instanceof NpzError ||
      err instanceof PnmError ||
      err instanceof SplitError ||
      (err as NodeJS.ErrnoException).code !== undefined
    ) {
      console.error(`error: ${(err as Error).message}`);
      return 2;
    }
    throw err;
  }
}

if (process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href) {
  process.exit(main(process.argv.slice(2)));
}

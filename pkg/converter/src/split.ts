/**
 * Patient-wise train/val/test splitting: patients are shuffled by a seeded
 * deterministic generator and assigned whole to one split, so no patient's
 * images straddle a boundary.
 */

export class SplitError extends Error {}

export type Ratios = [number, number, number];

/** mulberry32: tiny deterministic PRNG, stable across platforms. */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function roundHalfAway(x: number): number {
  return x >= 0 ? Math.floor(x + 0.5) : -Math.floor(-x + 0.5);
}

export function shuffled<T>(items: T[], seed: number): T[] {
  const rng = mulberry32(seed);
  const out = items.slice();
  for (let i = out.length - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    [out[i], out[j]] = [out[j], out[i]];
  }
  return out;
}

export interface PatientSplit {
  train: string[];
  val: string[];
  test: string[];
}

/**
 * Assign patients to splits by cumulative rounding of the ratios, e.g.
 * 4 patients at 0.5/0.25/0.25 give 2/1/1. Patients are sorted before the
 * seeded shuffle so the result depends only on (patient set, seed, ratios).
 */
export function splitPatients(patients: Iterable<string>, ratios: Ratios, seed: number): PatientSplit {
  const sum = ratios[0] + ratios[1] + ratios[2];
  if (Math.abs(sum - 1.0) > 1e-9) {
    throw new SplitError(`split ratios must sum to 1, got ${ratios.join('/')} (sum ${sum})`);
  }
  if (ratios.some((r) => r < 0)) {
    throw new SplitError(`split ratios must be non-negative, got ${ratios.join('/')}`);
  }
  const unique = [...new Set(patients)].sort();
  if (unique.length === 0) throw new SplitError('no patients to split');
  const order = shuffled(unique, seed);
  const n = order.length;
  const trainEnd = roundHalfAway(ratios[0] * n);
  const valEnd = roundHalfAway((ratios[0] + ratios[1]) * n);
  return {
    train: order.slice(0, trainEnd),
    val: order.slice(trainEnd, valEnd),
    test: order.slice(valEnd),
  };
}

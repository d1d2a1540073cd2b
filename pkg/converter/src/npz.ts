/**
 * Minimal NPZ/NPY reader: enough for MedMNIST-style archives (zip of .npy
 * members, stored or deflated, C-order numeric arrays).
 */

import { inflateRawSync } from 'node:zlib';

export class NpzError extends Error {}

export interface NpyArray {
  shape: number[];
  /** flat C-order values */
  data: Uint8Array | Int8Array | Uint16Array | Int16Array | Uint32Array | Int32Array | Float32Array | Float64Array;
}

const EOCD_SIG = 0x06054b50;
const CENTRAL_SIG = 0x02014b50;
const LOCAL_SIG = 0x04034b50;

/** Unzip and parse every .npy member, keyed by member name without extension. */
export function parseNpz(bytes: Uint8Array): Record<string, NpyArray> {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  // EOCD sits at the end, possibly preceded by a comment of up to 64k.
  let eocd = -1;
  const lo = Math.max(0, bytes.length - 22 - 0xffff);
  for (let i = bytes.length - 22; i >= lo; i--) {
    if (view.getUint32(i, true) === EOCD_SIG) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) throw new NpzError('not a zip archive (no end-of-central-directory record)');
  const entryCount = view.getUint16(eocd + 10, true);
  let pos = view.getUint32(eocd + 16, true);

  const out: Record<string, NpyArray> = {};
  for (let e = 0; e < entryCount; e++) {
    if (view.getUint32(pos, true) !== CENTRAL_SIG) {
      throw new NpzError('corrupt central directory');
    }
    const method = view.getUint16(pos + 10, true);
    const compressedSize = view.getUint32(pos + 20, true);
    const nameLength = view.getUint16(pos + 28, true);
    const extraLength = view.getUint16(pos + 30, true);
    const commentLength = view.getUint16(pos + 32, true);
    const localOffset = view.getUint32(pos + 42, true);
    const name = Buffer.from(bytes.subarray(pos + 46, pos + 46 + nameLength)).toString('utf-8');
    pos += 46 + nameLength + extraLength + commentLength;

    if (view.getUint32(localOffset, true) !== LOCAL_SIG) {
      throw new NpzError(`corrupt local header for ${name}`);
    }
    const localName = view.getUint16(localOffset + 26, true);
    const localExtra = view.getUint16(localOffset + 28, true);
    const dataStart = localOffset + 30 + localName + localExtra;
    const raw = bytes.subarray(dataStart, dataStart + compressedSize);
    let member: Uint8Array;
    if (method === 0) {
      member = raw;
    } else if (method === 8) {
      member = new Uint8Array(inflateRawSync(raw));
    } else {
      throw new NpzError(`unsupported compression method ${method} for ${name}`);
    }
    if (name.endsWith('.npy')) {
      out[name.slice(0, -4)] = parseNpy(member);
    }
  }
  return out;
}

const DTYPES: Record<string, (buf: ArrayBuffer) => NpyArray['data']> = {
  '|u1': (b) => new Uint8Array(b),
  '|i1': (b) => new Int8Array(b),
  '<u2': (b) => new Uint16Array(b),
  '<i2': (b) => new Int16Array(b),
  '<u4': (b) => new Uint32Array(b),
  '<i4': (b) => new Int32Array(b),
  '<f4': (b) => new Float32Array(b),
  '<f8': (b) => new Float64Array(b),
};

export function parseNpy(bytes: Uint8Array): NpyArray {
  const magic = String.fromCharCode(...bytes.subarray(1, 6));
  if (bytes[0] !== 0x93 || magic !== 'NUMPY') throw new NpzError('not an npy payload');
  const major = bytes[6];
  let headerLength: number;
  let headerStart: number;
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  if (major === 1) {
    headerLength = view.getUint16(8, true);
    headerStart = 10;
  } else {
    headerLength = view.getUint32(8, true);
    headerStart = 12;
  }
  const header = Buffer.from(bytes.subarray(headerStart, headerStart + headerLength)).toString('latin1');
  const descr = /'descr':\s*'([^']+)'/.exec(header)?.[1];
  const fortran = /'fortran_order':\s*(True|False)/.exec(header)?.[1];
  const shapeText = /'shape':\s*\(([^)]*)\)/.exec(header)?.[1];
  if (!descr || !fortran || shapeText === undefined) {
    throw new NpzError(`unparseable npy header: ${header.trim()}`);
  }
  if (fortran === 'True') throw new NpzError('fortran-order arrays are not supported');
  const make = DTYPES[descr];
  if (!make) throw new NpzError(`unsupported dtype ${descr}`);
  const shape = shapeText
    .split(',')
    .map((t) => t.trim())
    .filter((t) => t.length > 0)
    .map((t) => Number.parseInt(t, 10));
  const payload = bytes.slice(headerStart + headerLength);
  const data = make(payload.buffer.slice(payload.byteOffset, payload.byteOffset + payload.byteLength));
  const expected = shape.reduce((a, b) => a * b, 1);
  if (data.length !== expected) {
    throw new NpzError(`npy payload holds ${data.length} values, shape (${shape}) implies ${expected}`);
  }
  return { shape, data };
}

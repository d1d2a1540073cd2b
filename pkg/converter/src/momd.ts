/**
 * MOMD dataset container: the byte format consumed by the training package.
 *
 * Layout (all integers little-endian):
 *   magic "MOMD" (4) | version=1 (1) | count u32 (4) | H u16 (2) | W u16 (2) |
 *   C u8 (1) | num_classes u16 (2) | label_width u8 (1) |
 *   count*H*W*C image bytes (row-major) | count labels (u8 or u16 LE).
 */

export const HEADER_SIZE = 17;
const MAGIC = 'MOMD';
const VERSION = 1;

export interface Dataset {
  count: number;
  height: number;
  width: number;
  channels: number;
  numClasses: number;
  /** count * height * width * channels bytes, row-major */
  images: Uint8Array;
  /** count entries */
  labels: Int32Array;
}

export class FormatError extends Error {}

export function labelWidth(numClasses: number): number {
  return numClasses <= 256 ? 1 : 2;
}

export function encodeMomd(ds: Dataset): Uint8Array {
  const { count, height, width, channels, numClasses } = ds;
  if (channels !== 1 && channels !== 3) {
    throw new FormatError(`channel count must be 1 or 3, got ${channels}`);
  }
  if (height > 0xffff || width > 0xffff) {
    throw new FormatError(`image extent ${height}x${width} exceeds u16 header fields`);
  }
  if (numClasses < 1 || numClasses > 0xffff) {
    throw new FormatError(`num_classes must be in [1, 65535], got ${numClasses}`);
  }
  const pixelBytes = count * height * width * channels;
  if (ds.images.length !== pixelBytes) {
    throw new FormatError(`expected ${pixelBytes} image bytes, got ${ds.images.length}`);
  }
  if (ds.labels.length !== count) {
    throw new FormatError(`expected ${count} labels, got ${ds.labels.length}`);
  }
  const lw = labelWidth(numClasses);
  const out = new Uint8Array(HEADER_SIZE + pixelBytes + count * lw);
  const view = new DataView(out.buffer);
  for (let i = 0; i < 4; i++) out[i] = MAGIC.charCodeAt(i);
  out[4] = VERSION;
  view.setUint32(5, count, true);
  view.setUint16(9, height, true);
  view.setUint16(11, width, true);
  out[13] = channels;
  view.setUint16(14, numClasses, true);
  out[16] = lw;
  out.set(ds.images, HEADER_SIZE);
  let offset = HEADER_SIZE + pixelBytes;
  for (let i = 0; i < count; i++) {
    const label = ds.labels[i];
    if (label < 0 || label >= numClasses) {
      throw new FormatError(`label ${label} outside [0, ${numClasses})`);
    }
    if (lw === 1) {
      out[offset] = label;
      offset += 1;
    } else {
      view.setUint16(offset, label, true);
      offset += 2;
    }
  }
  return out;
}

export function decodeMomd(bytes: Uint8Array): Dataset {
  if (bytes.length < HEADER_SIZE) {
    throw new FormatError(`file shorter than the ${HEADER_SIZE}-byte header`);
  }
  const magic = String.fromCharCode(...bytes.subarray(0, 4));
  if (magic !== MAGIC) throw new FormatError(`bad magic ${JSON.stringify(magic)}`);
  if (bytes[4] !== VERSION) throw new FormatError(`unsupported version ${bytes[4]}`);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const count = view.getUint32(5, true);
  const height = view.getUint16(9, true);
  const width = view.getUint16(11, true);
  const channels = bytes[13];
  const numClasses = view.getUint16(14, true);
  const lw = bytes[16];
  if (lw !== 1 && lw !== 2) throw new FormatError(`label width must be 1 or 2, got ${lw}`);
  const pixelBytes = count * height * width * channels;
  const expected = HEADER_SIZE + pixelBytes + count * lw;
  if (bytes.length !== expected) {
    throw new FormatError(`expected ${expected} bytes from header arithmetic, found ${bytes.length}`);
  }
  const images = bytes.slice(HEADER_SIZE, HEADER_SIZE + pixelBytes);
  const labels = new Int32Array(count);
  let offset = HEADER_SIZE + pixelBytes;
  for (let i = 0; i < count; i++) {
    labels[i] = lw === 1 ? bytes[offset] : view.getUint16(offset, true);
    offset += lw;
    if (labels[i] >= numClasses) {
      throw new FormatError(`label ${labels[i]} >= num_classes ${numClasses}`);
    }
  }
  return { count, height, width, channels, numClasses, images, labels };
}

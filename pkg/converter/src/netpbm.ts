/** Binary PGM (P5) / PPM (P6) reader for image-folder sources. */

export class PnmError extends Error {}

export interface PnmImage {
  height: number;
  width: number;
  channels: number;
  /** row-major, already rescaled to the 0..255 range */
  data: Uint8Array;
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d || byte === 0x0c || byte === 0x0b;
}

function nextToken(bytes: Uint8Array, pos: number): [string, number] {
  const n = bytes.length;
  while (pos < n) {
    if (isSpace(bytes[pos])) {
      pos++;
    } else if (bytes[pos] === 0x23) {
      // '#' comment runs to end of line
      while (pos < n && bytes[pos] !== 0x0a) pos++;
    } else {
      break;
    }
  }
  const start = pos;
  while (pos < n && !isSpace(bytes[pos])) pos++;
  if (start === pos) throw new PnmError('truncated header');
  return [Buffer.from(bytes.subarray(start, pos)).toString('latin1'), pos];
}

export function parsePnm(bytes: Uint8Array): PnmImage {
  let [magic, pos] = nextToken(bytes, 0);
  if (magic !== 'P5' && magic !== 'P6') {
    throw new PnmError(`unsupported magic ${JSON.stringify(magic)}, expected P5 or P6`);
  }
  const channels = magic === 'P5' ? 1 : 3;
  const fields: number[] = [];
  for (let i = 0; i < 3; i++) {
    const [token, next] = nextToken(bytes, pos);
    const value = Number.parseInt(token, 10);
    if (!Number.isFinite(value)) throw new PnmError(`non-numeric header field ${JSON.stringify(token)}`);
    fields.push(value);
    pos = next;
  }
  const [width, height, maxval] = fields;
  if (width < 1 || height < 1) throw new PnmError(`non-positive dimensions ${width}x${height}`);
  if (maxval < 1 || maxval > 255) throw new PnmError(`maxval ${maxval} outside [1, 255]`);
  pos += 1; // single whitespace byte before the raster
  const expected = width * height * channels;
  const raster = bytes.subarray(pos, pos + expected);
  if (raster.length !== expected) {
    throw new PnmError(`expected ${expected} raster bytes, found ${raster.length}`);
  }
  let data: Uint8Array;
  if (maxval === 255) {
    data = new Uint8Array(raster);
  } else {
    data = new Uint8Array(expected);
    for (let i = 0; i < expected; i++) {
      data[i] = Math.floor((raster[i] * 255) / maxval + 0.5);
    }
  }
  return { height, width, channels, data };
}

/** Minimal indexed-PNG writer for annotation export.
 *
 * Emits color-type-3 (palette) PNGs with stored (uncompressed) deflate
 * blocks, so no compression library is needed and the bytes are a pure
 * function of the input.  Label PNGs written this way round-trip through
 * any standards-compliant reader, including the evaluation harness.
 */

const SIGNATURE = Uint8Array.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(bytes: Uint8Array): number {
  let crc = 0xffffffff;
  for (const byte of bytes) {
    crc = CRC_TABLE[(crc ^ byte) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

export function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (const byte of bytes) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function be32(value: number): Uint8Array {
  return Uint8Array.from([
    (value >>> 24) & 0xff,
    (value >>> 16) & 0xff,
    (value >>> 8) & 0xff,
    value & 0xff,
  ]);
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

function chunk(type: string, payload: Uint8Array): Uint8Array {
  const typeBytes = Uint8Array.from([...type].map((ch) => ch.charCodeAt(0)));
  const body = concat([typeBytes, payload]);
  return concat([be32(payload.length), body, be32(crc32(body))]);
}

/** Wrap raw bytes in a zlib stream of stored deflate blocks. */
export function storedZlib(raw: Uint8Array): Uint8Array {
  const parts: Uint8Array[] = [Uint8Array.from([0x78, 0x01])];
  const blockSize = 65535;
  const blocks = Math.max(1, Math.ceil(raw.length / blockSize));
  for (let i = 0; i < blocks; i++) {
    const slice = raw.subarray(i * blockSize, Math.min((i + 1) * blockSize, raw.length));
    const final = i === blocks - 1 ? 1 : 0;
    const len = slice.length;
    const header = Uint8Array.from([
      final,
      len & 0xff,
      (len >>> 8) & 0xff,
      ~len & 0xff,
      (~len >>> 8) & 0xff,
    ]);
    parts.push(header, slice);
  }
  parts.push(be32(adler32(raw)));
  return concat(parts);
}

/** Encode a row-major index map as an indexed (color type 3) PNG. */
export function encodeIndexedPng(
  indices: Uint8Array,
  width: number,
  height: number,
  palette: [number, number, number][],
): Uint8Array {
  if (width < 1 || height < 1 || indices.length !== width * height) {
    throw new Error(`index buffer ${indices.length} does not fit ${width}x${height}`);
  }
  if (palette.length < 1 || palette.length > 256) {
    throw new Error(`palette needs 1-256 entries, got ${palette.length}`);
  }
  for (const index of indices) {
    if (index >= palette.length) {
      throw new Error(`index ${index} has no palette entry (palette has ${palette.length})`);
    }
  }

  const ihdr = concat([
    be32(width),
    be32(height),
    Uint8Array.from([8, 3, 0, 0, 0]),  // depth 8, indexed, default methods
  ]);
  const plte = new Uint8Array(palette.length * 3);
  palette.forEach(([r, g, b], i) => {
    plte[i * 3] = r;
    plte[i * 3 + 1] = g;
    plte[i * 3 + 2] = b;
  });
  const scanlines = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    const row = y * (width + 1);
    scanlines[row] = 0;  // filter: none
    scanlines.set(indices.subarray(y * width, (y + 1) * width), row + 1);
  }
  return concat([
    SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("PLTE", plte),
    chunk("IDAT", storedZlib(scanlines)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

/**
 * Minimal 8-bit grayscale PNG encoder (and a matching decoder for tests).
 *
 * Masks leave the browser as single-channel PNGs with class indices 0..6.
 * Canvas toBlob() only produces RGBA, so the file is assembled by hand:
 * IHDR (bit depth 8, color type 0), one IDAT holding a zlib stream of
 * stored (uncompressed) deflate blocks, IEND. Stored blocks keep the
 * encoder tiny and deterministic; the service accepts any valid PNG.
 */

const SIGNATURE = new Uint8Array([137, 80, 78, 71, 13, 10, 26, 10]);

const CRC_TABLE: Uint32Array = (() => {
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

export function crc32(data: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function adler32(data: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < data.length; i++) {
    a = (a + data[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function be32(value: number): Uint8Array {
  return new Uint8Array([
    (value >>> 24) & 0xff,
    (value >>> 16) & 0xff,
    (value >>> 8) & 0xff,
    value & 0xff,
  ]);
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new TextEncoder().encode(type);
  const body = new Uint8Array(typeBytes.length + data.length);
  body.set(typeBytes, 0);
  body.set(data, typeBytes.length);
  const out = new Uint8Array(4 + body.length + 4);
  out.set(be32(data.length), 0);
  out.set(body, 4);
  out.set(be32(crc32(body)), 4 + body.length);
  return out;
}

/** zlib wrapper around stored deflate blocks. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const MAX = 65535;
  for (let offset = 0; offset < raw.length || offset === 0; offset += MAX) {
    const slice = raw.subarray(offset, Math.min(offset + MAX, raw.length));
    const final = offset + MAX >= raw.length ? 1 : 0;
    const header = new Uint8Array(5);
    header[0] = final;
    header[1] = slice.length & 0xff;
    header[2] = slice.length >>> 8;
    header[3] = ~slice.length & 0xff;
    header[4] = (~slice.length >>> 8) & 0xff;
    blocks.push(header, slice);
    if (final) break;
  }
  blocks.push(be32(adler32(raw)));
  return concat(blocks);
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let at = 0;
  for (const p of parts) {
    out.set(p, at);
    at += p.length;
  }
  return out;
}

/** Encode class indices (row-major, length width*height) as grayscale PNG. */
export function encodeGrayPng(data: Uint8Array, width: number, height: number): Uint8Array {
  if (data.length !== width * height) {
    throw new Error(`mask has ${data.length} pixels, expected ${width * height}`);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(be32(width), 0);
  ihdr.set(be32(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // color type: grayscale
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter: none
    raw.set(data.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  return concat([
    SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

/**
 * Decode PNGs produced by encodeGrayPng (grayscale, stored blocks, filter 0).
 * Test helper, not a general PNG reader; the browser path decodes server
 * masks through a canvas instead.
 */
export function decodeGrayPng(bytes: Uint8Array): {
  width: number;
  height: number;
  data: Uint8Array;
} {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG: bad signature");
  }
  let at = 8;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (at < bytes.length) {
    const length =
      ((bytes[at] << 24) | (bytes[at + 1] << 16) | (bytes[at + 2] << 8) | bytes[at + 3]) >>> 0;
    if (at + 12 + length > bytes.length) {
      throw new Error("truncated or misaligned PNG chunk");
    }
    const type = String.fromCharCode(...bytes.subarray(at + 4, at + 8));
    const data = bytes.subarray(at + 8, at + 8 + length);
    if (type === "IHDR") {
      width = ((data[0] << 24) | (data[1] << 16) | (data[2] << 8) | data[3]) >>> 0;
      height = ((data[4] << 24) | (data[5] << 16) | (data[6] << 8) | data[7]) >>> 0;
      if (data[8] !== 8 || data[9] !== 0) {
        throw new Error("decoder supports 8-bit grayscale only");
      }
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    at += 12 + length;
  }
  const z = concat(idat);
  // skip the 2-byte zlib header, walk stored blocks
  let pos = 2;
  const rawParts: Uint8Array[] = [];
  for (;;) {
    if (pos + 5 > z.length) throw new Error("truncated deflate stream");
    const final = z[pos] & 1;
    if ((z[pos] >>> 1) & 0x03) throw new Error("decoder supports stored blocks only");
    const len = z[pos + 1] | (z[pos + 2] << 8);
    rawParts.push(z.subarray(pos + 5, pos + 5 + len));
    pos += 5 + len;
    if (final) break;
  }
  const raw = concat(rawParts);
  const data = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) throw new Error("decoder supports filter 0 only");
    data.set(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, data };
}

// Minimal 8-bit grayscale PNG codec.
//
// The encoder emits stored (uncompressed) deflate blocks inside a valid zlib
// stream, so it needs no compression library and runs identically in the
// browser and in node. Masks are small, so the size cost is irrelevant and
// the round trip is exact by construction.

const SIGNATURE = new Uint8Array([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

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

function u32be(value: number): Uint8Array {
  return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]);
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new Uint8Array([...type].map((c) => c.charCodeAt(0)));
  const body = concat([typeBytes, data]);
  return concat([u32be(data.length), body, u32be(crc32(body))]);
}

/** zlib-wrap raw bytes as stored deflate blocks (no compression). */
export function zlibStored(raw: Uint8Array): Uint8Array {
  const parts: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const blockMax = 65535;
  for (let off = 0; off < raw.length || off === 0; off += blockMax) {
    const len = Math.min(blockMax, raw.length - off);
    const final = off + len >= raw.length ? 1 : 0;
    const header = new Uint8Array(5);
    header[0] = final;
    header[1] = len & 0xff;
    header[2] = (len >>> 8) & 0xff;
    header[3] = ~len & 0xff;
    header[4] = (~len >>> 8) & 0xff;
    parts.push(header, raw.subarray(off, off + len));
    if (final) break;
  }
  parts.push(u32be(adler32(raw)));
  return concat(parts);
}

/** Encode a 0/1 (or 0..255) bitmap as an 8-bit grayscale PNG. */
export function encodeGrayPng(bitmap: Uint8Array, width: number, height: number): Uint8Array {
  if (bitmap.length !== width * height) {
    throw new Error(`bitmap length ${bitmap.length} does not match ${width}x${height}`);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32be(width), 0);
  ihdr.set(u32be(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // grayscale
  // compression, filter, interlace stay 0

  // raw scanlines: one filter byte (0 = none) per row
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    const row = y * (width + 1);
    raw[row] = 0;
    for (let x = 0; x < width; x++) {
      raw[row + 1 + x] = bitmap[y * width + x] > 0 ? 255 : 0;
    }
  }

  return concat([
    SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

export interface DecodedGray {
  width: number;
  height: number;
  /** 0 or 1 per pixel (thresholded at 128). */
  bitmap: Uint8Array;
}

/**
 * Decode an 8-bit grayscale PNG produced by encodeGrayPng (filter 0 only).
 * `inflate` supplies the zlib inflater (node:zlib in tests; the browser UI
 * never needs to decode).
 */
export function decodeGrayPng(
  data: Uint8Array,
  inflate: (compressed: Uint8Array) => Uint8Array,
): DecodedGray {
  for (let i = 0; i < SIGNATURE.length; i++) {
    if (data[i] !== SIGNATURE[i]) throw new Error("not a PNG");
  }
  let off = SIGNATURE.length;
  let width = 0;
  let height = 0;
  const idatParts: Uint8Array[] = [];
  while (off < data.length) {
    const len = (data[off] << 24) | (data[off + 1] << 16) | (data[off + 2] << 8) | data[off + 3];
    const type = String.fromCharCode(data[off + 4], data[off + 5], data[off + 6], data[off + 7]);
    const body = data.subarray(off + 8, off + 8 + len);
    if (type === "IHDR") {
      width = (body[0] << 24) | (body[1] << 16) | (body[2] << 8) | body[3];
      height = (body[4] << 24) | (body[5] << 16) | (body[6] << 8) | body[7];
      if (body[8] !== 8 || body[9] !== 0) throw new Error("only 8-bit grayscale supported");
    } else if (type === "IDAT") {
      idatParts.push(body);
    }
    off += 12 + len;
  }
  const raw = inflate(concat(idatParts));
  const bitmap = new Uint8Array(width * height);
  const prev = new Uint8Array(width);
  const cur = new Uint8Array(width);
  for (let y = 0; y < height; y++) {
    const row = y * (width + 1);
    const filter = raw[row];
    for (let x = 0; x < width; x++) {
      const value = raw[row + 1 + x];
      const a = x > 0 ? cur[x - 1] : 0; // left
      const b = prev[x]; // above
      const c = x > 0 ? prev[x - 1] : 0; // upper-left
      let out: number;
      switch (filter) {
        case 0:
          out = value;
          break;
        case 1:
          out = value + a;
          break;
        case 2:
          out = value + b;
          break;
        case 3:
          out = value + ((a + b) >> 1);
          break;
        case 4: {
          const p = a + b - c;
          const pa = Math.abs(p - a);
          const pb = Math.abs(p - b);
          const pc = Math.abs(p - c);
          out = value + (pa <= pb && pa <= pc ? a : pb <= pc ? b : c);
          break;
        }
        default:
          throw new Error(`unsupported PNG filter ${filter}`);
      }
      cur[x] = out & 0xff;
    }
    for (let x = 0; x < width; x++) {
      bitmap[y * width + x] = cur[x] >= 128 ? 1 : 0;
      prev[x] = cur[x];
    }
  }
  return { width, height, bitmap };
}

export function bytesToBase64(data: Uint8Array): string {
  if (typeof btoa === "function") {
    let s = "";
    for (let i = 0; i < data.length; i++) s += String.fromCharCode(data[i]);
    return btoa(s);
  }
  // node path (tests)
  return Buffer.from(data).toString("base64");
}

export function base64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const s = atob(b64);
    const out = new Uint8Array(s.length);
    for (let i = 0; i < s.length; i++) out[i] = s.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}

/** Binary frame decoding for the annotation service's wire format.
 *
 * Layout (little-endian): 16-byte header of magic "CSFR", u32 version,
 * u64 point count; then per point 3 x f32 position and 3 x u8 color.
 */

export interface DecodedFrame {
  count: number;
  positions: Float32Array; // length 3 * count
  colors: Uint8Array; // length 3 * count, 0..255
}

export const FRAME_MAGIC = 0x43534652; // "CSFR" read big-endian for comparison
export const FRAME_VERSION = 1;
export const HEADER_BYTES = 16;
export const POINT_BYTES = 15;

export function decodeFrame(buffer: ArrayBuffer): DecodedFrame {
  if (buffer.byteLength < HEADER_BYTES) {
    throw new Error("frame payload shorter than its header");
  }
  const view = new DataView(buffer);
  if (view.getUint32(0, false) !== FRAME_MAGIC) {
    throw new Error("bad frame magic");
  }
  const version = view.getUint32(4, true);
  if (version !== FRAME_VERSION) {
    throw new Error(`unsupported frame version ${version}`);
  }
  const countBig = view.getBigUint64(8, true);
  if (countBig > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new Error("frame point count overflows");
  }
  const count = Number(countBig);
  if (buffer.byteLength < HEADER_BYTES + count * POINT_BYTES) {
    throw new Error("truncated frame payload");
  }

  const positions = new Float32Array(count * 3);
  const colors = new Uint8Array(count * 3);
  for (let i = 0; i < count; i++) {
    const base = HEADER_BYTES + i * POINT_BYTES;
    positions[i * 3] = view.getFloat32(base, true);
    positions[i * 3 + 1] = view.getFloat32(base + 4, true);
    positions[i * 3 + 2] = view.getFloat32(base + 8, true);
    colors[i * 3] = view.getUint8(base + 12);
    colors[i * 3 + 1] = view.getUint8(base + 13);
    colors[i * 3 + 2] = view.getUint8(base + 14);
  }
  return { count, positions, colors };
}

/** Unpack the preview's base64 label bitset (MSB-first bits) to 0/1 bytes. */
export function decodeLabelBitset(base64: string, count: number): Uint8Array {
  const raw = atob(base64);
  const labels = new Uint8Array(count);
  for (let i = 0; i < count; i++) {
    const byte = raw.charCodeAt(i >> 3);
    labels[i] = (byte >> (7 - (i & 7))) & 1;
  }
  return labels;
}

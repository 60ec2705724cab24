/**
 * SALM binary raster codec (little-endian):
 *   "SALM" | u8 version=1 | u8 flags (bit0: depth hint) | u16 reserved |
 *   u32 height | u32 width | [u8 depth] | height*width float32 row-major
 */

export interface SalienceRaster {
  height: number;
  width: number;
  values: Float32Array; // row-major, length height*width
  depthHint?: number;
}

const MAGIC = 'SALM';
const VERSION = 1;

export function encodeSalm(raster: SalienceRaster): Buffer {
  const { height, width, values, depthHint } = raster;
  if (values.length !== height * width) {
    throw new Error(`payload length mismatch: ${values.length} != ${height}x${width}`);
  }
  const headerSize = depthHint === undefined ? 16 : 17;
  const buf = Buffer.alloc(headerSize + values.length * 4);
  buf.write(MAGIC, 0, 'ascii');
  buf.writeUInt8(VERSION, 4);
  buf.writeUInt8(depthHint === undefined ? 0 : 1, 5);
  buf.writeUInt16LE(0, 6);
  buf.writeUInt32LE(height, 8);
  buf.writeUInt32LE(width, 12);
  let offset = 16;
  if (depthHint !== undefined) {
    buf.writeUInt8(depthHint, 16);
    offset = 17;
  }
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], offset + i * 4);
  }
  return buf;
}

export function decodeSalm(buf: Buffer): SalienceRaster {
  if (buf.length < 16 || buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error('not a SALM buffer');
  }
  const version = buf.readUInt8(4);
  if (version !== VERSION) {
    throw new Error(`unsupported SALM version ${version}`);
  }
  const flags = buf.readUInt8(5);
  const height = buf.readUInt32LE(8);
  const width = buf.readUInt32LE(12);
  let offset = 16;
  let depthHint: number | undefined;
  if (flags & 1) {
    depthHint = buf.readUInt8(16);
    offset = 17;
  }
  const expected = height * width * 4;
  if (buf.length - offset !== expected) {
    throw new Error(`payload length mismatch: expected ${expected}, got ${buf.length - offset}`);
  }
  const values = new Float32Array(height * width);
  for (let i = 0; i < values.length; i++) {
    values[i] = buf.readFloatLE(offset + i * 4);
  }
  return { height, width, values, depthHint };
}

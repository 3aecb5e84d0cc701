import { readFileSync, writeFileSync } from 'fs';
import { InputError } from './errors.js';

const MAGIC = Buffer.from('\x93NUMPY', 'latin1');

/**
 * Serialize a float32 tensor as NPY v1.0, little-endian, C-order.
 *
 * The header is the Python-literal dict the downstream reader expects,
 * padded so the payload starts on a 64-byte boundary.
 */
export function npyBytes(shape: number[], data: Float32Array): Buffer {
  const count = shape.reduce((a, b) => a * b, 1);
  if (shape.some((s) => !Number.isInteger(s) || s <= 0)) {
    throw new InputError(`invalid shape [${shape}]`);
  }
  if (data.length !== count) {
    throw new InputError(`shape [${shape}] needs ${count} values, got ${data.length}`);
  }
  const shapeRepr = `(${shape.join(', ')}${shape.length === 1 ? ',' : ''})`;
  let body = `{'descr': '<f4', 'fortran_order': False, 'shape': ${shapeRepr}, }`;
  const pad = 64 - ((MAGIC.length + 2 + 2 + body.length + 1) % 64);
  body += ' '.repeat(pad % 64) + '\n';

  const header = Buffer.alloc(MAGIC.length + 2 + 2 + body.length);
  MAGIC.copy(header, 0);
  header[6] = 1;
  header[7] = 0;
  header.writeUInt16LE(body.length, 8);
  header.write(body, 10, 'latin1');

  const payload = Buffer.alloc(data.length * 4);
  for (let i = 0; i < data.length; i++) {
    payload.writeFloatLE(data[i], i * 4);
  }
  return Buffer.concat([header, payload]);
}

export function writeNpy(path: string, shape: number[], data: Float32Array): void {
  writeFileSync(path, npyBytes(shape, data));
}

export interface NpyTensor {
  shape: number[];
  data: Float32Array;
}

/** Read back a file produced by writeNpy. Rejects anything off-contract. */
export function readNpy(path: string): NpyTensor {
  const buf = readFileSync(path);
  if (buf.length < 10 || !buf.subarray(0, 6).equals(MAGIC)) {
    throw new InputError(`${path}: not an NPY file (bad magic)`);
  }
  if (buf[6] !== 1 || buf[7] !== 0) {
    throw new InputError(`${path}: unsupported NPY version ${buf[6]}.${buf[7]}, require 1.0`);
  }
  const headerLen = buf.readUInt16LE(8);
  const header = buf.subarray(10, 10 + headerLen).toString('latin1');
  const m = header.match(
    /^\{'descr': '([^']*)', 'fortran_order': (True|False), 'shape': \(([\d, ]*)\), \}\s*$/,
  );
  if (!m) {
    throw new InputError(`${path}: malformed NPY header`);
  }
  if (m[1] !== '<f4') {
    throw new InputError(`${path}: dtype descriptor '${m[1]}' not allowed, require '<f4'`);
  }
  if (m[2] !== 'False') {
    throw new InputError(`${path}: fortran_order must be False`);
  }
  const shape = m[3].split(',').map((s) => s.trim()).filter((s) => s.length > 0)
    .map((s) => parseInt(s, 10));
  const count = shape.reduce((a, b) => a * b, 1);
  const start = 10 + headerLen;
  if (buf.length !== start + count * 4) {
    throw new InputError(`${path}: payload does not match header shape (${shape})`);
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(start + i * 4);
  }
  return { shape, data };
}

/**
 * RML archive -> AMCD conversion. Frames are copied bit-exactly (raw f32
 * payloads, normalized to little-endian); all filtering and normalization is
 * left to the consumer so synthetic and real data share one preprocessing
 * path.
 */

import * as fs from 'fs';

import { AmcdFrame, CLASS_INDEX, CLASS_NAMES, FRAME_LEN, encodeAmcd } from './amcd';
import { PickleError, PyDict, PyNdArray, PyTuple, asString, loads } from './pickle';

export class IntegrityError extends Error {}

export interface ArchiveEntry {
  modulation: string;
  label: number;
  snrDb: number;
  count: number;
  /** per-frame little-endian f32 payload, count * 2 * T * 4 bytes */
  data: Uint8Array;
}

export interface ConvertSummary {
  nFrames: number;
  perClass: Map<string, number>;
  perSnr: Map<number, number>;
}

function toLittleEndian(data: Uint8Array, byteorder: string, itemSize: number): Uint8Array {
  if (byteorder !== '>') return data;
  const swapped = Uint8Array.from(data);
  for (let base = 0; base < swapped.length; base += itemSize) {
    for (let i = 0, j = itemSize - 1; i < j; i++, j--) {
      const tmp = swapped[base + i];
      swapped[base + i] = swapped[base + j];
      swapped[base + j] = tmp;
    }
  }
  return swapped;
}

export function parseArchive(buf: Buffer): ArchiveEntry[] {
  let root;
  try {
    root = loads(buf);
  } catch (err) {
    if (err instanceof PickleError) {
      throw new IntegrityError(`cannot parse archive: ${err.message}`);
    }
    throw err;
  }
  if (!(root instanceof PyDict)) {
    throw new IntegrityError('archive root is not a dict');
  }

  const entries: ArchiveEntry[] = [];
  for (const [key, value] of root.entries) {
    if (!(key instanceof PyTuple) || key.items.length !== 2) {
      throw new IntegrityError('archive key is not a (modulation, snr) pair');
    }
    const modulation = asString(key.items[0]);
    const snrDb = key.items[1];
    if (typeof snrDb !== 'number' || !Number.isInteger(snrDb)) {
      throw new IntegrityError(`non-integer SNR key for ${modulation}`);
    }
    const label = CLASS_INDEX.get(modulation);
    if (label === undefined) {
      throw new IntegrityError(
        `unknown modulation ${JSON.stringify(modulation)}; expected one of ${CLASS_NAMES.join(', ')}`
      );
    }
    if (!(value instanceof PyNdArray)) {
      throw new IntegrityError(`value for (${modulation}, ${snrDb}) is not an ndarray`);
    }
    if (value.shape.length !== 3 || value.shape[1] !== 2 || value.shape[2] !== FRAME_LEN) {
      throw new IntegrityError(
        `(${modulation}, ${snrDb}) has shape [${value.shape.join(', ')}], expected [n, 2, ${FRAME_LEN}]`
      );
    }
    if (value.fortranOrder) {
      throw new IntegrityError(`(${modulation}, ${snrDb}) is Fortran-ordered; expected C order`);
    }
    const dtype = value.dtype;
    if (dtype === null || dtype.descr !== 'f4') {
      throw new IntegrityError(
        `(${modulation}, ${snrDb}) has dtype ${dtype ? dtype.descr : 'none'}, expected f4`
      );
    }
    const count = value.shape[0];
    const expectedBytes = count * 2 * FRAME_LEN * 4;
    if (value.data.length !== expectedBytes) {
      throw new IntegrityError(
        `(${modulation}, ${snrDb}) carries ${value.data.length} bytes, expected ${expectedBytes}`
      );
    }
    entries.push({
      modulation,
      label,
      snrDb,
      count,
      data: toLittleEndian(value.data, dtype.byteorder, dtype.itemSize),
    });
  }
  entries.sort((a, b) => a.label - b.label || a.snrDb - b.snrDb);
  return entries;
}

export function entriesToFrames(entries: ArchiveEntry[]): AmcdFrame[] {
  const frames: AmcdFrame[] = [];
  const payload = 2 * FRAME_LEN * 4;
  for (const entry of entries) {
    for (let i = 0; i < entry.count; i++) {
      frames.push({
        label: entry.label,
        snrDb: entry.snrDb,
        data: entry.data.subarray(i * payload, (i + 1) * payload),
      });
    }
  }
  return frames;
}

export function convert(inPath: string, outPath: string): ConvertSummary {
  const entries = parseArchive(fs.readFileSync(inPath));
  const frames = entriesToFrames(entries);
  fs.writeFileSync(outPath, encodeAmcd(frames));

  const perClass = new Map<string, number>();
  const perSnr = new Map<number, number>();
  for (const entry of entries) {
    perClass.set(entry.modulation, (perClass.get(entry.modulation) ?? 0) + entry.count);
    perSnr.set(entry.snrDb, (perSnr.get(entry.snrDb) ?? 0) + entry.count);
  }
  return { nFrames: frames.length, perClass, perSnr };
}

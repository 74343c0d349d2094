/**
 * AMCD v1 binary dataset format, shared with the classifier package:
 *
 *   magic "AMCD" | u32 version | u64 n_frames | u32 T | u32 n_classes
 *   | per class: u16 name length, UTF-8 name
 *   | per frame: u16 label, i16 snr_db, 2*T little-endian f32 (I row, Q row)
 *
 * The class table is fixed to the 11 RML modulation names in alphabetical
 * order; labels index into it.
 */

export const AMCD_MAGIC = 'AMCD';
export const AMCD_VERSION = 1;
export const FRAME_LEN = 128;

export const CLASS_NAMES = [
  '8PSK', 'AM-DSB', 'AM-SSB', 'BPSK', 'CPFSK', 'GFSK',
  'PAM4', 'QAM16', 'QAM64', 'QPSK', 'WBFM',
] as const;

export const CLASS_INDEX: ReadonlyMap<string, number> = new Map(
  CLASS_NAMES.map((name, i) => [name, i])
);

export interface AmcdFrame {
  label: number;
  snrDb: number;
  /** 2*T little-endian f32 payload, I row then Q row */
  data: Uint8Array;
}

export function encodeAmcd(frames: AmcdFrame[], frameLen = FRAME_LEN): Buffer {
  const names = CLASS_NAMES.map((n) => Buffer.from(n, 'utf8'));
  const tableSize = names.reduce((total, n) => total + 2 + n.length, 0);
  const frameBytes = 4 + 2 * frameLen * 4;
  const buf = Buffer.alloc(4 + 4 + 8 + 4 + 4 + tableSize + frames.length * frameBytes);

  let off = 0;
  off += buf.write(AMCD_MAGIC, off, 'ascii');
  off = buf.writeUInt32LE(AMCD_VERSION, off);
  off = buf.writeBigUInt64LE(BigInt(frames.length), off);
  off = buf.writeUInt32LE(frameLen, off);
  off = buf.writeUInt32LE(CLASS_NAMES.length, off);
  for (const name of names) {
    off = buf.writeUInt16LE(name.length, off);
    off += name.copy(buf, off);
  }
  for (const frame of frames) {
    if (frame.data.length !== 2 * frameLen * 4) {
      throw new Error(`frame payload is ${frame.data.length} bytes, expected ${2 * frameLen * 4}`);
    }
    off = buf.writeUInt16LE(frame.label, off);
    off = buf.writeInt16LE(frame.snrDb, off);
    buf.set(frame.data, off);
    off += frame.data.length;
  }
  return buf;
}

export interface AmcdFile {
  frameLen: number;
  classNames: string[];
  frames: AmcdFrame[];
}

export function decodeAmcd(buf: Buffer): AmcdFile {
  if (buf.toString('ascii', 0, 4) !== AMCD_MAGIC) {
    throw new Error(`bad AMCD magic ${buf.toString('ascii', 0, 4)}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== AMCD_VERSION) {
    throw new Error(`unsupported AMCD version ${version}`);
  }
  const nFrames = Number(buf.readBigUInt64LE(8));
  const frameLen = buf.readUInt32LE(16);
  const nClasses = buf.readUInt32LE(20);
  let off = 24;
  const classNames: string[] = [];
  for (let i = 0; i < nClasses; i++) {
    const len = buf.readUInt16LE(off);
    off += 2;
    classNames.push(buf.toString('utf8', off, off + len));
    off += len;
  }
  const frames: AmcdFrame[] = [];
  const payload = 2 * frameLen * 4;
  for (let i = 0; i < nFrames; i++) {
    const label = buf.readUInt16LE(off);
    const snrDb = buf.readInt16LE(off + 2);
    off += 4;
    frames.push({ label, snrDb, data: Uint8Array.from(buf.subarray(off, off + payload)) });
    off += payload;
  }
  if (off !== buf.length) {
    throw new Error(`AMCD length mismatch: consumed ${off} of ${buf.length} bytes`);
  }
  return { frameLen, classNames, frames };
}

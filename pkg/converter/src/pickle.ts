/**
 * Minimal pickle reader for RML-style archives: a dict keyed by
 * (modulation, snr) tuples holding float32 numpy arrays.
 *
 * Covers the opcode set emitted by Python 2 cPickle protocol 2 (the original
 * RML2016.10a_dict.pkl) and by Python 3 re-pickles at protocols 2-5:
 * container/memo/int/string opcodes plus the numpy _reconstruct/REDUCE/BUILD
 * dance that carries ndarray shape, dtype, order, and raw data.
 */

export class PickleError extends Error {}

export class PyTuple {
  constructor(readonly items: PyValue[]) {}
}

export class PyGlobal {
  constructor(readonly module: string, readonly name: string) {}
}

export class PyDType {
  byteorder = '=';
  constructor(readonly descr: string) {}

  get itemSize(): number {
    const size = parseInt(this.descr.slice(1), 10);
    if (!Number.isFinite(size)) {
      throw new PickleError(`cannot determine item size of dtype ${this.descr}`);
    }
    return size;
  }
}

export class PyNdArray {
  shape: number[] = [];
  dtype: PyDType | null = null;
  fortranOrder = false;
  data: Uint8Array = new Uint8Array(0);
}

export class PyDict {
  readonly entries: Array<[PyValue, PyValue]> = [];

  set(key: PyValue, value: PyValue): void {
    this.entries.push([key, value]);
  }
}

export type PyValue =
  | null
  | boolean
  | number
  | string
  | Uint8Array
  | PyValue[]
  | PyTuple
  | PyDict
  | PyGlobal
  | PyDType
  | PyNdArray;

const MARK = Symbol('mark');
type StackItem = PyValue | typeof MARK;

export function asString(value: PyValue): string {
  if (typeof value === 'string') return value;
  if (value instanceof Uint8Array) return Buffer.from(value).toString('latin1');
  throw new PickleError(`expected a string-like value, got ${typeof value}`);
}

export function loads(buf: Buffer): PyValue {
  return new Unpickler(buf).load();
}

class Unpickler {
  private pos = 0;
  private readonly stack: StackItem[] = [];
  private readonly memo = new Map<number, PyValue>();

  constructor(private readonly buf: Buffer) {}

  load(): PyValue {
    for (;;) {
      const op = this.readByte();
      switch (op) {
        case 0x80: // PROTO
          this.readByte();
          break;
        case 0x95: // FRAME
          this.pos += 8;
          break;
        case 0x28: // MARK
          this.stack.push(MARK);
          break;
        case 0x2e: // STOP
          return this.popValue();
        case 0x30: // POP
          this.stack.pop();
          break;
        case 0x4e: // NONE
          this.stack.push(null);
          break;
        case 0x88: // NEWTRUE
          this.stack.push(true);
          break;
        case 0x89: // NEWFALSE
          this.stack.push(false);
          break;
        case 0x4b: // BININT1
          this.stack.push(this.readByte());
          break;
        case 0x4d: // BININT2
          this.stack.push(this.buf.readUInt16LE(this.mv(2)));
          break;
        case 0x4a: // BININT
          this.stack.push(this.buf.readInt32LE(this.mv(4)));
          break;
        case 0x8a: { // LONG1
          const n = this.readByte();
          let value = 0n;
          for (let i = n - 1; i >= 0; i--) {
            value = (value << 8n) | BigInt(this.buf[this.pos + i]);
          }
          if (n > 0 && this.buf[this.pos + n - 1] >= 0x80) {
            value -= 1n << BigInt(8 * n);
          }
          this.pos += n;
          this.stack.push(Number(value));
          break;
        }
        case 0x47: // BINFLOAT (big-endian double)
          this.stack.push(this.buf.readDoubleBE(this.mv(8)));
          break;
        case 0x55: // SHORT_BINSTRING (py2 str -> bytes)
          this.stack.push(this.readBytes(this.readByte()));
          break;
        case 0x54: // BINSTRING
          this.stack.push(this.readBytes(this.buf.readUInt32LE(this.mv(4))));
          break;
        case 0x43: // SHORT_BINBYTES
          this.stack.push(this.readBytes(this.readByte()));
          break;
        case 0x42: // BINBYTES
          this.stack.push(this.readBytes(this.buf.readUInt32LE(this.mv(4))));
          break;
        case 0x8e: // BINBYTES8
          this.stack.push(this.readBytes(this.readU64()));
          break;
        case 0x58: // BINUNICODE
          this.stack.push(this.readUtf8(this.buf.readUInt32LE(this.mv(4))));
          break;
        case 0x8c: // SHORT_BINUNICODE
          this.stack.push(this.readUtf8(this.readByte()));
          break;
        case 0x8d: // BINUNICODE8
          this.stack.push(this.readUtf8(this.readU64()));
          break;
        case 0x29: // EMPTY_TUPLE
          this.stack.push(new PyTuple([]));
          break;
        case 0x85: // TUPLE1
          this.stack.push(new PyTuple([this.popValue()]));
          break;
        case 0x86: { // TUPLE2
          const b = this.popValue();
          const a = this.popValue();
          this.stack.push(new PyTuple([a, b]));
          break;
        }
        case 0x87: { // TUPLE3
          const c = this.popValue();
          const b = this.popValue();
          const a = this.popValue();
          this.stack.push(new PyTuple([a, b, c]));
          break;
        }
        case 0x74: // TUPLE (to mark)
          this.stack.push(new PyTuple(this.popToMark()));
          break;
        case 0x5d: // EMPTY_LIST
          this.stack.push([]);
          break;
        case 0x61: { // APPEND
          const item = this.popValue();
          this.topList().push(item);
          break;
        }
        case 0x65: { // APPENDS
          const items = this.popToMark();
          this.topList().push(...items);
          break;
        }
        case 0x7d: // EMPTY_DICT
          this.stack.push(new PyDict());
          break;
        case 0x73: { // SETITEM
          const value = this.popValue();
          const key = this.popValue();
          this.topDict().set(key, value);
          break;
        }
        case 0x75: { // SETITEMS
          const items = this.popToMark();
          const dict = this.topDict();
          for (let i = 0; i < items.length; i += 2) {
            dict.set(items[i], items[i + 1]);
          }
          break;
        }
        case 0x71: // BINPUT
          this.memo.set(this.readByte(), this.topValue());
          break;
        case 0x72: // LONG_BINPUT
          this.memo.set(this.buf.readUInt32LE(this.mv(4)), this.topValue());
          break;
        case 0x94: // MEMOIZE
          this.memo.set(this.memo.size, this.topValue());
          break;
        case 0x68: // BINGET
          this.stack.push(this.memoGet(this.readByte()));
          break;
        case 0x6a: // LONG_BINGET
          this.stack.push(this.memoGet(this.buf.readUInt32LE(this.mv(4))));
          break;
        case 0x63: { // GLOBAL (text form)
          const module = this.readLine();
          const name = this.readLine();
          this.stack.push(new PyGlobal(module, name));
          break;
        }
        case 0x93: { // STACK_GLOBAL
          const name = asString(this.popValue());
          const module = asString(this.popValue());
          this.stack.push(new PyGlobal(module, name));
          break;
        }
        case 0x52: { // REDUCE
          const args = this.popValue();
          const func = this.popValue();
          this.stack.push(this.applyReduce(func, args));
          break;
        }
        case 0x62: { // BUILD
          const state = this.popValue();
          const obj = this.popValue();
          this.stack.push(this.applyBuild(obj, state));
          break;
        }
        default:
          throw new PickleError(
            `unsupported pickle opcode 0x${op.toString(16)} at offset ${this.pos - 1}`
          );
      }
    }
  }

  // ---- numpy-specific reconstruction -------------------------------------

  private applyReduce(func: PyValue, args: PyValue): PyValue {
    if (!(func instanceof PyGlobal)) {
      throw new PickleError('REDUCE callee is not a global reference');
    }
    const argItems = args instanceof PyTuple ? args.items : [];
    if (func.name === '_reconstruct' && func.module.includes('multiarray')) {
      return new PyNdArray();
    }
    if (func.module === 'numpy' && func.name === 'dtype') {
      return new PyDType(asString(argItems[0]));
    }
    if (func.module === '_codecs' && func.name === 'encode') {
      // Python 3 protocol-2 spelling of a bytes object
      const text = asString(argItems[0]);
      return Uint8Array.from(Buffer.from(text, 'latin1'));
    }
    throw new PickleError(`unsupported global ${func.module}.${func.name} in REDUCE`);
  }

  private applyBuild(obj: PyValue, state: PyValue): PyValue {
    if (obj instanceof PyNdArray) {
      if (!(state instanceof PyTuple) || state.items.length < 5) {
        throw new PickleError('unexpected ndarray BUILD state');
      }
      const [, shape, dtype, fortran, data] = state.items;
      if (!(shape instanceof PyTuple)) {
        throw new PickleError('ndarray shape is not a tuple');
      }
      obj.shape = shape.items.map((v) => {
        if (typeof v !== 'number') throw new PickleError('non-numeric ndarray dimension');
        return v;
      });
      if (!(dtype instanceof PyDType)) {
        throw new PickleError('ndarray BUILD state carries no dtype');
      }
      obj.dtype = dtype;
      obj.fortranOrder = fortran === true;
      if (!(data instanceof Uint8Array)) {
        throw new PickleError('ndarray data is not a byte string (object arrays unsupported)');
      }
      obj.data = data;
      return obj;
    }
    if (obj instanceof PyDType) {
      if (state instanceof PyTuple && state.items.length >= 2) {
        obj.byteorder = asString(state.items[1]);
      }
      return obj;
    }
    throw new PickleError('BUILD applied to an unsupported object');
  }

  // ---- low-level reads -----------------------------------------------------

  private readByte(): number {
    if (this.pos >= this.buf.length) {
      throw new PickleError('truncated pickle: ran past end of input');
    }
    return this.buf[this.pos++];
  }

  private mv(n: number): number {
    const at = this.pos;
    if (at + n > this.buf.length) {
      throw new PickleError('truncated pickle: ran past end of input');
    }
    this.pos += n;
    return at;
  }

  private readU64(): number {
    const value = this.buf.readBigUInt64LE(this.mv(8));
    if (value > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new PickleError('length field exceeds safe integer range');
    }
    return Number(value);
  }

  private readBytes(n: number): Uint8Array {
    return Uint8Array.from(this.buf.subarray(this.mv(n), this.pos));
  }

  private readUtf8(n: number): string {
    return this.buf.toString('utf8', this.mv(n), this.pos);
  }

  private readLine(): string {
    const end = this.buf.indexOf(0x0a, this.pos);
    if (end < 0) throw new PickleError('truncated pickle: unterminated GLOBAL line');
    const line = this.buf.toString('latin1', this.pos, end);
    this.pos = end + 1;
    return line;
  }

  // ---- stack helpers --------------------------------------------------------

  private popValue(): PyValue {
    const top = this.stack.pop();
    if (top === undefined || top === MARK) {
      throw new PickleError('pickle stack underflow');
    }
    return top;
  }

  private topValue(): PyValue {
    const top = this.stack[this.stack.length - 1];
    if (top === undefined || top === MARK) {
      throw new PickleError('memo of an empty stack');
    }
    return top;
  }

  private popToMark(): PyValue[] {
    const items: PyValue[] = [];
    for (;;) {
      const top = this.stack.pop();
      if (top === undefined) throw new PickleError('no MARK found on pickle stack');
      if (top === MARK) break;
      items.push(top);
    }
    return items.reverse();
  }

  private topList(): PyValue[] {
    const top = this.topValue();
    if (!Array.isArray(top)) throw new PickleError('APPEND target is not a list');
    return top;
  }

  private topDict(): PyDict {
    const top = this.topValue();
    if (!(top instanceof PyDict)) throw new PickleError('SETITEM target is not a dict');
    return top;
  }

  private memoGet(index: number): PyValue {
    const value = this.memo.get(index);
    if (value === undefined) throw new PickleError(`missing memo entry ${index}`);
    return value;
  }
}

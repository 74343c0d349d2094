#!/usr/bin/env python3
"""Regenerate the committed test fixtures.

Produces the same small archive dict in three pickle dialects:
  - fixture_py2_style.pkl : hand-assembled cPickle protocol-2 stream as
    Python 2 wrote the original archive (SHORT_BINSTRING/BINSTRING payloads,
    text-form GLOBAL opcodes, no memo entries)
  - fixture_py3_p2.pkl    : pickle.dumps(..., protocol=2) under Python 3
  - fixture_py3_p4.pkl    : pickle.dumps(..., protocol=4)
plus fixture_bigendian.pkl (>f4 arrays) and primary_sample.amcd (written by
the classifier package, for cross-implementation format checks).

Frame values follow a deterministic formula the TypeScript tests recompute:
    value = float32((label*1000 + snr*100 + frame*10 + row*5 + t) * 0.001)
"""

import pickle
import struct
import sys
from pathlib import Path

import numpy as np

FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"

CLASS_NAMES = ("8PSK", "AM-DSB", "AM-SSB", "BPSK", "CPFSK", "GFSK",
               "PAM4", "QAM16", "QAM64", "QPSK", "WBFM")

MODS = ("BPSK", "8PSK", "WBFM")
SNRS = (-20, 18)
N_PER_KEY = 3
T = 128


def frame_values(label: int, snr: int, frame: int) -> np.ndarray:
    rows = []
    for row in range(2):
        t = np.arange(T, dtype=np.float64)
        rows.append((label * 1000 + snr * 100 + frame * 10 + row * 5 + t) * 0.001)
    return np.stack(rows).astype("<f4")


def build_archive() -> dict:
    archive = {}
    for mod in MODS:
        label = CLASS_NAMES.index(mod)
        for snr in SNRS:
            archive[(mod, snr)] = np.stack(
                [frame_values(label, snr, i) for i in range(N_PER_KEY)]
            )
    return archive


# --- hand-assembled Python 2 cPickle protocol-2 stream ----------------------

def _short_binstring(raw: bytes) -> bytes:
    return b"U" + bytes([len(raw)]) + raw


def _binstring(raw: bytes) -> bytes:
    return b"T" + struct.pack("<I", len(raw)) + raw


def _binint(n: int) -> bytes:
    if 0 <= n < 256:
        return b"K" + bytes([n])
    if 0 <= n < 65536:
        return b"M" + struct.pack("<H", n)
    return b"J" + struct.pack("<i", n)


def _ndarray_py2(arr: np.ndarray) -> bytes:
    out = b"cnumpy.core.multiarray\n_reconstruct\ncnumpy\nndarray\n"
    out += _binint(0) + b"\x85" + _short_binstring(b"b") + b"\x87R"
    out += b"("  # ndarray BUILD state tuple
    out += _binint(1)
    out += b"(" + b"".join(_binint(d) for d in arr.shape) + b"t"
    out += b"cnumpy\ndtype\n" + _short_binstring(b"f4") + _binint(0) + _binint(1) + b"\x87R"
    out += b"(" + _binint(3) + _short_binstring(b"<") + b"NNN" + _binint(-1) + _binint(-1) + _binint(0) + b"tb"
    out += b"\x89"  # C order
    out += _binstring(arr.astype("<f4").tobytes())
    out += b"tb"
    return out


def py2_style_pickle(archive: dict) -> bytes:
    out = b"\x80\x02}("
    for (mod, snr), arr in archive.items():
        out += _short_binstring(mod.encode("ascii")) + _binint(snr) + b"\x86"
        out += _ndarray_py2(arr)
    return out + b"u."


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    archive = build_archive()

    py2_blob = py2_style_pickle(archive)
    # self-check: the stream must round-trip through Python's own unpickler
    # (latin1 is how Python 3 reads Python 2 str payloads, as with the real archive)
    decoded = pickle.loads(py2_blob, encoding="latin1")
    for key, arr in archive.items():
        assert np.array_equal(decoded[key], arr), key
    (FIXTURES / "fixture_py2_style.pkl").write_bytes(py2_blob)

    (FIXTURES / "fixture_py3_p2.pkl").write_bytes(pickle.dumps(archive, protocol=2))
    (FIXTURES / "fixture_py3_p4.pkl").write_bytes(pickle.dumps(archive, protocol=4))

    big = {key: arr.astype(">f4") for key, arr in archive.items()}
    (FIXTURES / "fixture_bigendian.pkl").write_bytes(pickle.dumps(big, protocol=2))

    try:
        from amcnet.data import write_dataset
        from amcnet.signals import SynthConfig, gen_dataset

        write_dataset(FIXTURES / "primary_sample.amcd", gen_dataset(1, SynthConfig(snr_grid_db=(0,)), seed=1))
    except ImportError:
        print("amcnet not importable; skipping primary_sample.amcd", file=sys.stderr)

    print(f"fixtures written to {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

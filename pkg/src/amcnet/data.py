"""AMCD dataset container plus the preprocessing applied before training.

AMCD v1 layout (little-endian):

    magic "AMCD" | u32 version | u64 n_frames | u32 T | u32 n_classes
    | per class: u16 name length, UTF-8 name
    | per frame: u16 label, i16 snr_db, 2*T f32 (I row then Q row)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DataError, FormatError, StratificationError
from .signals import CLASS_NAMES, IQFrame

DATASET_MAGIC = b"AMCD"
DATASET_VERSION = 1


def write_dataset(path, frames: Sequence[IQFrame], class_names: Sequence[str] = CLASS_NAMES):
    if not frames:
        raise DataError("refusing to write an empty dataset")
    frame_len = frames[0].iq.shape[1]
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IQII", DATASET_VERSION, len(frames), frame_len, len(class_names)))
        for name in class_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        for frame in frames:
            if frame.iq.shape != (2, frame_len):
                raise DataError(f"inconsistent frame shape {frame.iq.shape}")
            if not 0 <= frame.label < len(class_names):
                raise DataError(f"label {frame.label} outside class table")
            fh.write(struct.pack("<Hh", frame.label, frame.snr_db))
            fh.write(frame.iq.astype("<f4").tobytes())


def read_dataset(path) -> Tuple[List[IQFrame], List[str]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DATASET_MAGIC:
        raise FormatError(f"bad dataset magic {blob[:4]!r}")
    version, n_frames, frame_len, n_classes = struct.unpack_from("<IQII", blob, 4)
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    offset = 4 + struct.calcsize("<IQII")
    names = []
    for _ in range(n_classes):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        names.append(blob[offset : offset + name_len].decode("utf-8"))
        offset += name_len
    frame_bytes = 4 + 2 * frame_len * 4
    expected = offset + n_frames * frame_bytes
    if len(blob) != expected:
        raise FormatError(f"dataset length mismatch: {len(blob)} bytes, expected {expected}")
    frames = []
    for _ in range(n_frames):
        label, snr = struct.unpack_from("<Hh", blob, offset)
        if label >= n_classes:
            raise FormatError(f"frame label {label} outside class table of size {n_classes}")
        offset += 4
        iq = np.frombuffer(blob, dtype="<f4", count=2 * frame_len, offset=offset).reshape(2, frame_len)
        offset += 2 * frame_len * 4
        frames.append(IQFrame(iq=iq.copy(), label=label, snr_db=snr, class_name=names[label]))
    return frames, names


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.60
    val: float = 0.20
    test: float = 0.20
    seed: int = 0

    def __post_init__(self):
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise DataError("split fractions must sum to 1")


def filter_snr(frames: Sequence[IQFrame], lo_db: int, hi_db: int) -> List[IQFrame]:
    """Keep frames with lo <= snr <= hi, order preserved."""
    if lo_db > hi_db:
        raise DataError(f"filter_snr requires lo <= hi, got [{lo_db}, {hi_db}]")
    return [f for f in frames if lo_db <= f.snr_db <= hi_db]


def _largest_remainder(n: int, fractions: Sequence[float]) -> List[int]:
    exact = [n * f for f in fractions]
    counts = [int(x) for x in exact]
    remainders = [x - c for x, c in zip(exact, counts)]
    short = n - sum(counts)
    # ties broken by earlier split (train, val, test)
    for idx in sorted(range(len(fractions)), key=lambda i: -remainders[i])[:short]:
        counts[idx] += 1
    return counts


def stratified_split(frames: Sequence[IQFrame], spec: SplitSpec):
    """Per-(label, snr) largest-remainder split into train/val/test."""
    strata: dict = {}
    for idx, frame in enumerate(frames):
        strata.setdefault((frame.label, frame.snr_db), []).append(idx)

    rng = np.random.default_rng(spec.seed)
    splits: Tuple[List[int], List[int], List[int]] = ([], [], [])
    for key in sorted(strata):
        indices = strata[key]
        if len(indices) < 5:
            raise StratificationError(
                f"stratum (label={key[0]}, snr={key[1]}) has only {len(indices)} frames; need >= 5"
            )
        order = rng.permutation(len(indices))
        shuffled = [indices[i] for i in order]
        n_train, n_val, _ = _largest_remainder(len(indices), (spec.train, spec.val, spec.test))
        splits[0].extend(shuffled[:n_train])
        splits[1].extend(shuffled[n_train : n_train + n_val])
        splits[2].extend(shuffled[n_train + n_val :])
    return tuple([frames[i] for i in part] for part in splits)


def normalize_instance(frame: IQFrame) -> IQFrame:
    """Zero mean, unit variance over all 2*T values jointly (float64 output)."""
    x = frame.iq.astype(np.float64)
    if x.size <= 1:
        raise DataError("normalization needs more than one sample")
    # max() guard keeps renormalization a fixpoint; constant frames map to zero
    y = (x - x.mean()) / max(x.std(), 1e-8)
    return IQFrame(iq=y, label=frame.label, snr_db=frame.snr_db, class_name=frame.class_name)


def augment(frame: IQFrame, rng: np.random.Generator,
            probability: float = 0.3, noise_std: float = 0.02) -> IQFrame:
    """Train-time Gaussian jitter on all I/Q values, applied after normalization."""
    if rng.random() >= probability:
        return frame
    iq = frame.iq + rng.normal(0.0, noise_std, frame.iq.shape)
    return IQFrame(iq=iq, label=frame.label, snr_db=frame.snr_db, class_name=frame.class_name)


def frames_to_batch(frames: Sequence[IQFrame]):
    """Stack frames into (B, 2, T) float64 inputs and an int label vector."""
    x = np.stack([f.iq for f in frames]).astype(np.float64)
    y = np.array([f.label for f in frames], dtype=np.int64)
    return x, y

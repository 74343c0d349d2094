"""Synthetic I/Q frame generation for the 11 RML-style modulation classes.

Digital classes draw i.i.d. symbols from unit-average-power constellations
and shape them with a root-raised-cosine pulse; CPFSK/GFSK integrate a
(Gaussian-filtered) NRZ stream into a constant-modulus phase trajectory;
the analog classes modulate a band-limited three-tone message. Frames are
normalized to unit average power before calibrated AWGN is added, so the
requested SNR holds exactly per frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

CLASS_NAMES = (
    "8PSK", "AM-DSB", "AM-SSB", "BPSK", "CPFSK", "GFSK",
    "PAM4", "QAM16", "QAM64", "QPSK", "WBFM",
)
CLASS_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}


def _psk(points: int, offset: float = 0.0) -> np.ndarray:
    k = np.arange(points)
    return np.exp(1j * (2 * np.pi * k / points + offset))


def _qam(side: int) -> np.ndarray:
    levels = np.arange(-(side - 1), side, 2, dtype=np.float64)
    grid = levels[:, None] + 1j * levels[None, :]
    flat = grid.reshape(-1)
    return flat / np.sqrt(np.mean(np.abs(flat) ** 2))


CONSTELLATIONS = {
    "BPSK": np.array([-1.0 + 0j, 1.0 + 0j]),
    "QPSK": _psk(4, offset=np.pi / 4),
    "8PSK": _psk(8),
    "PAM4": np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(5.0) + 0j,
    "QAM16": _qam(4),
    "QAM64": _qam(8),
}

FSK_CLASSES = ("CPFSK", "GFSK")
ANALOG_CLASSES = ("AM-DSB", "AM-SSB", "WBFM")


@dataclass(frozen=True)
class SynthConfig:
    frame_len: int = 128
    samples_per_symbol: int = 8
    rrc_rolloff: float = 0.35
    rrc_span: int = 6  # symbols
    cfo_max: float = 0.01  # uniform +/- cycles/sample
    random_phase: bool = True
    gfsk_bt: float = 0.35
    fsk_mod_index: float = 0.5
    snr_grid_db: tuple = tuple(range(-6, 19, 2))

    def __post_init__(self):
        if self.samples_per_symbol < 2:
            raise ValueError("samples_per_symbol must be >= 2")
        if not 0.0 < self.rrc_rolloff < 1.0:
            raise ValueError("rrc_rolloff must lie in (0, 1)")


@dataclass
class IQFrame:
    iq: np.ndarray  # (2, T); row 0 in-phase, row 1 quadrature
    label: int
    snr_db: int
    class_name: str


def rrc_taps(sps: int, rolloff: float, span: int) -> np.ndarray:
    """Root-raised-cosine taps, unit energy, span*sps + 1 long."""
    n = span * sps
    t = np.arange(-(n // 2), n // 2 + 1, dtype=np.float64) / sps
    beta = rolloff
    taps = np.empty_like(t)
    singular = np.isclose(np.abs(t), 1.0 / (4.0 * beta))
    zero = t == 0.0
    regular = ~(singular | zero)
    tr = t[regular]
    taps[regular] = (
        np.sin(np.pi * tr * (1 - beta)) + 4 * beta * tr * np.cos(np.pi * tr * (1 + beta))
    ) / (np.pi * tr * (1 - (4 * beta * tr) ** 2))
    taps[zero] = 1.0 + beta * (4.0 / np.pi - 1.0)
    taps[singular] = (beta / np.sqrt(2.0)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
    )
    return taps / np.sqrt(np.sum(taps ** 2))


def _gaussian_taps(sps: int, bt: float, span: int = 4) -> np.ndarray:
    """Gaussian pre-filter for GFSK, unit DC gain."""
    n = span * sps
    t = np.arange(-(n // 2), n // 2 + 1, dtype=np.float64)
    b = bt / sps  # bandwidth in cycles/sample
    taps = np.exp(-2.0 * (np.pi * b * t) ** 2 / np.log(2.0))
    return taps / taps.sum()


def _linear_frame(symbols: np.ndarray, sps: int, taps: np.ndarray, frame_len: int) -> np.ndarray:
    """Pulse-shape and cut a steady-state window whose symbol centers sit
    at multiples of sps from the frame start."""
    up = np.zeros(len(symbols) * sps, dtype=np.complex128)
    up[::sps] = symbols
    shaped = np.convolve(up, taps)
    start = len(taps) - 1  # full pulse overlap from the left
    return shaped[start : start + frame_len]


def _fsk_frame(rng, cfg: SynthConfig, gaussian: bool) -> np.ndarray:
    sps = cfg.samples_per_symbol
    n_sym = cfg.frame_len // sps + 12
    bits = rng.integers(0, 2, n_sym) * 2.0 - 1.0
    nrz = np.repeat(bits, sps)
    if gaussian:
        g = _gaussian_taps(sps, cfg.gfsk_bt)
        nrz = np.convolve(nrz, g)
    phase = np.cumsum(nrz) * (np.pi * cfg.fsk_mod_index / sps)
    x = np.exp(1j * phase)
    start = 4 * sps  # past the filter/integration transient
    return x[start : start + cfg.frame_len]


def _tone_message(rng, n: int):
    """Band-limited audio stand-in: three random tones below 0.1 cycles/sample.

    Returns (real message, analytic message), both peak-normalized.
    """
    freqs = rng.uniform(0.005, 0.095, 3)
    amps = rng.uniform(0.5, 1.0, 3)
    phases = rng.uniform(0.0, 2 * np.pi, 3)
    t = np.arange(n)
    analytic = (amps[:, None] * np.exp(1j * (2 * np.pi * freqs[:, None] * t + phases[:, None]))).sum(axis=0)
    peak = np.max(np.abs(analytic.real))
    if peak < 1e-12:
        peak = 1.0
    return analytic.real / peak, analytic / peak


def _analog_frame(class_name: str, rng, cfg: SynthConfig) -> np.ndarray:
    message, analytic = _tone_message(rng, cfg.frame_len)
    if class_name == "AM-DSB":
        return (1.0 + 0.5 * message).astype(np.complex128)
    if class_name == "AM-SSB":
        return analytic
    # WBFM: peak frequency deviation 0.08 cycles/sample
    phase = 2 * np.pi * 0.08 * np.cumsum(message)
    return np.exp(1j * phase)


def gen_frame(class_name: str, snr_db: Optional[int], cfg: SynthConfig,
              rng: np.random.Generator) -> IQFrame:
    """One labeled frame; ``snr_db=None`` disables the AWGN stage."""
    if class_name not in CLASS_INDEX:
        raise ValueError(f"unknown class {class_name!r}; expected one of {CLASS_NAMES}")

    if class_name in CONSTELLATIONS:
        sps = cfg.samples_per_symbol
        taps = rrc_taps(sps, cfg.rrc_rolloff, cfg.rrc_span)
        n_sym = cfg.frame_len // sps + cfg.rrc_span + 2
        points = CONSTELLATIONS[class_name]
        symbols = points[rng.integers(0, len(points), n_sym)]
        x = _linear_frame(symbols, sps, taps, cfg.frame_len)
    elif class_name in FSK_CLASSES:
        x = _fsk_frame(rng, cfg, gaussian=(class_name == "GFSK"))
    else:
        x = _analog_frame(class_name, rng, cfg)

    if cfg.cfo_max > 0.0 or cfg.random_phase:
        freq = rng.uniform(-cfg.cfo_max, cfg.cfo_max) if cfg.cfo_max > 0.0 else 0.0
        phase = rng.uniform(0.0, 2 * np.pi) if cfg.random_phase else 0.0
        x = x * np.exp(1j * (2 * np.pi * freq * np.arange(cfg.frame_len) + phase))

    power = np.mean(np.abs(x) ** 2)
    x = x / np.sqrt(power)

    if snr_db is not None:
        noise_var = 10.0 ** (-snr_db / 10.0)
        scale = math.sqrt(noise_var / 2.0)
        x = x + scale * (rng.standard_normal(cfg.frame_len) + 1j * rng.standard_normal(cfg.frame_len))

    iq = np.stack([x.real, x.imag]).astype(np.float32)
    return IQFrame(iq=iq, label=CLASS_INDEX[class_name],
                   snr_db=0 if snr_db is None else int(snr_db), class_name=class_name)


def gen_dataset(n_per_class_per_snr: int, cfg: SynthConfig, seed: int = 0) -> List[IQFrame]:
    """Balanced frames over class x SNR grid, deterministic per-frame streams."""
    if n_per_class_per_snr < 1:
        raise ValueError("n_per_class_per_snr must be >= 1")
    total = len(CLASS_NAMES) * len(cfg.snr_grid_db) * n_per_class_per_snr
    streams = np.random.SeedSequence(seed).spawn(total)
    frames: List[IQFrame] = []
    idx = 0
    for class_name in CLASS_NAMES:
        for snr in cfg.snr_grid_db:
            for _ in range(n_per_class_per_snr):
                frames.append(gen_frame(class_name, snr, cfg, np.random.default_rng(streams[idx])))
                idx += 1
    return frames

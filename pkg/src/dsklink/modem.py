"""ODDM waveform synthesis and analysis, plus PAPR measurement.

The modulator takes the normalized N-point IFFT of each multicarrier symbol
and lays the resulting chips on a staircase: chip (n, l) sits at time index
l + n*M at the chip rate.  Pulse shaping is sample-wise with either a unit
sample per chip (``delta``, one sample per delay bin, used by the bit-exact
grid-domain oracles) or a truncated unit-energy square-root raised cosine at
an integer oversampling factor (used by the PAPR study).

The system-level description calls for a square-root Nyquist pulse while the
waveform experiments are reported with a raised cosine; the square-root
variant is implemented here so transmit and matched filter compose to a
Nyquist pulse.  Its truncation to 2Q symbol intervals makes the rrc
round-trip approximate; the residual is measured in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .ddgrid import FrameParams, check_frame


@dataclass(frozen=True)
class PulseConfig:
    """Chip pulse: ``delta`` (critically sampled) or ``rrc``.

    ``oversample`` is the number of output samples per delay bin; the delta
    pulse forces it to 1.  ``half_len_Q`` truncates the rrc pulse to
    [-Q, +Q] symbol intervals (2Q must stay well below M).
    """

    kind: str = "delta"
    oversample: int = 1
    rolloff: float = 0.1
    half_len_Q: int = 8

    def __post_init__(self):
        if self.kind not in ("delta", "rrc"):
            raise ValueError(f"unknown pulse kind: {self.kind!r}")
        if self.kind == "delta" and self.oversample != 1:
            raise ValueError("delta pulse is critically sampled (oversample must be 1)")
        if self.oversample < 1:
            raise ValueError("oversample must be >= 1")
        if not (0.0 <= self.rolloff <= 1.0):
            raise ValueError("rolloff must lie in [0, 1]")
        if self.kind == "rrc" and self.half_len_Q < 1:
            raise ValueError("half_len_Q must be >= 1 for rrc")


@dataclass
class Waveform:
    """Sampled baseband waveform at ``oversample`` times the chip rate.

    ``lead`` samples precede the frame's t=0 (transmit pulse tail);
    ``frame_len`` is the sample count of the nominal frame duration.
    """

    samples: np.ndarray
    oversample: int = 1
    lead: int = 0
    frame_len: int = field(default=0)

    def __post_init__(self):
        if self.frame_len == 0:
            self.frame_len = len(self.samples)

    def frame_window(self) -> np.ndarray:
        """Samples within the nominal frame duration (pulse tails excluded)."""
        return self.samples[self.lead : self.lead + self.frame_len]


def rrc_taps(oversample: int, rolloff: float, half_len_Q: int) -> np.ndarray:
    """Truncated square-root raised cosine, unit energy, 2*Q*L + 1 taps.

    Time axis is t/tau in [-Q, Q] sampled every 1/L.  Unit-energy scaling
    keeps noise statistics unchanged through the matched filter.
    """
    L, a, Q = oversample, rolloff, half_len_Q
    t = np.arange(-Q * L, Q * L + 1) / L
    taps = np.empty(t.size)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[i] = 1.0 - a + 4.0 * a / np.pi
        elif a > 0 and abs(abs(ti) - 1.0 / (4.0 * a)) < 1e-12:
            taps[i] = (a / np.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * a))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * a))
            )
        else:
            num = np.sin(np.pi * ti * (1.0 - a)) + 4.0 * a * ti * np.cos(np.pi * ti * (1.0 + a))
            den = np.pi * ti * (1.0 - (4.0 * a * ti) ** 2)
            taps[i] = num / den
    return taps / np.linalg.norm(taps)


def _chips(x: np.ndarray, params: FrameParams) -> np.ndarray:
    """Normalized IFFT along subcarriers, serialized with chip q = l + n*M."""
    xdot = np.fft.ifft(x, axis=0) * np.sqrt(params.N)  # xdot[n, l]
    return xdot.reshape(-1)  # C order: index n*M + l


def modulate(x: np.ndarray, params: FrameParams, pulse: PulseConfig) -> Waveform:
    """Synthesize the baseband waveform from an N x M delay-Doppler grid."""
    x = check_frame(x, params)
    chips = _chips(x, params)
    L = pulse.oversample
    if pulse.kind == "delta":
        return Waveform(samples=chips, oversample=1, lead=0, frame_len=chips.size)
    taps = rrc_taps(L, pulse.rolloff, pulse.half_len_Q)
    up = np.zeros(chips.size * L, dtype=np.complex128)
    up[::L] = chips
    samples = fftconvolve(up, taps)  # length N*M*L + 2*Q*L
    return Waveform(samples=samples, oversample=L, lead=pulse.half_len_Q * L, frame_len=chips.size * L)


def demodulate(r: Waveform, params: FrameParams, pulse: PulseConfig) -> np.ndarray:
    """Matched filter at each chip instant, then normalized FFT back to the grid."""
    n_chips = params.N * params.M
    L = pulse.oversample
    if r.oversample != L:
        raise ValueError(f"shape mismatch: waveform oversample {r.oversample} != pulse {L}")
    if pulse.kind == "delta":
        if len(r.samples) < n_chips:
            raise ValueError(f"shape mismatch: need {n_chips} samples, got {len(r.samples)}")
        ydot = r.samples[:n_chips].reshape(params.N, params.M)
    else:
        taps = rrc_taps(L, pulse.rolloff, pulse.half_len_Q)
        QL = pulse.half_len_Q * L
        needed = r.lead + (n_chips - 1) * L + QL + 1
        s = r.samples
        if len(s) < needed:
            s = np.concatenate([s, np.zeros(needed - len(s), dtype=np.complex128)])
        mf = fftconvolve(s, np.conj(taps[::-1]))
        start = r.lead + QL
        ydot = mf[start : start + n_chips * L : L].reshape(params.N, params.M)
    return np.fft.fft(ydot, axis=0) / np.sqrt(params.N)


def papr_db(wave: Waveform | np.ndarray) -> float:
    """Peak-to-average power ratio in dB over the nominal frame window."""
    s = wave.frame_window() if isinstance(wave, Waveform) else np.asarray(wave).ravel()
    p = np.abs(s) ** 2
    mean = p.mean() if p.size else 0.0
    if mean == 0.0:
        raise ValueError("zero-energy input")
    return float(10.0 * np.log10(p.max() / mean))

"""Doubly-dispersive on-grid channels: generation, application, noise.

A channel is a small set of taps (complex gain, integer delay index,
integer Doppler index).  The grid-domain application implements the
delay-Doppler input-output relation directly; the time-domain application
delays and Doppler-rotates the sampled waveform, providing the independent
route used to cross-validate the grid path.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ddgrid import FrameParams, check_frame
from .modem import Waveform


@dataclass(frozen=True)
class EsddChannel:
    """On-grid taps for one user: gains h_p, delays l_p in [0, l_max],
    Doppler indices k_p in [-k_max, k_max].  (l_p, k_p) pairs are distinct."""

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray

    @property
    def P(self) -> int:
        return len(self.gains)


@dataclass(frozen=True)
class NoiseSpec:
    """Linear SNR rho and the per-entry noise variance 1/(N_b * rho)."""

    snr_rho: float
    sigma2: float

    @classmethod
    def from_snr_db(cls, snr_db: float, params: FrameParams) -> "NoiseSpec":
        rho = 10.0 ** (snr_db / 10.0)
        return cls(snr_rho=rho, sigma2=1.0 / (params.N_b * rho))


def draw_channel(rng: np.random.Generator, P: int, l_max: int, k_max: int) -> EsddChannel:
    """Draw P taps with distinct (delay, Doppler) pairs and CN(0, 1/P) gains.

    Delay indices are uniform on [0, l_max], Doppler indices uniform on
    [-k_max, k_max]; sampling the flattened (l, k) grid without replacement
    matches resampling independent draws until all pairs are distinct.
    """
    if P < 1:
        raise ValueError(f"need at least one tap, got P={P}")
    n_cells = (l_max + 1) * (2 * k_max + 1)
    if P > n_cells:
        raise ValueError(f"infeasible taps: P={P} exceeds {n_cells} distinct (delay, Doppler) cells")
    cells = rng.choice(n_cells, size=P, replace=False)
    delays = cells // (2 * k_max + 1)
    dopplers = cells % (2 * k_max + 1) - k_max
    gains = (rng.standard_normal(P) + 1j * rng.standard_normal(P)) * np.sqrt(0.5 / P)
    return EsddChannel(gains=gains, delays=delays.astype(np.int64), dopplers=dopplers.astype(np.int64))


def apply_dd(frames: list[np.ndarray], chans: list[EsddChannel], params: FrameParams) -> np.ndarray:
    """Noiseless received grid: superposition of every user's taps.

    Each tap circularly shifts its user's frame by k_p along subcarriers,
    delays it by l_p symbols, and applies the gain times the Doppler
    progression exp(j*2*pi*k_p*l/(N*M)).  Only the first M_prime source
    symbols contribute (the symbol-activity gate).
    """
    if len(frames) != len(chans):
        raise ValueError(f"list length mismatch: {len(frames)} frames vs {len(chans)} channels")
    y = np.zeros((params.N, params.M), dtype=np.complex128)
    for x, chan in zip(frames, chans):
        x = check_frame(x, params)
        for h, l_p, k_p in zip(chan.gains, chan.delays, chan.dopplers):
            _add_tap(y, x, h, int(l_p), int(k_p), params)
    return y


def _add_tap(y: np.ndarray, x: np.ndarray, h: complex, l_p: int, k_p: int, params: FrameParams) -> None:
    Mp = params.M_prime
    shifted = np.roll(x[:, :Mp], k_p, axis=0)  # row k holds x[(k - k_p) mod N]
    target = np.arange(l_p, l_p + Mp)
    phase = np.exp(2j * np.pi * k_p * target / (params.N * params.M))
    y[:, l_p : l_p + Mp] += h * phase[None, :] * shifted


def apply_time(s: Waveform, chan: EsddChannel, params: FrameParams) -> Waveform:
    """Delay/Doppler-shift the sampled waveform: r[q] = sum_p h_p e^{j2pi k_p t_q / (NML)} s[q - l_p L].

    The Doppler phase is referenced to the frame's t=0 (``lead`` samples into
    the buffer).  Output is extended by the largest delay so no energy is
    dropped.
    """
    L = s.oversample
    NML = params.N * params.M * L
    max_delay = int(chan.delays.max()) if chan.P else 0
    r = np.zeros(len(s.samples) + max_delay * L, dtype=np.complex128)
    for h, l_p, k_p in zip(chan.gains, chan.delays, chan.dopplers):
        q = np.arange(int(l_p) * L, int(l_p) * L + len(s.samples))
        r[q] += h * np.exp(2j * np.pi * int(k_p) * (q - s.lead) / NML) * s.samples
    return Waveform(samples=r, oversample=L, lead=s.lead, frame_len=s.frame_len)


def add_awgn(y: np.ndarray, noise: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. CN(0, sigma2) to every grid entry, zero-padding region
    included: the receiver observes noise everywhere."""
    if noise.sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    if noise.sigma2 == 0.0:
        return y.copy()
    w = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    return y + np.sqrt(noise.sigma2 / 2.0) * w


def unit_noise(shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    """CN(0, 1) grid, to be scaled by sigma for common-random-number sweeps."""
    w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return w * np.sqrt(0.5)


def perturb_csi(chan: EsddChannel, sigma_e2: float, rng: np.random.Generator) -> EsddChannel:
    """Gain estimation error: each gain gets independent CN(0, sigma_e2);
    delay/Doppler indices are assumed known."""
    if sigma_e2 < 0:
        raise ValueError("sigma_e2 must be non-negative")
    if sigma_e2 == 0.0:
        return chan
    d = rng.standard_normal(chan.P) + 1j * rng.standard_normal(chan.P)
    return replace(chan, gains=chan.gains + np.sqrt(sigma_e2 / 2.0) * d)

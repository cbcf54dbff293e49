"""Bit-to-grid mappers: shift-keying mappers and the BPSK comparison baselines.

A DSK symbol stream is one subcarrier index per data-bearing multicarrier
symbol; each index selects either the position of a one-hot column or the
circular shift of a basis sequence.  The BPSK mappers build the spectral-
efficiency-matched baselines (interleaved single-user, FDMA-style multi-user)
used by the linear-detector comparisons.
"""
from __future__ import annotations

import numpy as np

from .ddgrid import FrameParams, empty_frame
from .seqs import ZcBasis


def split_bits(bits: np.ndarray, params: FrameParams) -> np.ndarray:
    """Map a bit block of length M_prime * N_b to per-symbol indices, MSB first.

    Bit pair (0,1) maps to index 1 and (1,0) to index 2.
    """
    bits = np.asarray(bits).ravel()
    expected = params.M_prime * params.N_b
    if bits.size != expected:
        raise ValueError(f"length mismatch: expected {expected} bits, got {bits.size}")
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be 0/1 valued")
    groups = bits.reshape(params.M_prime, params.N_b).astype(np.int64)
    weights = 1 << np.arange(params.N_b - 1, -1, -1)
    return groups @ weights


def demap_bits(symbols: np.ndarray, params: FrameParams) -> np.ndarray:
    """Inverse of :func:`split_bits`."""
    symbols = np.asarray(symbols).ravel()
    if symbols.size != params.M_prime:
        raise ValueError(f"length mismatch: expected {params.M_prime} symbols, got {symbols.size}")
    if symbols.size and (symbols.min() < 0 or symbols.max() >= params.N_prime):
        raise ValueError("symbol index out of range [0, N_prime)")
    shifts = np.arange(params.N_b - 1, -1, -1)
    return ((symbols[:, None] >> shifts[None, :]) & 1).astype(np.uint8).ravel()


def map_onehot(symbols: np.ndarray, params: FrameParams) -> np.ndarray:
    """One-hot mapper: unit entry at row n_l in each data column, ZP columns zero."""
    symbols = np.asarray(symbols).ravel()
    if symbols.size != params.M_prime:
        raise ValueError(f"length mismatch: expected {params.M_prime} symbols, got {symbols.size}")
    x = empty_frame(params)
    x[symbols, np.arange(params.M_prime)] = 1.0
    return x


def map_sequence(symbols: np.ndarray, basis: ZcBasis, params: FrameParams) -> np.ndarray:
    """Sequence mapper: data column l is the basis circularly shifted down by n_l."""
    symbols = np.asarray(symbols).ravel()
    if basis.N != params.N:
        raise ValueError(f"length mismatch: basis length {basis.N} != N = {params.N}")
    if symbols.size != params.M_prime:
        raise ValueError(f"length mismatch: expected {params.M_prime} symbols, got {symbols.size}")
    x = empty_frame(params)
    k = np.arange(params.N)
    # column l holds z[(k - n_l) mod N]
    x[:, : params.M_prime] = basis.z[(k[:, None] - symbols[None, :]) % params.N]
    return x


def interleaved_guard_count(params: FrameParams) -> int:
    """Null subcarriers between adjacent BPSK symbols within a column."""
    return params.N // params.N_b - 1


def interleaved_rows(params: FrameParams, N_d: int) -> np.ndarray:
    """Subcarrier positions k = i*(N_d+1) of the interleaved BPSK baseline."""
    if params.N_b * (N_d + 1) > params.N:
        raise ValueError(f"overfull grid: N_b*(N_d+1) = {params.N_b * (N_d + 1)} > N = {params.N}")
    return np.arange(params.N_b) * (N_d + 1)


def fdma_rows(params: FrameParams, K_u: int) -> list[np.ndarray]:
    """Per-user subcarrier positions of the FDMA BPSK baseline (disjoint subbands)."""
    N_s = params.N // K_u
    if N_s < params.N_b:
        raise ValueError(f"too many users: subband size {N_s} < N_b = {params.N_b}")
    return [u * N_s + np.arange(params.N_b) for u in range(K_u)]


def bpsk_amplitude(params: FrameParams) -> float:
    """Per-entry amplitude keeping each data column at unit transmit power."""
    return 1.0 / np.sqrt(params.N_b)


def _bpsk_fill(bits: np.ndarray, rows: np.ndarray, params: FrameParams) -> np.ndarray:
    """Place BPSK(0)=+1, BPSK(1)=-1 entries on the given rows of every data column."""
    bits = np.asarray(bits).ravel()
    expected = params.M_prime * params.N_b
    if bits.size != expected:
        raise ValueError(f"length mismatch: expected {expected} bits, got {bits.size}")
    x = empty_frame(params)
    values = bpsk_amplitude(params) * (1.0 - 2.0 * bits.reshape(params.M_prime, params.N_b))
    x[np.ix_(rows, np.arange(params.M_prime))] = values.T
    return x


def map_bpsk_interleaved(bits: np.ndarray, params: FrameParams, N_d: int) -> np.ndarray:
    """Single-user BPSK baseline with N_d null guards between active subcarriers.

    Carries M_prime * N_b bits per frame, matching the DSK spectral efficiency;
    entries are scaled so total frame power equals the DSK frame's.
    """
    return _bpsk_fill(bits, interleaved_rows(params, N_d), params)


def map_bpsk_fdma(bits_per_user: list[np.ndarray], params: FrameParams, K_u: int) -> list[np.ndarray]:
    """Multi-user BPSK baseline on non-overlapping subbands, one frame per user."""
    if len(bits_per_user) != K_u:
        raise ValueError(f"length mismatch: expected {K_u} bit blocks, got {len(bits_per_user)}")
    rows = fdma_rows(params, K_u)
    return [_bpsk_fill(bits, rows[u], params) for u, bits in enumerate(bits_per_user)]


def bpsk_demap(values: np.ndarray) -> np.ndarray:
    """Hard decisions by the sign of the real part (+1 -> bit 0)."""
    return (np.real(values) < 0).astype(np.uint8)

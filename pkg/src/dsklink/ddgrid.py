"""Delay-Doppler grid geometry and derived frame parameters.

The transmit/receive resource is an N x M complex grid indexed ``[k, l]``
(subcarrier k along the Doppler axis, multicarrier symbol l along the delay
axis).  Frames are plain ``numpy`` arrays of shape ``(N, M)``; this module
holds the parameter bookkeeping shared by every other module.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

SPEED_OF_LIGHT = 2.998e8  # m/s


@dataclass(frozen=True)
class FrameParams:
    """Grid geometry and the quantities derived from it.

    N_b is the number of bits carried per multicarrier symbol index,
    N_prime the number of usable subcarrier indices (a power of two) and
    M_prime the number of data-bearing symbols once the trailing l_max
    symbols are reserved as zero padding.
    """

    N: int
    M: int
    l_max: int
    N_b: int
    N_prime: int
    M_prime: int
    k_max: int | None = None

    def with_k_max(self, k_max: int) -> "FrameParams":
        return replace(self, k_max=int(k_max))


@dataclass(frozen=True)
class PhysConfig:
    """Physical-layer constants: carrier (Hz), sample rate (Hz), peak UE speed (m/s)."""

    f_c: float
    f_s: float
    v_max: float

    def __post_init__(self):
        if self.f_c <= 0 or self.f_s <= 0:
            raise ValueError("carrier and sampling frequencies must be positive")
        if self.v_max < 0:
            raise ValueError("v_max must be non-negative")


def derive_params(N: int, M: int, l_max: int) -> FrameParams:
    """Derive frame parameters from the grid dimensions.

    Requires N >= 2 and M > l_max >= 0.  k_max is left unset; fill it with
    :func:`doppler_bound` or directly when the channel spread is known.
    """
    if N < 2:
        raise ValueError(f"invalid dimension: need N >= 2, got N={N}")
    if l_max < 0 or M <= l_max:
        raise ValueError(f"invalid dimension: need M > l_max >= 0, got M={M}, l_max={l_max}")
    n_b = int(math.floor(math.log2(N)))
    return FrameParams(
        N=int(N),
        M=int(M),
        l_max=int(l_max),
        N_b=n_b,
        N_prime=2**n_b,
        M_prime=int(M - l_max),
    )


def doppler_bound(phys: PhysConfig, params: FrameParams) -> int:
    """Maximum Doppler index supported by the UE speed, rounded up.

    The Doppler resolution is f_s / (N*M); the peak physical shift is
    (v_max/c) * f_c.  Ceiling keeps every physical shift on-grid.
    """
    nu_max = phys.v_max / SPEED_OF_LIGHT * phys.f_c
    nu_res = phys.f_s / (params.N * params.M)
    return int(math.ceil(nu_max / nu_res))


def empty_frame(params: FrameParams) -> np.ndarray:
    """All-zero N x M delay-Doppler grid."""
    return np.zeros((params.N, params.M), dtype=np.complex128)


def check_frame(x: np.ndarray, params: FrameParams) -> np.ndarray:
    """Validate grid shape, returning the array as complex128."""
    x = np.asarray(x)
    if x.shape != (params.N, params.M):
        raise ValueError(f"shape mismatch: expected {(params.N, params.M)}, got {x.shape}")
    return x.astype(np.complex128, copy=False)


def satisfies_zero_padding(x: np.ndarray, params: FrameParams, tol: float = 0.0) -> bool:
    """True when the trailing l_max multicarrier symbols carry no energy."""
    if params.l_max == 0:
        return True
    return bool(np.max(np.abs(x[:, params.M_prime:]), initial=0.0) <= tol)

"""Zadoff-Chu basis sequences and multi-user root allocation.

Every basis is a unit-power zero-autocorrelation (ZAC) sequence of length N.
Cross-correlation between two users' bases controls the residual multi-user
interference after the receiver's correlation stage, so root selection
minimizes the peak cross-correlation magnitude over the usable shift range.
Both a closed-form evaluation (valid for power-of-two N) and brute-force
counterparts are provided; the brute-force routes act as independent oracles
for the closed forms.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ZcBasis:
    """A unit-power Zadoff-Chu sequence with its root."""

    N: int
    root: int
    z: np.ndarray

    @property
    def m(self) -> int:
        return self.root


@dataclass(frozen=True)
class BasisSet:
    """One basis per user plus the precomputed cross-correlation table.

    ``xcorr_table[u, v, d]`` holds the cross-correlation of user u's and
    user v's bases at shift difference d (the value only depends on the
    difference of the two circular shifts, modulo N).
    """

    bases: tuple[ZcBasis, ...]
    xcorr_table: np.ndarray

    @property
    def n_users(self) -> int:
        return len(self.bases)

    @property
    def N(self) -> int:
        return self.bases[0].N


def zc_generate(N: int, root: int) -> ZcBasis:
    """Generate the length-N Zadoff-Chu sequence for the given root.

    Even N uses phase pi*root*k^2/N, odd N uses pi*root*k*(k+1)/N, both
    scaled to unit total power.  The root must lie in (0, N) and be coprime
    to N, otherwise the zero-autocorrelation property is lost.
    """
    if not (0 < root < N):
        raise ValueError(f"root must satisfy 0 < root < N, got root={root}, N={N}")
    if math.gcd(root, N) != 1:
        raise ValueError(f"root not coprime: gcd({root}, {N}) = {math.gcd(root, N)}")
    k = np.arange(N)
    if N % 2 == 0:
        phase = np.pi * root * k * k / N
    else:
        phase = np.pi * root * k * (k + 1) / N
    z = np.exp(1j * phase) / np.sqrt(N)
    basis = ZcBasis(N=N, root=root, z=z)
    # Construction-time sanity check of the ZAC property.
    ac = circular_autocorr(z)
    ac[0] -= 1.0
    if np.max(np.abs(ac)) > 1e-12:
        raise AssertionError(f"generated sequence is not ZAC (root={root}, N={N})")
    return basis


def circular_autocorr(z: np.ndarray) -> np.ndarray:
    """Circular autocorrelation sum_k conj(z[(k-d) mod N]) * z[k] for all lags d."""
    Z = np.fft.fft(z)
    return np.fft.ifft(np.abs(Z) ** 2)


def cross_corr(z_u: ZcBasis, z_v: ZcBasis, k_u: int, k_v: int) -> complex:
    """Exact cross-correlation of two shifted bases (direct finite sum)."""
    if z_u.N != z_v.N:
        raise ValueError(f"length mismatch: {z_u.N} != {z_v.N}")
    return complex(np.sum(np.conj(np.roll(z_u.z, k_u)) * np.roll(z_v.z, k_v)))


def cross_power_closed(N: int, m_u: int, m_v: int, k_u: int, k_v: int) -> float:
    """Closed-form |cross-correlation|^2 of two ZC bases, power-of-two N only.

    With c = gcd(m_v - m_u, N), the squared magnitude is c/N when
    (k_u*m_u - k_v*m_v) mod N is divisible by c and 0 otherwise.  Equal
    roots give c = N, reproducing the ZAC delta.
    """
    if not _is_pow2(N):
        raise ValueError(f"closed form only valid for power-of-two N, got N={N}")
    for m in (m_u, m_v):
        if math.gcd(m, N) != 1:
            raise ValueError(f"root not coprime: gcd({m}, {N}) != 1")
    c = math.gcd(m_v - m_u, N)  # equal roots give gcd(0, N) = N
    if ((k_u * m_u - k_v * m_v) % N) % c == 0:
        return c / N
    return 0.0


def chirp_autocorr(N: int, root_diff: int, lag: int) -> complex:
    """Closed-form autocorrelation of the unit-power quadratic chirp
    exp(j*pi*root_diff*k^2/N)/sqrt(N) at the given circular lag.

    Nonzero only when lag*root_diff is divisible by N; the residual phase
    factor collapses to 1 for power-of-two N whenever the lag is even.
    Exposed so the derivation step behind :func:`cross_power_closed` can be
    tested against direct summation.
    """
    if (lag * root_diff) % N != 0:
        return 0.0
    return complex(np.exp(-1j * np.pi * root_diff * lag * lag / N))


def allocate_roots(K_u: int, N: int, m_0: int, rng: np.random.Generator | None = None) -> list[int]:
    """Optimal root assignment for K_u users.

    For power-of-two N the roots form the arithmetic sequence m_0, m_0+2, ...
    (m_0 odd), which minimizes the peak pairwise cross-correlation and the
    number of user pairs attaining it.  For prime N any distinct roots are
    equally good; a deterministic choice is made unless an rng is supplied.
    """
    if K_u < 1:
        raise ValueError(f"need at least one user, got K_u={K_u}")
    if _is_pow2(N):
        if m_0 % 2 == 0:
            raise ValueError(f"m_0 must be odd for power-of-two N, got m_0={m_0}")
        if m_0 + 2 * (K_u - 1) >= N:
            raise ValueError(f"too many users: m_0 + 2*(K_u-1) = {m_0 + 2 * (K_u - 1)} >= N = {N}")
        return [m_0 + 2 * u for u in range(K_u)]
    if _is_prime(N):
        if K_u >= N:
            raise ValueError(f"too many users: K_u={K_u} >= N={N}")
        if rng is None:
            return [(m_0 - 1 + u) % (N - 1) + 1 for u in range(K_u)]
        return sorted(rng.choice(np.arange(1, N), size=K_u, replace=False).tolist())
    raise ValueError(f"N must be a power of two or prime for root allocation, got N={N}")


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for d in range(2, int(math.isqrt(n)) + 1):
        if n % d == 0:
            return False
    return True


def build_basis_set(roots: list[int], N: int) -> BasisSet:
    """Instantiate the per-user bases and their cross-correlation table."""
    bases = tuple(zc_generate(N, m) for m in roots)
    K = len(bases)
    zs = np.stack([b.z for b in bases])
    Z = np.fft.fft(zs, axis=1)
    # table[u, v, d] = sum_j conj(z_u[j]) z_v[(j+d) mod N]
    table = np.fft.ifft(np.conj(Z)[:, None, :] * Z[None, :, :], axis=2)
    return BasisSet(bases=bases, xcorr_table=table)


def _pair_peak(z_u: np.ndarray, z_v: np.ndarray, N: int, N_prime: int) -> float:
    """Peak |cross-correlation|^2 of a basis pair over the usable shift range.

    Shifts k_u, k_v range over [0, N_prime); the correlation depends only on
    (k_u - k_v) mod N, so the attainable differences are enumerated directly.
    """
    Zu = np.fft.fft(z_u)
    Zv = np.fft.fft(z_v)
    corr = np.fft.ifft(np.conj(Zu) * Zv)
    attainable = np.zeros(N, dtype=bool)
    deltas = np.arange(-(N_prime - 1), N_prime) % N
    attainable[deltas] = True
    return float(np.max(np.abs(corr[attainable]) ** 2))


def pair_peak_power(m_u: int, m_v: int, N: int, N_prime: int) -> float:
    """Peak |cross-correlation|^2 between two roots' bases over the shift range."""
    return _pair_peak(zc_generate(N, m_u).z, zc_generate(N, m_v).z, N, N_prime)


def psi_metrics(roots: list[int], N: int, N_prime: int) -> tuple[float, int]:
    """Peak pairwise cross-correlation magnitude and the number of user
    pairs attaining it, measured exhaustively over the shift range.

    For power-of-two N the gcd-based closed form is used as an upper-bound
    cross-check on the measured peak.
    """
    if len(set(roots)) != len(roots):
        raise ValueError("roots must be distinct")
    for m in roots:
        if math.gcd(m, N) != 1:
            raise ValueError(f"root not coprime: gcd({m}, {N}) != 1")
    zs = [zc_generate(N, m).z for m in roots]
    peaks = {}
    for u, v in itertools.combinations(range(len(roots)), 2):
        p = _pair_peak(zs[u], zs[v], N, N_prime)
        if _is_pow2(N):
            bound = math.gcd(roots[v] - roots[u], N) / N
            assert p <= bound + 1e-9, "measured pair peak exceeds gcd bound"
        peaks[(u, v)] = p
    psi_max_sq = max(peaks.values())
    attaining = sum(1 for p in peaks.values() if p >= psi_max_sq * (1 - 1e-9))
    return math.sqrt(psi_max_sq), attaining


def brute_force_roots(K_u: int, N: int, N_prime: int) -> tuple[list[int], float, int]:
    """Exhaustive search over all K_u-subsets of odd roots in [1, N-1].

    Returns the lexicographically-first subset minimizing (peak
    cross-correlation, attaining-pair count).  Feasible only at small N;
    intended as the independent optimality oracle for :func:`allocate_roots`.
    """
    if not _is_pow2(N):
        raise ValueError(f"brute-force search expects power-of-two N, got N={N}")
    odd_roots = list(range(1, N, 2))
    if K_u > len(odd_roots):
        raise ValueError(f"too many users: K_u={K_u} > {len(odd_roots)} odd residues mod {N}")
    zs = {m: zc_generate(N, m).z for m in odd_roots}
    pair_cache = {
        (a, b): _pair_peak(zs[a], zs[b], N, N_prime)
        for a, b in itertools.combinations(odd_roots, 2)
    }
    best = None
    for subset in itertools.combinations(odd_roots, K_u):
        peaks = [pair_cache[p] for p in itertools.combinations(subset, 2)]
        peak = max(peaks) if peaks else 0.0
        pairs = sum(1 for p in peaks if p >= peak * (1 - 1e-9))
        # peaks are exact rationals c/N here, so quantizing makes ties exact
        # and the lexicographically-first winner independent of fp noise
        key = (round(peak * N), pairs)
        if best is None or key < best[0]:
            best = (key, list(subset), peak)
    (_, pairs), roots, peak = best
    return roots, math.sqrt(peak), pairs

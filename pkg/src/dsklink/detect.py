"""Receivers: correlation preprocessing, matching pursuit, iterative SIC-MRC
(point-to-point and multi-user), and the LMMSE baseline for BPSK grids.

The shift-keying receivers work on a grid whose data relation is one-hot:
either the demodulated grid itself (one-hot mapper) or the output of
:func:`correlate_rx` (sequence mapper).  The iterative detector alternates
interference cancellation using the current index estimates with maximal
ratio combining across taps; the first iteration is plain MRC without
cancellation.  In the multi-user detector the residual cross-user terms are
reconstructed from every user's current estimates through the basis
cross-correlations and subtracted before combining.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .channel import EsddChannel
from .ddgrid import FrameParams
from .seqs import BasisSet, ZcBasis
from .txmap import bpsk_amplitude, bpsk_demap


@dataclass(frozen=True)
class DetectorOptions:
    """Iteration cap and update schedule for the SIC-MRC detectors.

    The initial MRC-only pass counts as iteration 1.  ``parallel`` updates
    every estimate from the previous iteration's snapshot; ``successive``
    consumes fresh estimates immediately.  Iteration stops early once a full
    pass leaves every estimate unchanged.
    """

    max_iter: int = 5
    schedule: str = "parallel"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.schedule not in ("parallel", "successive"):
            raise ValueError(f"unknown schedule: {self.schedule!r}")


@dataclass
class DetectorTrace:
    """Per-iteration snapshots for convergence studies.

    ``estimates[i]`` holds the index estimates after iteration i+1;
    ``changed[i]`` counts symbols that differed from the previous iteration
    (the whole frame for iteration 1).  ``iterations_used`` is the last
    iteration at which any estimate changed.
    """

    estimates: list = field(default_factory=list)
    changed: list = field(default_factory=list)

    @property
    def iterations_used(self) -> int:
        last = 0
        for i, c in enumerate(self.changed):
            if c > 0:
                last = i + 1
        return last

    def estimate_at(self, iteration: int) -> np.ndarray:
        """Estimates after the given 1-based iteration (final ones if converged earlier)."""
        idx = min(iteration, len(self.estimates)) - 1
        return self.estimates[idx]


def correlate_rx(y: np.ndarray, basis: ZcBasis) -> np.ndarray:
    """Per-column circular correlation of the received grid with the basis.

    Collapses a sequence-mapped frame back to the one-hot relation; white
    noise stays white because the rows of the correlation operator are
    orthonormal for a unit-power ZAC basis.
    """
    y = np.asarray(y, dtype=np.complex128)
    if y.shape[0] != basis.N:
        raise ValueError(f"length mismatch: grid has {y.shape[0]} rows, basis length {basis.N}")
    Z = np.fft.fft(basis.z)
    return np.fft.ifft(np.conj(Z)[:, None] * np.fft.fft(y, axis=0), axis=0)


# ---------------------------------------------------------------------------
# Sensing matrix and matching pursuit
# ---------------------------------------------------------------------------

def build_sensing_matrix(chan: EsddChannel, params: FrameParams) -> sp.csc_matrix:
    """Sparse (N*M) x (N_prime*M_prime) map from one-hot index vectors to the
    received grid; column k' + l'*N_prime has one nonzero per tap."""
    N, M, Np, Mp = params.N, params.M, params.N_prime, params.M_prime
    kk = np.arange(Np)
    ll = np.arange(Mp)
    KK, LL = np.meshgrid(kk, ll, indexing="ij")
    cols_base = (KK + LL * Np).ravel()
    rows, cols, vals = [], [], []
    for h, l_p, k_p in zip(chan.gains, chan.delays, chan.dopplers):
        rows.append((((KK + k_p) % N) + (LL + l_p) * N).ravel())
        cols.append(cols_base)
        vals.append((h * np.exp(2j * np.pi * k_p * (LL + l_p) / (N * M))).ravel())
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N * M, Np * Mp),
    )
    return A.tocsc()


def column_coherence(A: sp.spmatrix, i: int, j: int) -> float:
    """Normalized inner-product magnitude between two sensing-matrix columns."""
    a_i = np.asarray(A[:, i].todense()).ravel()
    a_j = np.asarray(A[:, j].todense()).ravel()
    ni, nj = np.linalg.norm(a_i), np.linalg.norm(a_j)
    if ni == 0.0 or nj == 0.0:
        raise ValueError("zero column")
    return float(np.abs(np.vdot(a_i, a_j)) / (ni * nj))


def mp_detect(y: np.ndarray, A: sp.csc_matrix, params: FrameParams) -> np.ndarray:
    """Greedy matching pursuit: one index pick per data symbol.

    Each pass correlates the residual against every column, picks the
    strongest among symbols not yet decided, and subtracts that column at
    unit amplitude.  Ties break toward the lowest column index.
    """
    Np, Mp = params.N_prime, params.M_prime
    r = np.asarray(y, dtype=np.complex128).flatten(order="F")
    if A.shape != (params.N * params.M, Np * Mp):
        raise ValueError(f"shape mismatch: sensing matrix {A.shape}")
    A_h = A.conj().T.tocsr()
    flags = np.zeros(Mp, dtype=bool)
    est = np.zeros(Mp, dtype=np.int64)
    for _ in range(Mp):
        g = A_h @ r
        mag = np.abs(g)
        mag[np.repeat(flags, Np)] = -1.0
        q_hat = int(np.argmax(mag))
        r -= A[:, [q_hat]].toarray().ravel()
        l = q_hat // Np
        est[l] = q_hat - l * Np
        flags[l] = True
    return est


# ---------------------------------------------------------------------------
# Iterative SIC-MRC
# ---------------------------------------------------------------------------

class _TapView:
    """Unpacked channel arrays plus per-tap Doppler phase tables."""

    def __init__(self, chan: EsddChannel, params: FrameParams):
        self.gains = chan.gains.astype(np.complex128)
        self.delays = chan.delays.astype(np.int64)
        self.dopplers = chan.dopplers.astype(np.int64)
        l_axis = np.arange(params.M)
        self.phases = np.exp(
            2j * np.pi * self.dopplers[:, None] * l_axis[None, :] / (params.N * params.M)
        )
        self.norm = float(np.sum(np.abs(self.gains) ** 2))
        P = len(self.gains)
        # row gather table: roll_idx[p, k] = (k + k_p) mod N
        self.roll_idx = (np.arange(params.N)[None, :] + self.dopplers[:, None]) % params.N
        # flattened tap pairs (p, q), q != p, for the cross-tap cancellation
        grid_p, grid_q = np.meshgrid(np.arange(P), np.arange(P), indexing="ij")
        off = grid_p != grid_q
        self.pair_p = grid_p[off]
        self.pair_q = grid_q[off]


def _mrc_no_cancel(g: np.ndarray, tv: _TapView, params: FrameParams) -> np.ndarray:
    """MRC indicator from raw observations (iteration-1 initialization)."""
    Mp = params.M_prime
    c = np.zeros((params.N, Mp), dtype=np.complex128)
    for p in range(len(tv.gains)):
        l_p, k_p = int(tv.delays[p]), int(tv.dopplers[p])
        b = np.roll(g, -k_p, axis=0)[:, l_p : l_p + Mp]
        c += np.conj(tv.gains[p] * tv.phases[p, l_p : l_p + Mp])[None, :] * b
    return c / tv.norm


def _recon_onehot(est: np.ndarray, tv: _TapView, params: FrameParams) -> np.ndarray:
    """Noiseless one-hot received grid implied by the current estimates."""
    Mp = params.M_prime
    yhat = np.zeros((params.N, params.M), dtype=np.complex128)
    cols = np.arange(Mp)
    for p in range(len(tv.gains)):
        l_p, k_p = int(tv.delays[p]), int(tv.dopplers[p])
        rows = (k_p + est) % params.N
        yhat[rows, cols + l_p] += tv.gains[p] * tv.phases[p, l_p : l_p + Mp]
    return yhat


def _mrc_with_cancel(g: np.ndarray, est: np.ndarray, tv: _TapView, params: FrameParams) -> np.ndarray:
    """One parallel SIC-MRC pass: cancel all cross-tap terms implied by the
    snapshot estimates, then combine."""
    Mp = params.M_prime
    resid = g - _recon_onehot(est, tv, params)
    cols = np.arange(Mp)
    c = np.zeros((params.N, Mp), dtype=np.complex128)
    for p in range(len(tv.gains)):
        l_p, k_p = int(tv.delays[p]), int(tv.dopplers[p])
        w = tv.gains[p] * tv.phases[p, l_p : l_p + Mp]
        b = np.roll(resid, -k_p, axis=0)[:, l_p : l_p + Mp].copy()
        b[est, cols] += w  # add back this tap's own reconstructed term
        c += np.conj(w)[None, :] * b
    return c / tv.norm


def _decide(c: np.ndarray, n_prime: int) -> np.ndarray:
    return np.argmax(np.abs(c[:n_prime]), axis=0).astype(np.int64)


def sic_mrc_p2p(
    r: np.ndarray,
    chan: EsddChannel,
    params: FrameParams,
    opts: DetectorOptions = DetectorOptions(),
) -> tuple[np.ndarray, DetectorTrace]:
    """Iterative SIC-MRC detection of a one-hot-structured grid.

    ``r`` is either the demodulated grid (one-hot mapper) or the correlation
    grid (sequence mapper); the channel may be a perturbed estimate.
    """
    r = np.asarray(r, dtype=np.complex128)
    tv = _TapView(chan, params)
    trace = DetectorTrace()
    est = _decide(_mrc_no_cancel(r, tv, params), params.N_prime)
    trace.estimates.append(est.copy())
    trace.changed.append(int(est.size))
    for _ in range(opts.max_iter - 1):
        if opts.schedule == "parallel":
            new = _decide(_mrc_with_cancel(r, est, tv, params), params.N_prime)
            n_changed = int(np.count_nonzero(new != est))
            est = new
        else:
            est = est.copy()
            n_changed = _successive_pass([r], [tv], None, None, None, [est], params)
        trace.estimates.append(est.copy())
        trace.changed.append(n_changed)
        if n_changed == 0:
            break
    return est, trace


def _corr_matrix(z: np.ndarray) -> np.ndarray:
    """Dense operator with rows the conjugated circular shifts of z."""
    N = len(z)
    idx = (np.arange(N)[None, :] - np.arange(N)[:, None]) % N
    return np.conj(z[idx])


def _recon_sequence(est: np.ndarray, tv: _TapView, z: np.ndarray, params: FrameParams) -> np.ndarray:
    """Noiseless sequence-mapped received grid implied by the estimates."""
    N, Mp = params.N, params.M_prime
    yhat = np.zeros((N, params.M), dtype=np.complex128)
    k_axis = np.arange(N)
    for p in range(len(tv.gains)):
        l_p, k_p = int(tv.delays[p]), int(tv.dopplers[p])
        shifted = z[(k_axis[:, None] - k_p - est[None, :]) % N]
        yhat[:, l_p : l_p + Mp] += (tv.gains[p] * tv.phases[p, l_p : l_p + Mp])[None, :] * shifted
    return yhat


def _successive_pass(
    grids: list[np.ndarray],
    tvs: list[_TapView],
    yhats: list[np.ndarray] | None,
    corrmats: list[np.ndarray] | None,
    zs: list[np.ndarray] | None,
    est: list[np.ndarray],
    params: FrameParams,
) -> int:
    """One successive sweep over (symbol, user), updating estimates in place.

    ``yhats`` holds every user's sequence-domain reconstruction (None in the
    single-user / point-to-point case, where no cross-user terms exist); the
    per-user one-hot self terms are always cancelled exactly.
    """
    K = len(grids)
    N, Mp = params.N, params.M_prime
    n_changed = 0
    yhat_sum = None
    if yhats is not None:
        yhat_sum = np.sum(yhats, axis=0)
    for l in range(Mp):
        for u in range(K):
            tv = tvs[u]
            P = len(tv.gains)
            cols = l + tv.delays
            base = grids[u][:, cols]
            if yhats is not None and K > 1:
                base = base - corrmats[u] @ (yhat_sum[:, cols] - yhats[u][:, cols])
            b = np.take_along_axis(base.T, tv.roll_idx, axis=1)  # b[p, k] = base[(k+k_p)%N, p]
            col_p = cols[tv.pair_p]
            lsrc = col_p - tv.delays[tv.pair_q]
            valid = (lsrc >= 0) & (lsrc < Mp)
            if valid.any():
                pp, qq = tv.pair_p[valid], tv.pair_q[valid]
                k_hit = (tv.dopplers[qq] + est[u][lsrc[valid]] - tv.dopplers[pp]) % N
                np.subtract.at(b, (pp, k_hit), tv.gains[qq] * tv.phases[qq, col_p[valid]])
            w = tv.gains * tv.phases[np.arange(P), cols]
            c = (np.conj(w)[:, None] * b).sum(axis=0) / tv.norm
            new = int(np.argmax(np.abs(c[: params.N_prime])))
            if new != est[u][l]:
                if yhats is not None and K > 1:
                    z = zs[u]
                    for q in range(P):
                        col_q = l + int(tv.delays[q])
                        k_q = int(tv.dopplers[q])
                        w_q = tv.gains[q] * tv.phases[q, col_q]
                        delta = w_q * (
                            np.roll(z, (k_q + new) % N) - np.roll(z, (k_q + int(est[u][l])) % N)
                        )
                        yhats[u][:, col_q] += delta
                        yhat_sum[:, col_q] += delta
                est[u][l] = new
                n_changed += 1
    return n_changed


def sic_mrc_mu(
    r_all: list[np.ndarray],
    chans: list[EsddChannel],
    basis_set: BasisSet,
    params: FrameParams,
    opts: DetectorOptions = DetectorOptions(),
) -> tuple[list[np.ndarray], DetectorTrace]:
    """Joint iterative SIC-MRC across uplink users.

    ``r_all[u]`` is the correlation grid of the received signal with user
    u's basis.  Own-user terms cancel through the exact zero-autocorrelation
    of the basis; cross-user terms are rebuilt from all users' estimates via
    the basis cross-correlations and subtracted.  With a single user the
    computation reduces exactly to :func:`sic_mrc_p2p`.
    """
    K = len(r_all)
    if K != len(chans) or K != basis_set.n_users:
        raise ValueError(
            f"inconsistent user count: {K} grids, {len(chans)} channels, {basis_set.n_users} bases"
        )
    if not np.allclose(np.abs(basis_set.xcorr_table[np.arange(K), np.arange(K), 0]), 1.0, atol=1e-9):
        raise ValueError("basis set is not unit-power ZAC")
    r_all = [np.asarray(r, dtype=np.complex128) for r in r_all]
    tvs = [_TapView(c, params) for c in chans]
    zs = [b.z for b in basis_set.bases]
    trace = DetectorTrace()
    est = [_decide(_mrc_no_cancel(r_all[u], tvs[u], params), params.N_prime) for u in range(K)]
    trace.estimates.append(np.stack(est))
    trace.changed.append(int(K * params.M_prime))
    corrmats = [_corr_matrix(z) for z in zs] if K > 1 else None
    for _ in range(opts.max_iter - 1):
        if opts.schedule == "parallel":
            if K > 1:
                ffts = [
                    np.fft.fft(_recon_sequence(est[v], tvs[v], zs[v], params), axis=0)
                    for v in range(K)
                ]
                f_sum = np.sum(ffts, axis=0)
            new_est = []
            for u in range(K):
                g = r_all[u]
                if K > 1:
                    inter = np.fft.ifft(
                        np.conj(np.fft.fft(zs[u]))[:, None] * (f_sum - ffts[u]), axis=0
                    )
                    g = g - inter
                new_est.append(_decide(_mrc_with_cancel(g, est[u], tvs[u], params), params.N_prime))
            n_changed = int(sum(np.count_nonzero(a != b) for a, b in zip(new_est, est)))
            est = new_est
        else:
            est = [e.copy() for e in est]
            yhats = (
                [_recon_sequence(est[v], tvs[v], zs[v], params) for v in range(K)]
                if K > 1
                else None
            )
            n_changed = _successive_pass(r_all, tvs, yhats, corrmats, zs, est, params)
        trace.estimates.append(np.stack(est))
        trace.changed.append(n_changed)
        if n_changed == 0:
            break
    return est, trace


# ---------------------------------------------------------------------------
# LMMSE baseline for BPSK grids
# ---------------------------------------------------------------------------

def _bpsk_system(
    chans: list[EsddChannel],
    params: FrameParams,
    placement: list[np.ndarray],
) -> tuple[sp.csc_matrix, int]:
    """Sparse map from stacked unit-variance BPSK symbols to the received grid.

    Symbols are ordered symbol-major then user then position so delay
    coupling stays close to the diagonal of the normal equations.
    """
    N, M, Mp = params.N, params.M, params.M_prime
    amp = bpsk_amplitude(params)
    widths = [len(rows) for rows in placement]
    S = int(sum(widths))
    offsets = np.cumsum([0] + widths[:-1])
    l_axis = np.arange(Mp)
    rows_l, cols_l, vals_l = [], [], []
    for u, (chan, k_rows) in enumerate(zip(chans, placement)):
        col_idx = (l_axis[None, :] * S + offsets[u] + np.arange(widths[u])[:, None]).ravel()
        for h, l_p, k_p in zip(chan.gains, chan.delays, chan.dopplers):
            row_idx = (((k_rows[:, None] + k_p) % N) + (l_axis[None, :] + l_p) * N).ravel()
            val = amp * h * np.exp(2j * np.pi * k_p * (l_axis + l_p) / (N * M))
            rows_l.append(row_idx)
            cols_l.append(col_idx)
            vals_l.append(np.broadcast_to(val[None, :], (widths[u], Mp)).ravel())
    H = sp.coo_matrix(
        (np.concatenate(vals_l), (np.concatenate(rows_l), np.concatenate(cols_l))),
        shape=(N * M, S * Mp),
    )
    return H.tocsc(), S


def lmmse_bpsk(
    y: np.ndarray,
    chans: list[EsddChannel],
    params: FrameParams,
    placement: list[np.ndarray],
    sigma2: float,
) -> list[np.ndarray]:
    """Linear MMSE estimate of every placed BPSK symbol, sliced to hard bits.

    Solves (H^H H + sigma2 I) x = H^H y, which equals the MMSE estimate
    H^H (H H^H + sigma2 I)^{-1} y; the sign of the real part gives the bits.
    """
    if len(chans) != len(placement):
        raise ValueError(f"list length mismatch: {len(chans)} channels, {len(placement)} placements")
    H, S = _bpsk_system(chans, params, placement)
    y_vec = np.asarray(y, dtype=np.complex128).flatten(order="F")
    rhs = H.conj().T @ y_vec
    G = (H.conj().T @ H).tocsc()
    A = G + sigma2 * sp.identity(G.shape[0], dtype=np.complex128, format="csc")
    try:
        x_hat = spla.splu(A).solve(rhs)
    except RuntimeError as exc:
        raise ValueError(f"singular system: {exc}") from exc
    per_symbol = x_hat.reshape(params.M_prime, S)
    out = []
    offset = 0
    for rows in placement:
        width = len(rows)
        out.append(bpsk_demap(per_symbol[:, offset : offset + width].ravel()))
        offset += width
    return out

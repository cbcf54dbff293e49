"""Monte Carlo experiment driver: BER sweeps, convergence curves, PAPR CCDF,
and root-allocation reports, with deterministic seeding and CSV output.

Frames are independent work items.  Each frame derives its own RNG stream
from (master seed, frame index), so results are bit-identical regardless of
worker count or scheduling order; per-point aggregation uses integer
counters only.  Within a frame, the same channel/bit/noise realizations are
reused across the SNR sweep (noise scaled per point), which keeps BER curves
smooth without biasing any single point.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import channel as ch
from . import detect, seqs, txmap
from .ddgrid import FrameParams, PhysConfig, derive_params, doppler_bound
from .modem import PulseConfig, modulate, papr_db

SCENARIOS = ("p2p-dsk", "mu-dsk", "p2p-bpsk", "mu-bpsk")
DETECTORS = ("mp", "sicmrc-par", "sicmrc-seq", "lmmse")


@dataclass(frozen=True)
class ExperimentConfig:
    """Description of one Monte Carlo study; field names double as the keys
    accepted by the flat key=value config file."""

    scenario: str = "p2p-dsk"
    detector: str = "sicmrc-par"
    n: int = 64
    m: int = 64
    l_max: int = 10
    snr_db: tuple[float, ...] = (4.0, 6.0, 8.0, 10.0, 12.0, 14.0)
    k_u: int = 8
    p_u: int = 5
    m_0: int = 1
    frames: int = 2000
    max_iter: int = 5
    csi_error_db: float | None = None
    seed: int = 1
    speed_kmh: float = 360.0
    f_c: float = 5e9
    f_s: float = 3.84e6
    oversample: int = 8
    rolloff: float = 0.1
    half_len_q: int = 8
    jobs: int = 1

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.detector not in DETECTORS:
            raise ValueError(f"unknown detector {self.detector!r}")
        dsk = self.scenario.endswith("-dsk")
        if dsk and self.detector == "lmmse":
            raise ValueError("lmmse applies only to BPSK scenarios")
        if not dsk and self.detector != "lmmse":
            raise ValueError("BPSK scenarios use the lmmse detector")
        if self.detector == "mp" and self.scenario != "p2p-dsk":
            raise ValueError("mp detector applies only to the p2p-dsk scenario")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")

    def frame_params(self) -> FrameParams:
        params = derive_params(self.n, self.m, self.l_max)
        return params.with_k_max(doppler_bound(self.phys(), params))

    def phys(self) -> PhysConfig:
        return PhysConfig(f_c=self.f_c, f_s=self.f_s, v_max=self.speed_kmh / 3.6)

    def pulse(self) -> PulseConfig:
        return PulseConfig(
            kind="rrc", oversample=self.oversample, rolloff=self.rolloff, half_len_Q=self.half_len_q
        )

    def n_users(self) -> int:
        return self.k_u if self.scenario.startswith("mu-") else 1

    def sigma2(self, snr_db: float, params: FrameParams) -> float:
        if math.isinf(snr_db):
            return 0.0
        return 1.0 / (params.N_b * 10.0 ** (snr_db / 10.0))


def full_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """Reference-scale preset: M=256 and a 10^4-frame budget."""
    return replace(cfg, m=256, frames=max(cfg.frames, 10000))


@dataclass
class ExperimentResult:
    """CSV-serializable rows plus run metadata (metadata stays out of the CSV
    so identical configs produce identical bytes)."""

    header: tuple[str, ...]
    rows: list[tuple]
    frames: int
    wall_clock_s: float

    def to_csv(self) -> str:
        lines = [",".join(self.header)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


class _Context:
    """Per-run precomputation shared by every frame worker."""

    def __init__(self, cfg: ExperimentConfig):
        cfg.validate()
        self.cfg = cfg
        self.params = cfg.frame_params()
        self.n_users = cfg.n_users()
        self.opts = detect.DetectorOptions(
            max_iter=cfg.max_iter,
            schedule="successive" if cfg.detector == "sicmrc-seq" else "parallel",
        )
        self.basis_set = None
        self.placement = None
        self.guard = None
        if cfg.scenario.endswith("-dsk"):
            roots = seqs.allocate_roots(self.n_users, cfg.n, cfg.m_0)
            self.basis_set = seqs.build_basis_set(roots, cfg.n)
        elif cfg.scenario == "p2p-bpsk":
            self.guard = txmap.interleaved_guard_count(self.params)
            self.placement = [txmap.interleaved_rows(self.params, self.guard)]
        else:
            self.placement = txmap.fdma_rows(self.params, cfg.k_u)
        self.csi_var = None
        if cfg.csi_error_db is not None:
            self.csi_var = 10.0 ** (cfg.csi_error_db / 10.0)

    def frame_rng(self, frame_idx: int, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=[int(self.cfg.seed), stream, frame_idx])
        )


def _map_frames(ctx: _Context, bits: list[np.ndarray]) -> list[np.ndarray]:
    cfg, params = ctx.cfg, ctx.params
    if cfg.scenario.endswith("-dsk"):
        return [
            txmap.map_sequence(txmap.split_bits(b, params), ctx.basis_set.bases[u], params)
            for u, b in enumerate(bits)
        ]
    if cfg.scenario == "p2p-bpsk":
        return [txmap.map_bpsk_interleaved(bits[0], params, ctx.guard)]
    return txmap.map_bpsk_fdma(bits, params, cfg.k_u)


def _detect_dsk(
    ctx: _Context, y: np.ndarray, det_chans: list[ch.EsddChannel], A
) -> tuple[list[np.ndarray], int]:
    """Shift-keying detection; returns per-user index estimates and the
    iteration count used."""
    cfg, params = ctx.cfg, ctx.params
    if ctx.n_users == 1:
        r = detect.correlate_rx(y, ctx.basis_set.bases[0])
        if cfg.detector == "mp":
            return [detect.mp_detect(r, A, params)], 1
        est, trace = detect.sic_mrc_p2p(r, det_chans[0], params, ctx.opts)
        return [est], max(trace.iterations_used, 1)
    r_all = [detect.correlate_rx(y, b) for b in ctx.basis_set.bases]
    est, trace = detect.sic_mrc_mu(r_all, det_chans, ctx.basis_set, params, ctx.opts)
    return est, max(trace.iterations_used, 1)


def _simulate_frame_ber(ctx: _Context, frame_idx: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run one frame across the whole SNR sweep.

    Returns (bit error counts [point, user], bits per user, iterations
    [point]) as integer arrays.
    """
    cfg, params = ctx.cfg, ctx.params
    rng = ctx.frame_rng(frame_idx)
    K = ctx.n_users
    n_bits = params.M_prime * params.N_b
    bits = [rng.integers(0, 2, size=n_bits, dtype=np.uint8) for _ in range(K)]
    frames = _map_frames(ctx, bits)
    chans = [ch.draw_channel(rng, cfg.p_u, params.l_max, params.k_max) for _ in range(K)]
    det_chans = chans
    if ctx.csi_var is not None:
        det_chans = [ch.perturb_csi(c, ctx.csi_var, rng) for c in chans]
    y0 = ch.apply_dd(frames, chans, params)
    w = ch.unit_noise(y0.shape, rng)

    n_points = len(cfg.snr_db)
    errors = np.zeros((n_points, K), dtype=np.int64)
    iters = np.zeros(n_points, dtype=np.int64)
    A = None
    if cfg.detector == "mp":
        A = detect.build_sensing_matrix(det_chans[0], params)
    for i_pt, snr in enumerate(cfg.snr_db):
        sigma2 = cfg.sigma2(snr, params)
        y = y0 + np.sqrt(sigma2) * w
        if cfg.scenario.endswith("-dsk"):
            est, used = _detect_dsk(ctx, y, det_chans, A)
            bits_hat = [txmap.demap_bits(e, params) for e in est]
        else:
            bits_hat = detect.lmmse_bpsk(y, det_chans, params, ctx.placement, sigma2)
            used = 1
        iters[i_pt] = used
        for u in range(K):
            errors[i_pt, u] = int(np.count_nonzero(bits_hat[u] != bits[u]))
    bits_per_user = np.full(K, n_bits, dtype=np.int64)
    return errors, bits_per_user, iters


def _run_frames(ctx: _Context, worker) -> list:
    cfg = ctx.cfg
    if cfg.jobs <= 1:
        return [worker(ctx, i) for i in range(cfg.frames)]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(lambda i: worker(ctx, i), range(cfg.frames)))


def run_ber(cfg: ExperimentConfig) -> ExperimentResult:
    """BER against SNR for the configured scenario/detector."""
    t0 = time.perf_counter()
    ctx = _Context(cfg)
    results = _run_frames(ctx, _simulate_frame_ber)
    K = ctx.n_users
    errors = np.sum([r[0] for r in results], axis=0)
    total_bits = np.sum([r[1] for r in results], axis=0)
    iters = np.sum([r[2] for r in results], axis=0)
    rows = []
    for i_pt, snr in enumerate(cfg.snr_db):
        mean_iters = float(iters[i_pt]) / cfg.frames
        for u in range(K):
            e, b = int(errors[i_pt, u]), int(total_bits[u])
            rows.append((float(snr), str(u), e, b, e / b, mean_iters))
        e_all, b_all = int(errors[i_pt].sum()), int(total_bits.sum())
        rows.append((float(snr), "all", e_all, b_all, e_all / b_all, mean_iters))
    return ExperimentResult(
        header=("snr_db", "user", "bit_errors", "bits", "ber", "mean_iters"),
        rows=rows,
        frames=cfg.frames,
        wall_clock_s=time.perf_counter() - t0,
    )


def _simulate_frame_convergence(ctx: _Context, frame_idx: int) -> np.ndarray:
    """Bit error counts after each detector iteration for one frame."""
    cfg, params = ctx.cfg, ctx.params
    rng = ctx.frame_rng(frame_idx)
    K = ctx.n_users
    n_bits = params.M_prime * params.N_b
    bits = [rng.integers(0, 2, size=n_bits, dtype=np.uint8) for _ in range(K)]
    frames = _map_frames(ctx, bits)
    chans = [ch.draw_channel(rng, cfg.p_u, params.l_max, params.k_max) for _ in range(K)]
    det_chans = chans
    if ctx.csi_var is not None:
        det_chans = [ch.perturb_csi(c, ctx.csi_var, rng) for c in chans]
    y = ch.apply_dd(frames, chans, params)
    sigma2 = cfg.sigma2(cfg.snr_db[0], params)
    y = y + np.sqrt(sigma2) * ch.unit_noise(y.shape, rng)
    if K == 1:
        r = detect.correlate_rx(y, ctx.basis_set.bases[0])
        _, trace = detect.sic_mrc_p2p(r, det_chans[0], params, ctx.opts)
    else:
        r_all = [detect.correlate_rx(y, b) for b in ctx.basis_set.bases]
        _, trace = detect.sic_mrc_mu(r_all, det_chans, ctx.basis_set, params, ctx.opts)
    errors = np.zeros((cfg.max_iter, K), dtype=np.int64)
    for it in range(1, cfg.max_iter + 1):
        est = np.atleast_2d(trace.estimate_at(it))
        for u in range(K):
            bits_hat = txmap.demap_bits(est[u], params)
            errors[it - 1, u] = int(np.count_nonzero(bits_hat != bits[u]))
    return errors


def run_convergence(cfg: ExperimentConfig) -> ExperimentResult:
    """BER after each SIC-MRC iteration at the first configured SNR point."""
    if cfg.detector not in ("sicmrc-par", "sicmrc-seq"):
        raise ValueError("convergence study requires a sicmrc detector")
    t0 = time.perf_counter()
    ctx = _Context(cfg)
    results = _run_frames(ctx, _simulate_frame_convergence)
    errors = np.sum(results, axis=0)
    K = ctx.n_users
    bits_per_user = ctx.params.M_prime * ctx.params.N_b * cfg.frames
    rows = []
    for it in range(1, cfg.max_iter + 1):
        for u in range(K):
            e = int(errors[it - 1, u])
            rows.append((it, str(u), e, bits_per_user, e / bits_per_user))
        e_all = int(errors[it - 1].sum())
        rows.append((it, "all", e_all, bits_per_user * K, e_all / (bits_per_user * K)))
    return ExperimentResult(
        header=("iteration", "user", "bit_errors", "bits", "ber"),
        rows=rows,
        frames=cfg.frames,
        wall_clock_s=time.perf_counter() - t0,
    )


PAPR_THRESHOLDS_DB = tuple(round(0.1 * t, 1) for t in range(0, 141))


def _simulate_frame_papr(ctx: _Context, frame_idx: int) -> np.ndarray:
    cfg, params = ctx.cfg, ctx.params
    rng = ctx.frame_rng(frame_idx)
    n_bits = params.M_prime * params.N_b
    bits = [rng.integers(0, 2, size=n_bits, dtype=np.uint8)]
    frame = _map_frames(ctx, bits)[0]
    value = papr_db(modulate(frame, params, cfg.pulse()))
    return (value > np.asarray(PAPR_THRESHOLDS_DB)).astype(np.int64)


def run_papr(cfg: ExperimentConfig) -> ExperimentResult:
    """Empirical PAPR CCDF of the oversampled transmit waveform."""
    if not cfg.scenario.startswith("p2p-"):
        raise ValueError("PAPR study is a single-transmitter measurement; use a p2p scenario")
    t0 = time.perf_counter()
    ctx = _Context(cfg)
    counts = np.sum(_run_frames(ctx, _simulate_frame_papr), axis=0)
    rows = [
        (float(thr), int(counts[i]) / cfg.frames) for i, thr in enumerate(PAPR_THRESHOLDS_DB)
    ]
    return ExperimentResult(
        header=("threshold_db", "ccdf"),
        rows=rows,
        frames=cfg.frames,
        wall_clock_s=time.perf_counter() - t0,
    )


def run_roots(K_u: int, N: int, m_0: int, verify: bool = False) -> ExperimentResult:
    """Root-allocation report: per-user peak cross-correlation power and the
    number of partners attaining it.

    With ``verify`` (small N only) the allocation's global metrics are checked
    against the exhaustive search.
    """
    t0 = time.perf_counter()
    n_prime = 2 ** int(math.floor(math.log2(N)))
    roots = seqs.allocate_roots(K_u, N, m_0)
    peaks = np.zeros((K_u, K_u))
    for u in range(K_u):
        for v in range(u + 1, K_u):
            p = seqs.pair_peak_power(roots[u], roots[v], N, n_prime)
            peaks[u, v] = peaks[v, u] = p
    rows = []
    for u in range(K_u):
        others = np.delete(peaks[u], u) if K_u > 1 else np.zeros(1)
        own_peak = float(others.max())
        attaining = int(np.sum(others >= own_peak * (1 - 1e-9))) if own_peak > 0 else 0
        rows.append((str(u), roots[u], int(round(own_peak * N)), N, attaining))
    if verify:
        psi_max, pairs = seqs.psi_metrics(roots, N, n_prime)
        b_roots, b_psi, b_pairs = seqs.brute_force_roots(K_u, N, n_prime)
        if abs(psi_max - b_psi) > 1e-9 or pairs != b_pairs:
            raise AssertionError(
                f"allocation metrics ({psi_max:.6f}, {pairs}) differ from exhaustive "
                f"optimum ({b_psi:.6f}, {b_pairs}) attained by {b_roots}"
            )
    return ExperimentResult(
        header=("user", "root", "psi_max_sq_num", "psi_max_sq_den", "pairs"),
        rows=rows,
        frames=1,
        wall_clock_s=time.perf_counter() - t0,
    )


def parse_config_file(path: str) -> dict:
    """Flat ``key = value`` text; '#' starts a comment.  Keys mirror
    ExperimentConfig fields; snr_db takes a comma-separated list."""
    fields = {f: t for f, t in ExperimentConfig.__annotations__.items()}
    defaults = asdict(ExperimentConfig())
    out: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in fields:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _coerce(key, value, defaults[key])
    return out


def _coerce(key: str, value: str, default):
    if key == "snr_db":
        return tuple(float(v) for v in value.split(","))
    if key == "csi_error_db":
        return None if value.lower() in ("none", "") else float(value)
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value

"""End-to-end acceptance gates for the simulator.

Each test prints one ``ACCEPTANCE <tag>: PASS/FAIL`` line (visible with
``pytest -s``) and asserts the property.  Statistical gates run at desk scale
(M=64, 2000 frames) with fixed seeds; the reference-scale multi-user spot check
is opt-in via the environment variable DSKLINK_FULL=1 since it takes tens of
minutes on its own.
"""
import itertools
import math
import os
import time

import numpy as np
import pytest
from _oracles import ml_detect_onehot

from dsklink import channel as ch
from dsklink import detect, harness, seqs, txmap
from dsklink.ddgrid import derive_params
from dsklink import modem


def _report(tag: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {tag}: {status}{suffix}")


def _aggregate_ber(result: harness.ExperimentResult) -> dict:
    return {row[0]: row[4] for row in result.rows if row[1] == "all"}


# -- 1 -----------------------------------------------------------------------

def test_closed_form_cross_power_matches_exhaustive_sum():
    t0 = time.time()
    worst = 0.0
    for N in (8, 16):
        roots = list(range(1, N, 2))
        bases = {m: seqs.zc_generate(N, m) for m in roots}
        for m_u, m_v in itertools.product(roots, repeat=2):
            for k_u, k_v in itertools.product(range(N), repeat=2):
                brute = abs(seqs.cross_corr(bases[m_u], bases[m_v], k_u, k_v)) ** 2
                closed = seqs.cross_power_closed(N, m_u, m_v, k_u, k_v)
                worst = max(worst, abs(brute - closed))
    elapsed = time.time() - t0
    ok = worst <= 1e-10 and elapsed < 10.0
    _report("closed-form-crosscorr-equivalence", ok, f"max err {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-10
    assert elapsed < 10.0


# -- 2 -----------------------------------------------------------------------

def test_arithmetic_root_allocation_is_exhaustively_optimal():
    t0 = time.time()
    checked = []
    for N in (8, 16):
        for k_u in (2, 3, 4):
            alloc = seqs.allocate_roots(k_u, N, 1)
            a_peak, a_pairs = seqs.psi_metrics(alloc, N, N)
            b_roots, b_peak, b_pairs = seqs.brute_force_roots(k_u, N, N)
            q = k_u - 2 ** (math.ceil(math.log2(k_u)) - 1)
            assert abs(a_peak - b_peak) <= 1e-10, (N, k_u, a_peak, b_peak, b_roots)
            assert a_pairs == b_pairs == q, (N, k_u, a_pairs, b_pairs, q)
            checked.append((N, k_u))
    elapsed = time.time() - t0
    ok = len(checked) == 6 and elapsed < 30.0
    _report("root-allocation-optimality", ok, f"{len(checked)} cases, {elapsed:.1f}s")
    assert ok


# -- 3 -----------------------------------------------------------------------

def test_every_generated_sequence_has_delta_autocorrelation():
    worst = 0.0
    count = 0
    for N in (8, 16, 64):
        for m in range(1, N):
            if math.gcd(m, N) != 1:
                continue
            z = seqs.zc_generate(N, m).z
            ac = seqs.circular_autocorr(z)
            ac[0] -= 1.0
            worst = max(worst, float(np.max(np.abs(ac))))
            count += 1
    ok = worst <= 1e-12
    _report("zac-autocorrelation", ok, f"{count} bases, max dev {worst:.2e}")
    assert ok


# -- 4 -----------------------------------------------------------------------

def test_grid_channel_equals_time_domain_chain():
    t0 = time.time()
    rng = np.random.default_rng(20250811)
    params = derive_params(16, 32, 6).with_k_max(4)
    pulse = modem.PulseConfig(kind="delta")
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal((16, 32)) + 1j * rng.standard_normal((16, 32))
        x[:, params.M_prime :] = 0
        chan = ch.draw_channel(rng, int(rng.integers(1, 6)), params.l_max, params.k_max)
        y_grid = ch.apply_dd([x], [chan], params)
        r = ch.apply_time(modem.modulate(x, params, pulse), chan, params)
        y_time = modem.demodulate(r, params, pulse)
        worst = max(worst, float(np.max(np.abs(y_grid - y_time))))
    elapsed = time.time() - t0
    ok = worst <= 1e-10 and elapsed < 10.0
    _report("grid-time-channel-equivalence", ok, f"max err {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-10
    assert elapsed < 10.0


# -- 5 -----------------------------------------------------------------------

def test_noiseless_single_tap_recovery_is_exact_for_every_detector():
    runs = [
        dict(scenario="p2p-dsk", detector="mp"),
        dict(scenario="p2p-dsk", detector="sicmrc-par"),
        dict(scenario="p2p-dsk", detector="sicmrc-seq"),
        dict(scenario="mu-dsk", detector="sicmrc-par", k_u=4),
        dict(scenario="mu-dsk", detector="sicmrc-seq", k_u=4),
        dict(scenario="p2p-bpsk", detector="lmmse"),
        dict(scenario="mu-bpsk", detector="lmmse", k_u=4),
    ]
    failures = []
    for spec_kw in runs:
        cfg = harness.ExperimentConfig(
            snr_db=(math.inf,), frames=200, p_u=1, seed=11, **spec_kw
        )
        ber = _aggregate_ber(harness.run_ber(cfg))[math.inf]
        if ber != 0.0:
            failures.append((spec_kw, ber))
    ok = not failures
    _report("noiseless-exact-recovery", ok, f"{len(runs)} detector runs" if ok else str(failures))
    assert ok, failures


# -- 6 -----------------------------------------------------------------------

def test_iterative_detector_tracks_exhaustive_ml_on_small_instances():
    rng = np.random.default_rng(7)
    params = derive_params(4, 6, 2).with_k_max(1)  # M_prime = 4, N_prime = 4
    agree = 0
    n_inst = 200
    for _ in range(n_inst):
        sym = rng.integers(0, params.N_prime, params.M_prime)
        chan = ch.draw_channel(rng, 2, params.l_max, params.k_max)
        y = ch.apply_dd([txmap.map_onehot(sym, params)], [chan], params)
        est, _ = detect.sic_mrc_p2p(y, chan, params)
        agree += int(np.array_equal(est, ml_detect_onehot(y, chan, params)))
    ok = agree >= 190
    _report(
        "ml-oracle-agreement",
        ok,
        f"{agree}/{n_inst} agree, {n_inst - agree} disagreements logged",
    )
    assert ok


# -- 7 -----------------------------------------------------------------------

def _ccdf_threshold(result: harness.ExperimentResult, level: float) -> float:
    for threshold, ccdf in result.rows:
        if ccdf <= level:
            return threshold
    return math.inf


def test_papr_ccdf_gap_between_shift_keying_and_bpsk():
    # reference-scale grid, truncated root-raised-cosine at 8x oversampling
    common = dict(n=64, m=256, l_max=10, frames=5000, seed=5, oversample=8, rolloff=0.1)
    dsk = harness.run_papr(harness.ExperimentConfig(scenario="p2p-dsk", **common))
    bpsk = harness.run_papr(
        harness.ExperimentConfig(scenario="p2p-bpsk", detector="lmmse", **common)
    )
    thr_dsk = _ccdf_threshold(dsk, 1e-3)
    thr_bpsk = _ccdf_threshold(bpsk, 1e-3)
    gap = thr_bpsk - thr_dsk
    ok = gap >= 4.0
    _report(
        "papr-ccdf-gap",
        ok,
        f"CCDF 1e-3 at {thr_dsk:.1f} dB (DSK) vs {thr_bpsk:.1f} dB (BPSK), gap {gap:.1f} dB",
    )
    assert ok


# -- 8 -----------------------------------------------------------------------

DESK = dict(n=64, m=64, l_max=10, frames=2000, p_u=5, speed_kmh=360.0)


def test_desk_scale_ber_monotone_in_snr():
    cfg = harness.ExperimentConfig(
        scenario="p2p-dsk",
        detector="sicmrc-par",
        snr_db=(4.0, 6.0, 8.0, 10.0, 12.0, 14.0),
        seed=81,
        **DESK,
    )
    ber = _aggregate_ber(harness.run_ber(cfg))
    values = [ber[s] for s in cfg.snr_db]
    ok = all(b <= a for a, b in zip(values, values[1:]))
    _report("ber-monotone-in-snr", ok, ", ".join(f"{v:.1e}" for v in values))
    assert ok, values


def test_desk_scale_more_paths_do_not_hurt():
    bers = {}
    for p in (4, 5):
        cfg = harness.ExperimentConfig(
            scenario="p2p-dsk",
            detector="sicmrc-par",
            snr_db=(12.0,),
            seed=82,
            **{**DESK, "p_u": p},
        )
        bers[p] = _aggregate_ber(harness.run_ber(cfg))[12.0]
    ok = bers[5] <= bers[4]
    _report("diversity-ordering", ok, f"P=4: {bers[4]:.2e}, P=5: {bers[5]:.2e}")
    assert ok, bers


def test_desk_scale_multiuser_dsk_beats_bpsk_lmmse():
    cfg_dsk = harness.ExperimentConfig(
        scenario="mu-dsk", detector="sicmrc-par", snr_db=(12.0,), k_u=8, seed=83, **DESK
    )
    ber_dsk = _aggregate_ber(harness.run_ber(cfg_dsk))[12.0]
    cfg_bpsk = harness.ExperimentConfig(
        scenario="mu-bpsk", detector="lmmse", snr_db=(12.0,), k_u=8, seed=83, **DESK
    )
    ber_bpsk = _aggregate_ber(harness.run_ber(cfg_bpsk))[12.0]
    ok = ber_dsk < ber_bpsk
    _report("mu-dsk-vs-bpsk", ok, f"dsk {ber_dsk:.2e} vs bpsk {ber_bpsk:.2e}")
    assert ok, (ber_dsk, ber_bpsk)


def test_desk_scale_parallel_and_successive_within_factor_two():
    bers = {}
    for det in ("sicmrc-par", "sicmrc-seq"):
        cfg = harness.ExperimentConfig(
            scenario="mu-dsk", detector=det, snr_db=(12.0,), k_u=8, seed=83, **DESK
        )
        bers[det] = _aggregate_ber(harness.run_ber(cfg))[12.0]
    lo, hi = min(bers.values()), max(bers.values())
    ok = hi <= 2.0 * lo if lo > 0 else hi == 0.0
    _report(
        "parallel-vs-successive",
        ok,
        f"par {bers['sicmrc-par']:.2e}, seq {bers['sicmrc-seq']:.2e}",
    )
    assert ok, bers


def test_desk_scale_convergence_trend():
    # Iterations improve sharply on the MRC-only initialization and the
    # five-path curve stays below the four-path curve.  A handful of frames
    # ping-pong between two estimate patterns once converged, so the tail is
    # only required to stay within a bounded band, not strictly monotone.
    curves = {}
    for p in (4, 5):
        cfg = harness.ExperimentConfig(
            scenario="p2p-dsk",
            detector="sicmrc-par",
            snr_db=(12.0,),
            max_iter=5,
            seed=85,
            **{**DESK, "p_u": p},
        )
        res = harness.run_convergence(cfg)
        curves[p] = [row[2] for row in res.rows if row[1] == "all"]  # error counts
    never_above_init = all(e <= c[0] for c in curves.values() for e in c)
    strong_first_step = all(c[1] <= 0.7 * c[0] and c[-1] <= 0.7 * c[0] for c in curves.values())
    tail_bounded = all(max(c[1:]) <= 1.25 * min(c[1:]) + 10 for c in curves.values())
    order_ok = all(p5 <= p4 for p4, p5 in zip(curves[4], curves[5]))
    ok = never_above_init and strong_first_step and tail_bounded and order_ok
    _report(
        "convergence-trend",
        ok,
        f"errors P=4 {curves[4]}, P=5 {curves[5]}",
    )
    assert ok, curves


# -- 9 -----------------------------------------------------------------------

@pytest.mark.skipif(
    not os.environ.get("DSKLINK_FULL"),
    reason="reference-scale spot check; set DSKLINK_FULL=1 to run (tens of minutes)",
)
def test_full_scale_multiuser_ber_spot_check():
    cfg = harness.ExperimentConfig(
        scenario="mu-dsk",
        detector="sicmrc-par",
        snr_db=(12.0,),
        n=64,
        m=256,
        l_max=10,
        k_u=8,
        p_u=5,
        frames=10000,
        max_iter=5,
        seed=9,
    )
    ber = _aggregate_ber(harness.run_ber(cfg))[12.0]
    ok = ber <= 7e-4
    _report("full-scale-mu-ber", ok, f"BER {ber:.2e} (reference order 7e-5, bound 7e-4)")
    assert ok, ber


# -- 10 ----------------------------------------------------------------------

def test_desk_scale_imperfect_csi_still_beats_bpsk():
    # Gain estimation error at -20 dB on the shift-keying side only; the
    # BPSK baseline keeps perfect channel knowledge.  The expected ordering
    # holds at M=256 (k_max=8), where inter-user Doppler leakage dominates
    # the FDMA baseline; at M=64 the derived Doppler bound is 2 and the two
    # measured curves tie, so this gate fails at desk scale.
    snrs = (8.0, 10.0, 12.0, 14.0)
    cfg_dsk = harness.ExperimentConfig(
        scenario="mu-dsk",
        detector="sicmrc-par",
        snr_db=snrs,
        k_u=8,
        csi_error_db=-20.0,
        seed=84,
        **{**DESK, "p_u": 4},
    )
    ber_dsk = _aggregate_ber(harness.run_ber(cfg_dsk))
    cfg_bpsk = harness.ExperimentConfig(
        scenario="mu-bpsk",
        detector="lmmse",
        snr_db=snrs,
        k_u=8,
        seed=84,
        **{**DESK, "p_u": 4},
    )
    ber_bpsk = _aggregate_ber(harness.run_ber(cfg_bpsk))
    ok = all(ber_dsk[s] < ber_bpsk[s] for s in snrs)
    detail = "; ".join(f"{s:g} dB: dsk {ber_dsk[s]:.2e} vs bpsk {ber_bpsk[s]:.2e}" for s in snrs)
    _report("imperfect-csi-ordering", ok, detail)
    assert ok, detail


# -- 11 ----------------------------------------------------------------------

def test_csv_bytes_identical_across_runs_and_thread_counts():
    base = dict(
        scenario="mu-dsk",
        detector="sicmrc-par",
        snr_db=(8.0, 12.0),
        n=32,
        m=32,
        l_max=5,
        k_u=2,
        p_u=3,
        frames=40,
        seed=12345,
    )
    ref = harness.run_ber(harness.ExperimentConfig(**base)).to_csv()
    rerun = harness.run_ber(harness.ExperimentConfig(**base)).to_csv()
    threaded = harness.run_ber(harness.ExperimentConfig(**base, jobs=8)).to_csv()
    papr_a = harness.run_papr(
        harness.ExperimentConfig(scenario="p2p-dsk", n=16, m=16, l_max=2, frames=25, seed=3)
    ).to_csv()
    papr_b = harness.run_papr(
        harness.ExperimentConfig(scenario="p2p-dsk", n=16, m=16, l_max=2, frames=25, seed=3, jobs=8)
    ).to_csv()
    ok = ref == rerun and ref == threaded and papr_a == papr_b
    _report("csv-determinism", ok, f"{len(ref.splitlines())} rows compared")
    assert ok

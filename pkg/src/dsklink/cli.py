"""Command-line front end for the Monte Carlo harness.

Subcommands: ``ber``, ``convergence``, ``papr``, ``roots``.  Options can come
from a flat key=value config file (--config); explicit flags override file
values.  Output is CSV to --out or stdout.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import asdict, fields

from . import harness


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="master RNG seed (64-bit)")
    p.add_argument("--frames", type=int, help="Monte Carlo frames")
    p.add_argument("--snr-db", help="comma-separated SNR list in dB (inf allowed)")
    p.add_argument("--users", type=int, dest="k_u", help="uplink user count K_u")
    p.add_argument("--paths", type=int, dest="p_u", help="channel taps per user P_u")
    p.add_argument("--speed-kmh", type=float, help="maximum UE speed in km/h")
    p.add_argument("--detector", choices=harness.DETECTORS)
    p.add_argument("--scenario", choices=harness.SCENARIOS)
    p.add_argument("--csi-error-db", type=float, help="gain estimation error variance in dB")
    p.add_argument("--max-iter", type=int, help="detector iteration cap")
    p.add_argument("--m0", type=int, dest="m_0", help="first sequence root")
    p.add_argument("--jobs", type=int, help="parallel frame workers")
    p.add_argument("--full", action="store_true", help="reference-scale preset (M=256, >=1e4 frames)")
    p.add_argument("--out", help="output CSV path (default: stdout)")


def build_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    values = asdict(harness.ExperimentConfig())
    if args.config:
        values.update(harness.parse_config_file(args.config))
    field_names = {f.name for f in fields(harness.ExperimentConfig)}
    for key, value in vars(args).items():
        if key in field_names and value is not None:
            values[key] = value
    if isinstance(values["snr_db"], str):
        values["snr_db"] = tuple(float(v) for v in values["snr_db"].split(","))
    values["snr_db"] = tuple(values["snr_db"])
    cfg = harness.ExperimentConfig(**values)
    if args.full:
        cfg = harness.full_scale(cfg)
    return cfg


def _emit(result: harness.ExperimentResult, out: str | None) -> None:
    if out:
        result.write_csv(out)
    else:
        sys.stdout.write(result.to_csv())


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="dsklink", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ber = sub.add_parser("ber", help="BER against SNR")
    _add_common(p_ber)

    p_conv = sub.add_parser("convergence", help="BER against detector iterations")
    _add_common(p_conv)

    p_papr = sub.add_parser("papr", help="PAPR CCDF of the transmit waveform")
    _add_common(p_papr)

    p_roots = sub.add_parser("roots", help="multi-user root allocation report")
    p_roots.add_argument("--users", type=int, required=True, dest="k_u")
    p_roots.add_argument("--n", type=int, default=64, help="sequence length N")
    p_roots.add_argument("--m0", type=int, default=1, dest="m_0")
    p_roots.add_argument("--verify", action="store_true", help="check against exhaustive search")
    p_roots.add_argument("--out", help="output CSV path (default: stdout)")

    args = parser.parse_args(argv)
    if args.command == "roots":
        result = harness.run_roots(args.k_u, args.n, args.m_0, verify=args.verify)
        _emit(result, args.out)
        return 0

    cfg = build_config(args)
    if args.command == "ber":
        result = harness.run_ber(cfg)
    elif args.command == "convergence":
        result = harness.run_convergence(cfg)
    else:
        result = harness.run_papr(cfg)
    _emit(result, args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

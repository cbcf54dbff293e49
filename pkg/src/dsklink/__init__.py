"""Doppler shift keying (DSK) over ODDM waveforms: link-level simulation toolkit.

Subpackages cover the full chain: grid parameters (`ddgrid`), waveform
synthesis (`modem`), doubly-dispersive channels (`channel`), Zadoff-Chu
basis sequences (`seqs`), bit mappers (`txmap`), detectors (`detect`) and
the Monte Carlo experiment harness (`harness`).
"""

from .ddgrid import FrameParams, PhysConfig, derive_params, doppler_bound

__all__ = ["FrameParams", "PhysConfig", "derive_params", "doppler_bound"]

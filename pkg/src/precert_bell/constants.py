"""Shared numerical tolerances, physical constants and parameter presets."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    norm: float = 1e-10
    unitarity: float = 1e-12
    psd: float = 1e-10
    hermitian: float = 1e-10
    lp_feasibility: float = 1e-9
    chsh_margin: float = 1e-9


TOL = Tolerances()

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact

# Feasibility estimate parameters for the proposed setup.
PAPER_RATE = {
    "R": 2e7,
    "mu_C_range": (2e-4, 1e-3),
    "eta_c_eta_t": 0.3,
    "eta_sspd": 0.1,
    "eta_k_eta_tes": 0.8,
    "stated_events_per_s": (0.002, 0.01),
    "stated_coincidences_per_hour": (10.0, 50.0),
    "stated_split_photon_rate": 1e4,
}

PAPER_WAVELENGTHS_NM = {"source": 716.0, "signal": 1310.0, "flag": 1550.0}

# Worst-case timing budget: SSPD jitter, QRNG latency, TES resolution, electronics.
PAPER_TIMING = {
    "flag_jitter_s": 100e-12,
    "qrng_latency_s": 10e-9,
    "tes_resolution_s": 100e-9,
    "electronics_margin_s": 1e-9,
}

PAPER_THRESHOLD_ANCHORS = ((0.01, 0.676), (0.04, 0.702))
EBERHARD_LIMIT = 2.0 / 3.0
MAX_ENTANGLED_THRESHOLD = 2.0 * (math.sqrt(2.0) - 1.0)

"""Off-grid sparse impulse recovery from low-frequency Fourier magnitudes.

The core relaxation lifts the unknown Fourier vector ``X`` to ``Q = X X^H``
and minimizes the squared atomic norm through a Toeplitz semidefinite
program; impulse times are then read off the Toeplitz generator with a
matrix pencil.
"""

from .experiment import ExperimentConfig, GridResult, recover_once, run_fig1, run_fig2
from .localization import RecoveryResult, extract_signal, time_error, toeplitz_vandermonde
from .measurement import HermitianBand, MeasurementSet, band_from_masks, random_measurements, theorem2_masks
from .recovery import phaselift, q_complete, solve_phaseless_anm, squared_atomic_norm, standard_anm
from .sdp import SdpProblem, SdpSolution, psd_project, solve, toeplitz_realize
from .signal import ImpulseSignal, atom, fourier_synthesize, min_separation, random_instance

__all__ = [
    "ImpulseSignal", "atom", "fourier_synthesize", "min_separation", "random_instance",
    "MeasurementSet", "HermitianBand", "theorem2_masks", "random_measurements", "band_from_masks",
    "SdpProblem", "SdpSolution", "solve", "psd_project", "toeplitz_realize",
    "solve_phaseless_anm", "squared_atomic_norm", "standard_anm", "phaselift", "q_complete",
    "RecoveryResult", "toeplitz_vandermonde", "extract_signal", "time_error",
    "ExperimentConfig", "GridResult", "run_fig1", "run_fig2", "recover_once",
]

"""Wideband direction-of-arrival estimation with time-frequency weighted criteria.

Submodules
----------
signals   STFT analysis, synthetic sources, WAV I/O
array     array geometry, steering vectors, azimuth grid
masks     oracle ratio masks, post-processing, TFW1 mask files
linalg    batched complex Hermitian Jacobi eigensolver
criteria  weighted SCMs and the MUSIC / principal / SRP / proposed spectra
room      image-source shoebox simulation and scenario rendering
harness   Monte-Carlo trials, sweeps and CSV reports
"""

from .array import AngleGrid, ArrayGeometry, angular_distance, build_steering_field, rect_array
from .criteria import (METHODS, compute_norm_scm, compute_spectrum, compute_wscm, estimate_doa,
                       spectrum_music, spectrum_principal, spectrum_proposed, spectrum_srp)
from .harness import ExperimentConfig, run_experiment, run_sweep
from .masks import MaskTensor, PostProc, oracle_irm, post_process
from .signals import SnapshotTensor, StftConfig, TimeSignal, compute_stft, stack_snapshots

__version__ = "0.1.0"

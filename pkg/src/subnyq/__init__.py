"""Joint DOA and carrier-frequency estimation behind a multi-coset sub-Nyquist array receiver."""

from .crb import (CrbInputs, coset_column_correlation, crb_frequency, crb_ny_phase, crb_sub_phase,
                  single_source_floor, steering_derivative)
from .estimators import EstimationResult, SourceEstimate, ml_phase, periodogram_ml_tone
from .frontend import (SamplingPattern, SnapshotSet, assemble_snapshots, modulation_matrix,
                       multicoset_sample, observe, reception_matrix)
from .harness import ExperimentConfig, SweepResult, rmse, run_sweep
from .signal_model import ArrayGeometry, Source, SourceEnsemble, spatial_phase, steering_vector, synthesize_nyquist
from .subspace import jdfsd
from .trilinear import RalsOptions, jdftd, rals_decompose

__version__ = "0.1.0"

"""ramanmem: desk-scale simulation of a Raman quantum memory for squeezed light.

The package covers the full signal chain: memory dynamics as a linear
input-output problem, the effective noisy Gaussian channel it induces,
write-pulse shaping by differential evolution, synthetic dual-pulse homodyne
data, and state reconstruction with channel-parameter estimation.
"""

from .gaussian import (ChannelParams, GaussianState, UncertaintyViolation,
                       apply_noisy_channel, bandwidth_to_fwhm, db_to_snu,
                       estimate_excess_noise, fwhm_to_bandwidth,
                       gaussian_fidelity, quadrature_variance, snu_to_db,
                       squeezed_vacuum_state, variance_curve)
from .homodyne import (BinnedVariances, HomodyneDataset, ModeExtractionError,
                       PhaseDriftModel, PhaseRecoveryError, TemporalMode,
                       VarianceFit, bin_variances, dataset_quadratures,
                       estimate_channel_noise, extract_temporal_mode,
                       fit_variance_curve, gaussian_temporal_mode,
                       load_dataset, matched_filter_quadrature, recover_phase,
                       save_dataset, simulate_dual_pulse_run)
from .memory import (ControlPulse, ConvergenceError, EfficiencyReport,
                     FieldState, MemoryParams, PowerSweepTable, ReadResult,
                     SolverAccuracyError, TransferMatrix, bogoliubov_channel,
                     field_energy, gaussian_envelope, grid_convergence_check,
                     memory_efficiency, normalized_mode, retrieval_power_sweep,
                     solve_read, solve_write, space_grid, spin_energy,
                     time_grid)
from .optimize import (DEConfig, FitnessError, GenerationRecord,
                       WritePulseGenes, de_optimize, gaussian_write_pulse,
                       write_fitness, write_fitness_population)
from .tomography import (DensityMatrix, QuadratureSample, gaussian_to_fock,
                         mle_reconstruct, quadrature_amplitudes,
                         uhlmann_fidelity, wigner_evaluate)

__version__ = "0.1.0"

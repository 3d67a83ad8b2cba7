"""Dual-pulse time-domain homodyne simulation and estimation chain.

Each trial measures one weak signal pulse against a scanned local oscillator
and, a fixed delay later, a bright companion pulse with the same envelope.
The companion's interference fringe tracks the LO phase, so a Hilbert
transform of the fringe sequence recovers the per-trial phase; the weak
pulse's photocurrent, matched-filtered with the temporal mode, yields the
quadrature sample.

Photocurrent synthesis uses an exact rank-1 replacement: each trace is white
vacuum noise with the matched-mode component replaced by a draw from the
signal statistics.  The matched filter is then exactly sufficient, and every
estimator downstream has a closed-form oracle.  Quadratures and variances
are in shot-noise units (vacuum = 1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as scipy_fft
from scipy.signal import lfilter

from .gaussian import GaussianState, quadrature_variance

__all__ = [
    "TemporalMode",
    "PhaseDriftModel",
    "HomodyneDataset",
    "PhaseRecovery",
    "BinnedVariances",
    "VarianceFit",
    "ModeExtractionError",
    "PhaseRecoveryError",
    "gaussian_temporal_mode",
    "simulate_dual_pulse_run",
    "matched_filter_quadrature",
    "dataset_quadratures",
    "extract_temporal_mode",
    "recover_phase",
    "bin_variances",
    "fit_variance_curve",
    "estimate_channel_noise",
    "save_dataset",
    "load_dataset",
]


class ModeExtractionError(RuntimeError):
    """Pointwise variance indistinguishable from the vacuum floor."""


class PhaseRecoveryError(RuntimeError):
    """Fringe sequence unusable for phase recovery."""


@dataclass(frozen=True)
class TemporalMode:
    """Normalized temporal envelope on a uniform grid, sum |u|^2 dt = 1."""

    samples: np.ndarray
    dt: float

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=float) \
            if not np.iscomplexobj(self.samples) else np.ascontiguousarray(self.samples)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError("mode samples must be 1-D")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        norm = float(np.sum(np.abs(samples) ** 2) * self.dt)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"mode must be normalized (sum |u|^2 dt = 1), got {norm:.6g}")

    @property
    def n_samples(self) -> int:
        return self.samples.size

    def overlap(self, other: "TemporalMode") -> float:
        """|<self, other>| with the dt-weighted inner product."""
        if other.n_samples != self.n_samples:
            raise ValueError("modes live on different grids")
        return float(abs(np.sum(np.conj(self.samples) * other.samples) * self.dt))


def _real_mode(mode: TemporalMode) -> np.ndarray:
    """Real envelope of a mode; photocurrent traces are real-valued."""
    samples = mode.samples
    if np.iscomplexobj(samples):
        if np.max(np.abs(samples.imag)) > 1e-12 * max(np.max(np.abs(samples)), 1.0):
            raise ValueError(
                "photocurrent synthesis and matched filtering need a real "
                "temporal mode; strip the global phase first"
            )
        samples = samples.real
    return np.asarray(samples, dtype=float)


def gaussian_temporal_mode(n_samples: int, duration: float, center: float,
                           fwhm: float) -> TemporalMode:
    """Normalized Gaussian mode on a bin-centered grid over [0, duration]."""
    dt = duration / n_samples
    t = (np.arange(n_samples) + 0.5) * dt
    u = np.exp(-4.0 * math.log(2.0) * (t - center) ** 2 / fwhm**2)
    u /= math.sqrt(float(np.sum(u**2) * dt))
    return TemporalMode(u, dt)


@dataclass(frozen=True)
class PhaseDriftModel:
    """Ornstein-Uhlenbeck LO phase drift.

    ``bandwidth_hz`` is the 3 dB bandwidth of the drift spectrum and
    ``sigma_rad`` its stationary standard deviation.  ``bandwidth_hz = 0``
    or ``sigma_rad = 0`` disables drift.
    """

    bandwidth_hz: float = 1.0e5
    sigma_rad: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.bandwidth_hz < 0:
            raise ValueError(f"bandwidth must be >= 0, got {self.bandwidth_hz}")
        if self.sigma_rad < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma_rad}")

    def sample_with_companion(self, n: int, period_s: float, delay_s: float, rng):
        """Drift at the n trial times plus its value delay_s later per trial."""
        if self.sigma_rad == 0.0 or self.bandwidth_hz == 0.0:
            z = np.zeros(n)
            return z, z.copy()
        lam = 2.0 * math.pi * self.bandwidth_hz
        rho = math.exp(-lam * period_s)
        # AR(1) recurrence x_i = rho x_{i-1} + c xi_i as an IIR filter
        innov = self.sigma_rad * math.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
        innov[0] = self.sigma_rad * rng.standard_normal()
        drift = lfilter([1.0], [1.0, -rho], innov)
        rho_d = math.exp(-lam * delay_s)
        companion = rho_d * drift + self.sigma_rad * math.sqrt(1.0 - rho_d**2) \
            * rng.standard_normal(n)
        return drift, companion


@dataclass
class HomodyneDataset:
    """Per-trial homodyne records sharing one time grid.

    ``photocurrents`` holds SNU-normalized traces (n_trials, n_samples) or
    None when the run stored only matched-filter outputs.  ``quadratures``
    are the matched-filter values of the synthesis mode (identical to
    filtering the stored traces).  ``phases_recovered`` comes from the
    companion-fringe Hilbert chain; ``theta_true`` keeps the simulation's
    ground-truth LO phases for oracle checks.
    """

    mode: TemporalMode
    fringes: np.ndarray
    quadratures: np.ndarray
    seed: int
    photocurrents: np.ndarray | None = None
    phases_recovered: np.ndarray | None = None
    theta_true: np.ndarray | None = None
    electronic_noise_var: float = 0.0
    bright_amplitude: float = 1.0
    drift: PhaseDriftModel | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def n_trials(self) -> int:
        return self.fringes.size

    def phases(self) -> np.ndarray:
        """Recovered phases when available, else the ground truth."""
        if self.phases_recovered is not None:
            return self.phases_recovered
        if self.theta_true is not None:
            return self.theta_true
        raise ValueError("dataset carries no phase information")


def simulate_dual_pulse_run(state: GaussianState, mode: TemporalMode, n_trials: int,
                            drift: PhaseDriftModel | None = None,
                            bright_amplitude: float = 5.0,
                            electronic_noise_var: float = 0.0, *,
                            seed: int,
                            scan_cycles: float | None = None,
                            locked_phase: float | None = None,
                            trial_period_s: float = 50e-6,
                            companion_delay_s: float = 500e-9,
                            store_photocurrents: bool = True,
                            recover: bool = True) -> HomodyneDataset:
    """Synthesize a dual-pulse homodyne run of a zero-mean Gaussian state.

    Per trial i with LO phase theta_i (linear scan plus drift) a quadrature
    q_i ~ Normal(0, V(theta_i)) is drawn and embedded into a white-noise
    trace via the rank-1 replacement  y = w + (q - <w, u>) u  so the matched
    filter returns exactly q_i.  The companion fringe is
    ``A * cos(theta_scan_i + drift(t_i + delay))``; the drift accumulated
    over the delay is simulated and must stay negligible (std below 0.2 rad)
    for the dual-pulse phase reference to be meaningful.

    Parameters
    ----------
    locked_phase : float, optional
        Hold the LO at a fixed phase instead of scanning (phase recovery is
        skipped; the ground-truth phases remain available).
    scan_cycles : float, optional
        Number of full 2 pi scan cycles across the run (default keeps at
        least 2 cycles and roughly 256 trials per cycle).
    store_photocurrents : bool
        When False only fringes/quadratures are stored; estimator chains
        that never look at raw traces can skip the trace synthesis.
    recover : bool
        Run fringe phase recovery and store the result (scanned runs only).
    """
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    if bright_amplitude <= 0:
        raise ValueError(f"bright_amplitude must be positive, got {bright_amplitude}")
    if electronic_noise_var < 0:
        raise ValueError(f"electronic noise variance must be >= 0, got {electronic_noise_var}")
    drift = drift if drift is not None else PhaseDriftModel(bandwidth_hz=0.0, sigma_rad=0.0)
    rng = np.random.default_rng(seed)
    drift_rng = np.random.default_rng(drift.seed)

    if locked_phase is not None:
        theta_scan = np.full(n_trials, float(locked_phase))
    else:
        if scan_cycles is None:
            scan_cycles = max(2.0, n_trials / 256.0)
        theta_scan = 2.0 * math.pi * scan_cycles * np.arange(n_trials) / n_trials

    drift_sig, drift_comp = drift.sample_with_companion(
        n_trials, trial_period_s, companion_delay_s, drift_rng)
    delay_err_std = float(np.std(drift_comp - drift_sig))
    if delay_err_std > 0.2:
        raise ValueError(
            f"phase drift over the companion delay has std {delay_err_std:.3g} rad; "
            "the dual-pulse phase reference is no longer trustworthy"
        )
    theta = theta_scan + drift_sig
    fringes = bright_amplitude * np.cos(theta_scan + drift_comp)

    variances = quadrature_variance(state, theta)
    q = rng.standard_normal(n_trials) * np.sqrt(variances)

    u = _real_mode(mode)
    dt = mode.dt
    photocurrents = None
    if store_photocurrents:
        w = rng.standard_normal((n_trials, mode.n_samples)) / math.sqrt(dt)
        p = w @ (u * dt)
        photocurrents = w + np.outer(q - p, u)
        if electronic_noise_var > 0:
            photocurrents = photocurrents + (
                math.sqrt(electronic_noise_var) / math.sqrt(dt)
            ) * rng.standard_normal((n_trials, mode.n_samples))
            quadratures = photocurrents @ (np.real(u) * dt)
        else:
            quadratures = q
    else:
        quadratures = q.copy()
        if electronic_noise_var > 0:
            quadratures = quadratures + math.sqrt(electronic_noise_var) \
                * rng.standard_normal(n_trials)

    phases_recovered = None
    if recover and locked_phase is None:
        phases_recovered = recover_phase(fringes).phases

    return HomodyneDataset(
        mode=mode,
        fringes=fringes,
        quadratures=np.asarray(quadratures, dtype=float),
        seed=seed,
        photocurrents=photocurrents,
        phases_recovered=phases_recovered,
        theta_true=theta,
        electronic_noise_var=electronic_noise_var,
        bright_amplitude=bright_amplitude,
        drift=drift,
        metadata={
            "state": {"v_min": state.v_min, "v_max": state.v_max, "theta0": state.theta0},
            "locked_phase": locked_phase,
            "scan_cycles": scan_cycles if locked_phase is None else None,
            "trial_period_s": trial_period_s,
            "companion_delay_s": companion_delay_s,
            "companion_phase_error_std": delay_err_std,
        },
    )


def matched_filter_quadrature(photocurrent, mode: TemporalMode):
    """Project photocurrent trace(s) onto the temporal mode, q = sum y u dt.

    The synthesis normalization makes vacuum give unit variance.  Accepts a
    single trace or a (n_trials, n_samples) stack.
    """
    y = np.asarray(photocurrent, dtype=float)
    if y.shape[-1] != mode.n_samples:
        raise ValueError(
            f"trace length {y.shape[-1]} does not match the mode grid ({mode.n_samples})"
        )
    return y @ (_real_mode(mode) * mode.dt)


def dataset_quadratures(dataset: HomodyneDataset, mode: TemporalMode | None = None):
    """Matched-filter quadratures of a dataset.

    With stored photocurrents any mode may be applied; otherwise the stored
    quadratures of the synthesis mode are returned and ``mode`` must be None
    or match it.
    """
    if dataset.photocurrents is not None:
        return matched_filter_quadrature(dataset.photocurrents,
                                         mode if mode is not None else dataset.mode)
    if mode is not None and mode.overlap(dataset.mode) < 1.0 - 1e-9:
        raise ValueError("dataset stored no traces; only the synthesis mode is available")
    return dataset.quadratures


def extract_temporal_mode(dataset: HomodyneDataset, significance: float = 5.0):
    """Estimate the temporal mode from the pointwise photocurrent variance.

    Requires a run at (approximately) fixed LO phase, ideally at the
    anti-squeezed extremum where the variance contrast is largest.  The
    estimate is sqrt(|pointwise variance - vacuum floor|), rectified to the
    positive branch and normalized.

    Returns
    -------
    (TemporalMode, float)
        The estimated mode and its overlap |<u_est, u_true>|.

    Raises
    ------
    ModeExtractionError
        If the variance is statistically indistinguishable from the floor.
    """
    if dataset.photocurrents is None:
        raise ValueError("mode extraction needs stored photocurrent traces")
    y = dataset.photocurrents
    n = y.shape[0]
    if n < 1000:
        raise ValueError(f"mode extraction needs >= 1000 trials, got {n}")
    if dataset.theta_true is not None and float(np.std(dataset.theta_true)) > 0.3:
        raise ValueError(
            "mode extraction needs an (approximately) locked LO phase; "
            "this dataset was scanned"
        )
    dt = dataset.mode.dt
    floor = (1.0 + dataset.electronic_noise_var) / dt
    pv = np.var(y, axis=0, ddof=1)
    excess = pv - floor
    fluct = floor * math.sqrt(2.0 / n)
    if np.max(np.abs(excess)) < significance * fluct:
        raise ModeExtractionError(
            "pointwise variance is indistinguishable from the vacuum floor "
            f"(max excess {np.max(np.abs(excess)):.3g} vs threshold {significance * fluct:.3g})"
        )
    est = np.sqrt(np.abs(excess))
    est /= math.sqrt(float(np.sum(est**2) * dt))
    mode = TemporalMode(est, dt)
    return mode, mode.overlap(dataset.mode)


def _analytic_signal(f: np.ndarray) -> np.ndarray:
    """FFT-based analytic signal f + i H[f], padded to a fast FFT length."""
    n = f.size
    nf = scipy_fft.next_fast_len(n)
    spec = scipy_fft.fft(f, nf)
    gain = np.zeros(nf)
    if nf % 2 == 0:
        gain[0] = gain[nf // 2] = 1.0
        gain[1:nf // 2] = 2.0
    else:
        gain[0] = 1.0
        gain[1:(nf + 1) // 2] = 2.0
    return scipy_fft.ifft(spec * gain)[:n]


@dataclass
class PhaseRecovery:
    """Unwrapped phases plus a low-confidence mask for the window edges."""

    phases: np.ndarray
    low_confidence: np.ndarray


def recover_phase(fringes, edge_fraction: float = 0.1) -> PhaseRecovery:
    """Recover the LO phase sequence from companion-pulse fringes.

    Builds the analytic signal of the fringe sequence with an FFT-based
    Hilbert transform and takes the unwrapped four-quadrant angle,
    phi = angle(f + i H[f]).  The first and last ``edge_fraction`` of the
    window are flagged low-confidence (Hilbert edge effects).

    Raises
    ------
    PhaseRecoveryError
        For near-constant fringes (phase undefined) or scans covering less
        than one full 2 pi cycle.
    """
    f = np.asarray(fringes, dtype=float)
    if f.ndim != 1 or f.size < 16:
        raise ValueError("fringe sequence must be 1-D with at least 16 points")
    if not np.all(np.isfinite(f)):
        raise ValueError("fringes must be finite")
    centered = f - np.mean(f)
    amp = np.max(np.abs(centered))
    if amp < 1e-12 * max(1.0, np.max(np.abs(f))) or amp == 0.0:
        raise PhaseRecoveryError("fringe amplitude is near zero; phase undefined")
    analytic = _analytic_signal(centered)
    phases = np.unwrap(np.angle(analytic))
    if np.ptp(phases) < 2.0 * math.pi * 0.95:
        raise PhaseRecoveryError(
            f"fringe scan spans only {np.ptp(phases):.3g} rad; need a full 2 pi cycle"
        )
    edge = max(1, int(round(edge_fraction * f.size)))
    mask = np.zeros(f.size, dtype=bool)
    mask[:edge] = True
    mask[-edge:] = True
    return PhaseRecovery(phases=phases, low_confidence=mask)


@dataclass
class BinnedVariances:
    """Phase-binned quadrature variances over a pi-period scan."""

    centers: np.ndarray
    variances: np.ndarray
    counts: np.ndarray
    low_count: np.ndarray

    def as_curve(self) -> np.ndarray:
        """(N, 2) rows (theta_center, variance) for channel estimation."""
        return np.column_stack([self.centers, self.variances])


def bin_variances(quadratures, phases, n_bins: int) -> BinnedVariances:
    """Unbiased sample variance per phase bin, phases reduced mod pi.

    Bins with fewer than 10 samples are flagged; bins with fewer than 2
    samples give NaN variance.
    """
    if n_bins < 4:
        raise ValueError(f"need at least 4 bins, got {n_bins}")
    q = np.asarray(quadratures, dtype=float)
    ph = np.mod(np.asarray(phases, dtype=float), math.pi)
    if q.size == 0 or ph.size == 0:
        raise ValueError("empty scan: no samples to bin")
    if q.shape != ph.shape:
        raise ValueError("quadratures and phases must have equal length")
    idx = np.clip((ph / math.pi * n_bins).astype(int), 0, n_bins - 1)
    centers = (np.arange(n_bins) + 0.5) * math.pi / n_bins
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=q, minlength=n_bins)
    sqsums = np.bincount(idx, weights=q * q, minlength=n_bins)
    variances = np.full(n_bins, np.nan)
    ok = counts >= 2
    mean = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    variances[ok] = (sqsums[ok] - counts[ok] * mean[ok] ** 2) / (counts[ok] - 1)
    return BinnedVariances(centers=centers, variances=variances, counts=counts,
                           low_count=counts < 10)


@dataclass
class VarianceFit:
    """Least-squares fit of V(theta) = v_x cos^2(theta - theta0) + v_p sin^2(theta - theta0).

    ``theta0`` points at the fitted variance minimum ``v_x``; ``v_p`` is the
    orthogonal maximum.
    """

    v_x: float
    v_p: float
    theta0: float
    residual_rms: float


def fit_variance_curve(binned: BinnedVariances) -> VarianceFit:
    """Fit the two-variance model to binned data (count-weighted least squares)."""
    valid = (binned.counts >= 2) & np.isfinite(binned.variances)
    if np.count_nonzero(valid) < 4:
        raise ValueError(f"need at least 4 valid bins, got {np.count_nonzero(valid)}")
    th = binned.centers[valid]
    v = binned.variances[valid]
    wgt = np.sqrt(binned.counts[valid].astype(float))
    design = np.column_stack([np.ones_like(th), np.cos(2 * th), np.sin(2 * th)])
    a_mat = design * wgt[:, None]
    rhs = v * wgt
    coeff, _, rank, _ = np.linalg.lstsq(a_mat, rhs, rcond=None)
    if rank < 3:
        raise ValueError("rank-deficient fit: phase bins do not span the scan")
    base, cb, cs = coeff
    r = math.hypot(cb, cs)
    phi = math.atan2(cs, cb)
    theta0 = ((phi + math.pi) / 2.0) % math.pi
    resid = design @ coeff - v
    return VarianceFit(v_x=base - r, v_p=base + r, theta0=theta0,
                       residual_rms=float(np.sqrt(np.mean(resid**2))))


def estimate_channel_noise(state_in: GaussianState, state_out: GaussianState, eta: float,
                           n_bins: int, trials_per_bin: int, *, seed: int,
                           drift: PhaseDriftModel | None = None,
                           use_recovered_phases: bool = True) -> float:
    """Monte Carlo closure of the phase-averaged excess-noise estimator.

    Simulates scanned homodyne runs of the input and output states (direct
    quadrature path), recovers phases from the companion fringes, bins both
    runs on the same pi-period grid and evaluates the phase-averaged
    estimator with the known transmission.
    """
    from .gaussian import estimate_excess_noise

    n_trials = n_bins * trials_per_bin
    mode = gaussian_temporal_mode(32, 1.0, 0.5, 0.3)
    curves = []
    for offset, st in ((0, state_in), (1, state_out)):
        sub = int(np.random.SeedSequence([seed, offset]).generate_state(1)[0])
        d = drift
        if d is not None:
            d = PhaseDriftModel(d.bandwidth_hz, d.sigma_rad, seed=sub)
        ds = simulate_dual_pulse_run(st, mode, n_trials, drift=d, seed=sub,
                                     store_photocurrents=False,
                                     recover=use_recovered_phases)
        phases = ds.phases() if use_recovered_phases else ds.theta_true
        curves.append(bin_variances(ds.quadratures, phases, n_bins).as_curve())
    return estimate_excess_noise(curves[0], curves[1], eta)


# ---------------------------------------------------------------------------
# persistence


def save_dataset(dataset: HomodyneDataset, directory):
    """Persist a dataset as metadata.json plus a binary array bundle."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "seed": dataset.seed,
        "electronic_noise_var": dataset.electronic_noise_var,
        "bright_amplitude": dataset.bright_amplitude,
        "drift": None if dataset.drift is None else {
            "bandwidth_hz": dataset.drift.bandwidth_hz,
            "sigma_rad": dataset.drift.sigma_rad,
            "seed": dataset.drift.seed,
        },
        "mode_dt": dataset.mode.dt,
        "n_trials": int(dataset.n_trials),
        "has_photocurrents": dataset.photocurrents is not None,
        "metadata": dataset.metadata,
    }
    with open(directory / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    arrays = {
        "mode_samples": np.asarray(dataset.mode.samples),
        "fringes": dataset.fringes,
        "quadratures": dataset.quadratures,
    }
    if dataset.photocurrents is not None:
        arrays["photocurrents"] = dataset.photocurrents
    if dataset.phases_recovered is not None:
        arrays["phases_recovered"] = dataset.phases_recovered
    if dataset.theta_true is not None:
        arrays["theta_true"] = dataset.theta_true
    np.savez(directory / "arrays.npz", **arrays)


def load_dataset(directory) -> HomodyneDataset:
    """Exact round-trip loader for :func:`save_dataset`."""
    directory = Path(directory)
    with open(directory / "metadata.json") as fh:
        meta = json.load(fh)
    bundle = np.load(directory / "arrays.npz")
    drift = None
    if meta["drift"] is not None:
        drift = PhaseDriftModel(**meta["drift"])
    return HomodyneDataset(
        mode=TemporalMode(bundle["mode_samples"], meta["mode_dt"]),
        fringes=bundle["fringes"],
        quadratures=bundle["quadratures"],
        seed=meta["seed"],
        photocurrents=bundle["photocurrents"] if "photocurrents" in bundle else None,
        phases_recovered=bundle["phases_recovered"] if "phases_recovered" in bundle else None,
        theta_true=bundle["theta_true"] if "theta_true" in bundle else None,
        electronic_noise_var=meta["electronic_noise_var"],
        bright_amplitude=meta["bright_amplitude"],
        drift=drift,
        metadata=meta["metadata"],
    )

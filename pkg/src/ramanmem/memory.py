"""Raman-memory dynamics: write/read propagation and the effective channel.

The co-moving-frame model couples a signal field ``a_s(z, t)``, the conjugate
of a parasitic anti-Stokes field ``a_a^+(z, t)`` and a collective spin wave
``s(z, t)`` through a control pulse of Rabi envelope ``Omega(t)``:

    d a_s / dz   = i g_s Omega(t) s
    d a_a^+ / dz =   g_a Omega(t) s e^{+i dk z}
    d s / dt     = i g_s Omega*(t) a_s + g_a Omega*(t) a_a^+ e^{-i dk z}

The signal-spin sector is a pure beam splitter; the anti-Stokes sector is a
two-mode-squeezer (amplifier) channel.  The combined flow preserves the
indefinite excitation balance  (signal flux) + (spin) - (anti-Stokes flux).
The widely printed variant of these equations with both signal couplings
real-positive is not passive; the relative phases used here are fixed so the
``g_a = 0`` system conserves excitation exactly, which is the physically
required beam-splitter behavior.

Discretization: bin-centered grids in z and t; each (t_k, z_i) cell applies
the closed-form exponential of the local 3x3 generator to the triple
(signal bin, anti-Stokes bin, spin bin).  Every cell map preserves the
Bogoliubov form exactly, so excitation conservation and commutator
preservation hold to machine precision at any resolution; grid size only
affects how well the lattice approximates the continuum values.

Units: the medium length and the write window set the length and time units
(L = 1, T = 1), so couplings are quoted as dimensionless products
``g * Omega_peak * L``.  Field bins carry ``a(t_k) * sqrt(dt)`` and spin bins
``s(z_i) * sqrt(dz)``, making all energies plain sums of |bin|^2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .gaussian import ChannelParams

__all__ = [
    "MemoryParams",
    "ControlPulse",
    "FieldState",
    "ReadResult",
    "EfficiencyReport",
    "TransferMatrix",
    "PowerSweepTable",
    "ConvergenceError",
    "SolverAccuracyError",
    "time_grid",
    "space_grid",
    "gaussian_envelope",
    "normalized_mode",
    "field_energy",
    "spin_energy",
    "solve_write",
    "solve_read",
    "memory_efficiency",
    "bogoliubov_channel",
    "retrieval_power_sweep",
    "grid_convergence_check",
    "transfer_matrix_to_csv",
    "sweep_table_to_csv",
]

COMMUTATOR_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Grid-convergence failure: results change too much under refinement."""


class SolverAccuracyError(RuntimeError):
    """Commutator preservation violated beyond tolerance."""


@dataclass(frozen=True)
class MemoryParams:
    """Static configuration of the memory medium and solver grids.

    Parameters
    ----------
    g_s : float
        Signal-spin coupling, dimensionless product g_s * Omega_unit * L.
    g_a : float
        Anti-Stokes-spin coupling (four-wave-mixing strength), >= 0.
    delta_k : float
        Phase mismatch in units of 1/L.
    length : float
        Medium length (1.0 in the dimensionless convention).
    n_z, n_t : int
        Spatial grid cells and temporal bins per stage, both >= 16.
    retrieval : str
        'forward' or 'backward' read geometry.
    """

    g_s: float
    g_a: float = 0.0
    delta_k: float = 0.0
    length: float = 1.0
    n_z: int = 128
    n_t: int = 128
    retrieval: str = "backward"

    def __post_init__(self):
        if self.g_s <= 0:
            raise ValueError(f"g_s must be positive, got {self.g_s}")
        if self.g_a < 0:
            raise ValueError(f"g_a must be >= 0, got {self.g_a}")
        if self.length <= 0:
            raise ValueError(f"length must be positive, got {self.length}")
        if self.n_z < 16 or self.n_t < 16:
            raise ValueError(f"grids need n_z, n_t >= 16, got {self.n_z}, {self.n_t}")
        if self.retrieval not in ("forward", "backward"):
            raise ValueError(f"retrieval must be 'forward' or 'backward', got {self.retrieval!r}")

    def refined(self, factor: int = 2) -> "MemoryParams":
        """Copy with both grids refined by an integer factor."""
        return MemoryParams(
            g_s=self.g_s,
            g_a=self.g_a,
            delta_k=self.delta_k,
            length=self.length,
            n_z=self.n_z * factor,
            n_t=self.n_t * factor,
            retrieval=self.retrieval,
        )


@dataclass(frozen=True)
class ControlPulse:
    """Complex Rabi envelope Omega(t_k) sampled on bin centers of one stage window."""

    samples: np.ndarray
    duration: float = 1.0

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=complex)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1:
            raise ValueError("pulse samples must be a 1-D array")
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("pulse samples must be finite")

    @property
    def n_t(self) -> int:
        return self.samples.size

    @property
    def dt(self) -> float:
        return self.duration / self.samples.size

    @property
    def energy(self) -> float:
        """Integrated |Omega|^2 dt."""
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)

    def scaled(self, amplitude_factor: float) -> "ControlPulse":
        return ControlPulse(self.samples * amplitude_factor, self.duration)

    def resampled(self, n_t: int) -> "ControlPulse":
        """Cubic resampling onto an n_t-bin grid of the same duration."""
        t_old = time_grid(self.n_t, self.duration)
        t_new = time_grid(n_t, self.duration)
        if np.iscomplexobj(self.samples) and np.any(self.samples.imag != 0):
            spline_re = CubicSpline(t_old, self.samples.real)
            spline_im = CubicSpline(t_old, self.samples.imag)
            new = spline_re(t_new) + 1j * spline_im(t_new)
        else:
            new = CubicSpline(t_old, self.samples.real)(t_new).astype(complex)
        return ControlPulse(new, self.duration)


@dataclass
class FieldState:
    """Propagated fields over the (z, t) grid plus the stage-final spin wave.

    ``a_s`` and ``a_a_dag`` hold field samples (not bins) indexed [z, t];
    ``spin`` is the spin-wave profile over z at the end of the stage.
    """

    a_s: np.ndarray
    a_a_dag: np.ndarray
    spin: np.ndarray
    dt: float
    dz: float

    @property
    def transmitted(self) -> np.ndarray:
        """Signal time series at the exit face."""
        return self.a_s[-1, :]

    @property
    def anti_stokes_out(self) -> np.ndarray:
        """Conjugate anti-Stokes time series at the exit face."""
        return self.a_a_dag[-1, :]


@dataclass
class ReadResult:
    """Retrieved temporal envelope (samples) and residual spin wave (lab frame)."""

    envelope: np.ndarray
    residual_spin: np.ndarray
    fields: FieldState


@dataclass
class EfficiencyReport:
    """Write/read/total energy ratios.  Values may exceed 1 under FWM gain."""

    eta_write: float
    eta_read: float
    eta_total: float
    fwm_gain: bool

    def as_tuple(self):
        return (self.eta_write, self.eta_read, self.eta_total)


# ---------------------------------------------------------------------------
# grids and envelopes


def time_grid(n_t: int, duration: float = 1.0) -> np.ndarray:
    """Bin-centered time grid of n_t points on [0, duration]."""
    dt = duration / n_t
    return (np.arange(n_t) + 0.5) * dt


def space_grid(n_z: int, length: float = 1.0) -> np.ndarray:
    """Bin-centered space grid of n_z points on [0, length]."""
    dz = length / n_z
    return (np.arange(n_z) + 0.5) * dz


def gaussian_envelope(t, center, fwhm):
    """Unit-peak Gaussian, exp(-4 ln2 (t - center)^2 / fwhm^2)."""
    return np.exp(-4.0 * math.log(2.0) * (np.asarray(t) - center) ** 2 / fwhm**2)


def normalized_mode(samples, dt: float) -> np.ndarray:
    """Normalize samples so that sum |u|^2 dt = 1."""
    samples = np.asarray(samples, dtype=complex)
    norm = math.sqrt(float(np.sum(np.abs(samples) ** 2) * dt))
    if norm == 0:
        raise ValueError("cannot normalize an all-zero mode")
    return samples / norm


def field_energy(samples, dt: float) -> float:
    return float(np.sum(np.abs(np.asarray(samples)) ** 2) * dt)


def spin_energy(profile, dz: float) -> float:
    return float(np.sum(np.abs(np.asarray(profile)) ** 2) * dz)


# ---------------------------------------------------------------------------
# lattice core


def _cell_coefficients(params: MemoryParams, omega_samples, dt: float):
    """Entries of the per-cell 3x3 symplectic map exp(G).

    G = [[0, 0, i*u], [0, 0, v], [i*u*, v*, 0]] with
    u = g_s * Omega_k * sqrt(dz dt), v = g_a * Omega_k * e^{i dk z_i} * sqrt(dz dt).
    G^3 = kappa^2 G with kappa^2 = |v|^2 - |u|^2, so
    exp(G) = I + G * sinh(kappa)/kappa + G^2 * (cosh(kappa) - 1)/kappa^2,
    which turns trigonometric for kappa^2 < 0 (beam-splitter-dominated cells).

    Returns nine arrays of shape (n_t, n_z) or (n_t, n_z, P) when the pulse
    samples carry a trailing population axis.
    """
    om = np.asarray(omega_samples, dtype=complex)
    batched = om.ndim == 2
    dz = params.length / params.n_z
    z = space_grid(params.n_z, params.length)
    scale = math.sqrt(dz * dt)
    if batched:
        om_k = om[:, None, :]  # (n_t, 1, P)
        z_phase = np.exp(1j * params.delta_k * z)[None, :, None]
    else:
        om_k = om[:, None]  # (n_t, 1)
        z_phase = np.exp(1j * params.delta_k * z)[None, :]
    u = params.g_s * om_k * scale * np.ones_like(z_phase)
    v = params.g_a * om_k * z_phase * scale
    u2 = np.abs(u) ** 2
    v2 = np.abs(v) ** 2
    k2 = v2 - u2
    kap = np.sqrt(np.abs(k2))
    sig = np.empty_like(k2)
    gam = np.empty_like(k2)
    pos = k2 > 1e-24
    neg = k2 < -1e-24
    small = ~(pos | neg)
    sig[pos] = np.sinh(kap[pos]) / kap[pos]
    gam[pos] = (np.cosh(kap[pos]) - 1.0) / k2[pos]
    sig[neg] = np.sin(kap[neg]) / kap[neg]
    gam[neg] = (1.0 - np.cos(kap[neg])) / (-k2[neg])
    sig[small] = 1.0 + k2[small] / 6.0
    gam[small] = 0.5 + k2[small] / 24.0
    iu = 1j * u
    return (
        1.0 - gam * u2,            # signal <- signal
        gam * iu * np.conj(v),     # signal <- anti
        sig * iu,                  # signal <- spin
        gam * 1j * np.conj(u) * v, # anti <- signal
        1.0 + gam * v2,            # anti <- anti
        sig * v,                   # anti <- spin
        sig * 1j * np.conj(u),     # spin <- signal
        sig * np.conj(v),          # spin <- anti
        1.0 + gam * k2,            # spin <- spin (cosh kappa)
    )


def _sweep(coeffs, sig_in, anti_in, spin0, record_fields=False):
    """March all time bins through the cell lattice.

    sig_in, anti_in: (n_t, P) boundary bins at z = 0; spin0: (n_z, P).
    Returns exit-face bins (n_t, P), final spin (n_z, P), and optionally the
    full bin-valued fields over (n_z, n_t, P).
    """
    c_ss, c_sa, c_sp, c_as, c_aa, c_ap, c_ps, c_pa, c_pp = coeffs
    n_t, n_z = c_ss.shape[:2]
    spin = spin0.copy()
    sig_out = np.empty_like(sig_in)
    anti_out = np.empty_like(anti_in)
    rec_s = rec_a = None
    if record_fields:
        rec_s = np.empty((n_z, n_t) + sig_in.shape[1:], dtype=complex)
        rec_a = np.empty_like(rec_s)
    for k in range(n_t):
        a = sig_in[k].copy()
        b = anti_in[k].copy()
        kss, ksa, ksp = c_ss[k], c_sa[k], c_sp[k]
        kas, kaa, kap_ = c_as[k], c_aa[k], c_ap[k]
        kps, kpa, kpp = c_ps[k], c_pa[k], c_pp[k]
        for i in range(n_z):
            si = spin[i]
            a_new = kss[i] * a + ksa[i] * b + ksp[i] * si
            b_new = kas[i] * a + kaa[i] * b + kap_[i] * si
            spin[i] = kps[i] * a + kpa[i] * b + kpp[i] * si
            a = a_new
            b = b_new
            if record_fields:
                rec_s[i, k] = a
                rec_a[i, k] = b
        sig_out[k] = a
        anti_out[k] = b
    return sig_out, anti_out, spin, rec_s, rec_a


def _check_mode(params: MemoryParams, pulse: ControlPulse, mode, name="input_mode"):
    mode = np.asarray(mode, dtype=complex)
    if mode.shape != (params.n_t,):
        raise ValueError(
            f"{name} must have {params.n_t} samples to match the grid, got {mode.shape}"
        )
    norm = float(np.sum(np.abs(mode) ** 2) * pulse.dt)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"{name} must be normalized (sum |u|^2 dt = 1), got {norm:.6g}")
    return mode


def _check_pulse(params: MemoryParams, pulse: ControlPulse):
    if pulse.n_t != params.n_t:
        raise ValueError(
            f"pulse has {pulse.n_t} samples but the grid expects {params.n_t}"
        )


def solve_write(params: MemoryParams, omega_w: ControlPulse, input_mode,
                check_convergence: bool = False, convergence_tol: float = 0.005) -> FieldState:
    """Propagate an input signal mode through the write stage.

    Parameters
    ----------
    params : MemoryParams
    omega_w : ControlPulse
        Write-pulse Rabi envelope on the stage grid.
    input_mode : array_like
        Normalized complex temporal envelope of the incoming signal
        (sum |u|^2 dt = 1) on the same grid.
    check_convergence : bool
        When set, repeat the solve on a doubled grid and raise
        :class:`ConvergenceError` if the stored energy changes by more than
        ``convergence_tol`` (relative).

    Returns
    -------
    FieldState
        Full fields over (z, t); ``.transmitted`` is the unstored signal and
        ``.spin`` the spin wave written into the medium.
    """
    _check_pulse(params, omega_w)
    u = _check_mode(params, omega_w, input_mode)
    dt = omega_w.dt
    dz = params.length / params.n_z
    coeffs = _cell_coefficients(params, omega_w.samples, dt)
    sig_in = (u * math.sqrt(dt))[:, None]
    anti_in = np.zeros_like(sig_in)
    spin0 = np.zeros((params.n_z, 1), dtype=complex)
    sig_out, anti_out, spin, rec_s, rec_a = _sweep(coeffs, sig_in, anti_in, spin0,
                                                   record_fields=True)
    state = FieldState(
        a_s=rec_s[:, :, 0] / math.sqrt(dt),
        a_a_dag=rec_a[:, :, 0] / math.sqrt(dt),
        spin=spin[:, 0] / math.sqrt(dz),
        dt=dt,
        dz=dz,
    )
    if check_convergence:
        fine = solve_write(params.refined(), omega_w.resampled(2 * params.n_t),
                           _resample_mode(u, omega_w, 2 * params.n_t))
        coarse_e = spin_energy(state.spin, dz)
        fine_e = spin_energy(fine.spin, fine.dz)
        ref = max(coarse_e, 1e-300)
        if abs(fine_e - coarse_e) / ref > convergence_tol:
            raise ConvergenceError(
                f"stored energy changed by {abs(fine_e - coarse_e) / ref:.3g} "
                f"(> {convergence_tol}) when grids were doubled"
            )
    return state


def _resample_mode(mode, pulse: ControlPulse, n_t_new: int):
    t_old = time_grid(pulse.n_t, pulse.duration)
    t_new = time_grid(n_t_new, pulse.duration)
    re = CubicSpline(t_old, np.real(mode))(t_new)
    im = CubicSpline(t_old, np.imag(mode))(t_new)
    dt_new = pulse.duration / n_t_new
    return normalized_mode(re + 1j * im, dt_new)


def solve_read(params: MemoryParams, omega_r: ControlPulse, spin_wave,
               check_convergence: bool = False, convergence_tol: float = 0.005) -> ReadResult:
    """Retrieve a stored spin wave with a read pulse.

    For ``params.retrieval == 'backward'`` the spin profile is mirrored along
    z before forward propagation (the standard equivalence for a
    counter-propagating read) and the residual spin is mirrored back to the
    lab frame afterwards.

    Returns
    -------
    ReadResult
        ``.envelope`` holds the retrieved exit-face signal samples,
        ``.residual_spin`` what remains stored.
    """
    spin_wave = np.asarray(spin_wave, dtype=complex)
    if spin_wave.shape != (params.n_z,):
        raise ValueError(
            f"spin wave must have {params.n_z} samples, got {spin_wave.shape}"
        )
    if not np.all(np.isfinite(spin_wave)):
        raise ValueError("spin wave must be finite")
    _check_pulse(params, omega_r)
    dt = omega_r.dt
    dz = params.length / params.n_z
    mirrored = params.retrieval == "backward"
    profile = spin_wave[::-1] if mirrored else spin_wave
    coeffs = _cell_coefficients(params, omega_r.samples, dt)
    zeros = np.zeros((params.n_t, 1), dtype=complex)
    spin0 = (profile * math.sqrt(dz))[:, None]
    sig_out, anti_out, spin, rec_s, rec_a = _sweep(coeffs, zeros, zeros.copy(), spin0,
                                                   record_fields=True)
    residual = spin[:, 0] / math.sqrt(dz)
    if mirrored:
        residual = residual[::-1]
    fields = FieldState(
        a_s=rec_s[:, :, 0] / math.sqrt(dt),
        a_a_dag=rec_a[:, :, 0] / math.sqrt(dt),
        spin=residual,
        dt=dt,
        dz=dz,
    )
    result = ReadResult(envelope=fields.transmitted, residual_spin=residual, fields=fields)
    if check_convergence:
        fine_params = params.refined()
        fine_spin = _resample_spin(spin_wave, params, fine_params)
        fine = solve_read(fine_params, omega_r.resampled(2 * params.n_t), fine_spin)
        coarse_e = field_energy(result.envelope, dt)
        fine_e = field_energy(fine.envelope, fine.fields.dt)
        ref = max(coarse_e, 1e-300)
        if abs(fine_e - coarse_e) / ref > convergence_tol:
            raise ConvergenceError(
                f"retrieved energy changed by {abs(fine_e - coarse_e) / ref:.3g} "
                f"(> {convergence_tol}) when grids were doubled"
            )
    return result


def _resample_spin(spin_wave, params: MemoryParams, fine_params: MemoryParams):
    z_old = space_grid(params.n_z, params.length)
    z_new = space_grid(fine_params.n_z, fine_params.length)
    re = CubicSpline(z_old, np.real(spin_wave))(z_new)
    im = CubicSpline(z_old, np.imag(spin_wave))(z_new)
    return re + 1j * im


def memory_efficiency(params: MemoryParams, omega_w: ControlPulse, omega_r: ControlPulse,
                      input_mode) -> EfficiencyReport:
    """Write, read and total energy efficiencies for one write/read cycle.

    ``eta_write`` is stored/input energy, ``eta_read`` retrieved/stored and
    ``eta_total`` their product.  With ``g_a > 0`` four-wave-mixing gain can
    push any of them above 1; ``fwm_gain`` flags that case.  A zero write
    pulse stores nothing, so ``eta_read`` is reported as NaN.
    """
    write = solve_write(params, omega_w, input_mode)
    dz = params.length / params.n_z
    e_in = field_energy(np.asarray(input_mode), omega_w.dt)
    e_stored = spin_energy(write.spin, dz)
    eta_write = e_stored / e_in
    if e_stored <= 1e-30:
        return EfficiencyReport(eta_write=eta_write, eta_read=math.nan,
                                eta_total=0.0, fwm_gain=False)
    read = solve_read(params, omega_r, write.spin)
    e_out = field_energy(read.envelope, omega_r.dt)
    eta_read = e_out / e_stored
    eta_total = eta_write * eta_read
    gain_tol = 1e-9
    flag = (eta_write > 1 + gain_tol) or (eta_read > 1 + gain_tol) or (eta_total > 1 + gain_tol)
    return EfficiencyReport(eta_write=eta_write, eta_read=eta_read,
                            eta_total=eta_total, fwm_gain=flag)


# ---------------------------------------------------------------------------
# transfer matrix and effective channel

_BLOCKS = ("sig_w", "sig_r", "anti_w", "anti_r", "spin")


@dataclass
class TransferMatrix:
    """Linear input-output map over discretized mode bins.

    Rows and columns share one block layout: signal bins of the write and
    read windows, conjugated anti-Stokes bins of both windows, then spin
    bins.  ``conjugated`` marks the creation-operator (amplifier) channels.
    Every row must satisfy  sum_same |c|^2 - sum_cross |c|^2 = 1  where
    "same" are columns of the row's own conjugation class.
    """

    matrix: np.ndarray
    n_t: int
    n_z: int
    blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.blocks:
            n_t, n_z = self.n_t, self.n_z
            edges = np.cumsum([0, n_t, n_t, n_t, n_t, n_z])
            self.blocks = {
                name: slice(int(edges[j]), int(edges[j + 1]))
                for j, name in enumerate(_BLOCKS)
            }

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def conjugated_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        mask[self.blocks["anti_w"]] = True
        mask[self.blocks["anti_r"]] = True
        return mask

    def commutator_defect(self) -> float:
        """Largest deviation of any row from the Bogoliubov normalization."""
        conj = self.conjugated_mask()
        p = np.abs(self.matrix) ** 2
        signed = np.where(conj[None, :], -p, p)
        row_sums = signed.sum(axis=1)
        row_sums[conj] *= -1.0
        return float(np.max(np.abs(row_sums - 1.0)))

    def validate(self, tol: float = COMMUTATOR_TOL):
        defect = self.commutator_defect()
        if defect > tol:
            raise SolverAccuracyError(
                f"commutator preservation violated: defect {defect:.3g} > {tol:.3g}"
            )
        return defect


def _transfer_matrix(params: MemoryParams, omega_w: ControlPulse,
                     omega_r: ControlPulse) -> TransferMatrix:
    n_t, n_z = params.n_t, params.n_z
    dim = 4 * n_t + n_z
    eye_t = np.eye(n_t, dtype=complex)
    # write stage: signal bins, anti-Stokes bins and initial spin bins
    nc_w = 2 * n_t + n_z
    sig_in = np.zeros((n_t, nc_w), dtype=complex)
    anti_in = np.zeros((n_t, nc_w), dtype=complex)
    spin0 = np.zeros((n_z, nc_w), dtype=complex)
    sig_in[:, :n_t] = eye_t
    anti_in[:, n_t:2 * n_t] = eye_t
    spin0[:, 2 * n_t:] = np.eye(n_z, dtype=complex)
    cw = _cell_coefficients(params, omega_w.samples, omega_w.dt)
    sig_wt, anti_wt, spin_w, _, _ = _sweep(cw, sig_in, anti_in, spin0)
    if params.retrieval == "backward":
        spin_w = spin_w[::-1].copy()
    # read stage: previous columns plus fresh read-window vacuum channels
    nc_r = nc_w + 2 * n_t
    sig_in2 = np.zeros((n_t, nc_r), dtype=complex)
    anti_in2 = np.zeros((n_t, nc_r), dtype=complex)
    spin1 = np.zeros((n_z, nc_r), dtype=complex)
    spin1[:, :nc_w] = spin_w
    sig_in2[:, nc_w:nc_w + n_t] = eye_t
    anti_in2[:, nc_w + n_t:] = eye_t
    cr = _cell_coefficients(params, omega_r.samples, omega_r.dt)
    sig_rt, anti_rt, spin_r, _, _ = _sweep(cr, sig_in2, anti_in2, spin1)
    if params.retrieval == "backward":
        spin_r = spin_r[::-1].copy()

    tm = TransferMatrix(matrix=np.zeros((dim, dim), dtype=complex), n_t=n_t, n_z=n_z)
    blocks = tm.blocks
    # stage-local column ranges -> global input blocks
    write_cols = [("sig_w", slice(0, n_t)), ("anti_w", slice(n_t, 2 * n_t)),
                  ("spin", slice(2 * n_t, nc_w))]
    read_cols = write_cols + [("sig_r", slice(nc_w, nc_w + n_t)),
                              ("anti_r", slice(nc_w + n_t, nc_r))]
    m = tm.matrix
    for name, cols in write_cols:
        m[blocks["sig_w"], blocks[name]] = sig_wt[:, cols]
        m[blocks["anti_w"], blocks[name]] = anti_wt[:, cols]
    for name, cols in read_cols:
        m[blocks["sig_r"], blocks[name]] = sig_rt[:, cols]
        m[blocks["anti_r"], blocks[name]] = anti_rt[:, cols]
        m[blocks["spin"], blocks[name]] = spin_r[:, cols]
    return tm


def bogoliubov_channel(params: MemoryParams, omega_w: ControlPulse, omega_r: ControlPulse,
                       input_mode, output_mode=None):
    """Effective Gaussian channel of the full write/read cycle.

    Builds the bin-level transfer matrix by propagating one classical solution
    per basis input, projects the retrieved signal onto ``output_mode`` and
    reads off the channel parameters of the matched mode:
    ``eta = |T|^2`` for the coefficient T of the matched input mode and
    ``delta = 2 * sum |G_k|^2`` over the conjugated (amplifier) channels,
    each contributing two vacuum units per unit of gain.

    Parameters
    ----------
    input_mode : array_like
        Normalized signal envelope on the write grid.
    output_mode : array_like, optional
        Normalized envelope on the read grid to project the retrieved field
        onto.  Default: the normalized classical retrieval of ``input_mode``
        (the self-matched filter).

    Returns
    -------
    (ChannelParams, TransferMatrix)

    Raises
    ------
    SolverAccuracyError
        If commutator preservation fails beyond tolerance.
    ValueError
        If the matched-mode gain exceeds 1 (net amplification), in which
        case the loss-channel form does not apply.
    """
    _check_pulse(params, omega_w)
    _check_pulse(params, omega_r)
    u = _check_mode(params, omega_w, input_mode)
    tm = _transfer_matrix(params, omega_w, omega_r)
    tm.validate()
    blocks = tm.blocks
    u_bins = u * math.sqrt(omega_w.dt)
    if output_mode is None:
        out_bins = tm.matrix[blocks["sig_r"], blocks["sig_w"]] @ u_bins
        norm = np.linalg.norm(out_bins)
        if norm < 1e-12:
            raise ValueError("nothing retrieved; supply an explicit output_mode")
        w_bins = out_bins / norm
    else:
        w = _check_mode(params, omega_r, np.asarray(output_mode), name="output_mode")
        w_bins = w * math.sqrt(omega_r.dt)
    row = w_bins.conj() @ tm.matrix[blocks["sig_r"], :]
    t_coeff = row[blocks["sig_w"]] @ u_bins
    eta = float(abs(t_coeff) ** 2)
    conj = tm.conjugated_mask()
    delta = float(2.0 * np.sum(np.abs(row[conj]) ** 2))
    return ChannelParams(eta=eta, delta=delta), tm


@dataclass
class PowerSweepTable:
    """Per-read-power efficiencies and excess noise for both retrieval directions."""

    powers: np.ndarray
    eta_forward: np.ndarray
    eta_backward: np.ndarray
    delta_forward: np.ndarray
    delta_backward: np.ndarray

    def rows(self):
        return list(zip(self.powers, self.eta_forward, self.eta_backward,
                        self.delta_forward, self.delta_backward))


def retrieval_power_sweep(params: MemoryParams, omega_w: ControlPulse,
                          omega_r: ControlPulse, input_mode, powers) -> PowerSweepTable:
    """Sweep the read power and compare forward and backward retrieval.

    For each power p the read amplitude is scaled by sqrt(p) and the matched
    channel is evaluated for both retrieval directions.
    """
    powers = np.asarray(powers, dtype=float)
    if powers.ndim != 1 or powers.size == 0:
        raise ValueError("powers must be a non-empty 1-D sequence")
    if np.any(powers <= 0):
        raise ValueError("powers must be positive")
    if np.any(np.diff(powers) <= 0):
        raise ValueError("powers must be strictly ascending")
    eta_f = np.empty_like(powers)
    eta_b = np.empty_like(powers)
    del_f = np.empty_like(powers)
    del_b = np.empty_like(powers)
    for j, p in enumerate(powers):
        pulse = omega_r.scaled(math.sqrt(p))
        for direction, eta_arr, del_arr in (("forward", eta_f, del_f),
                                            ("backward", eta_b, del_b)):
            par = MemoryParams(g_s=params.g_s, g_a=params.g_a, delta_k=params.delta_k,
                               length=params.length, n_z=params.n_z, n_t=params.n_t,
                               retrieval=direction)
            ch, _ = bogoliubov_channel(par, omega_w, pulse, input_mode)
            eta_arr[j] = ch.eta
            del_arr[j] = ch.delta
    return PowerSweepTable(powers=powers, eta_forward=eta_f, eta_backward=eta_b,
                           delta_forward=del_f, delta_backward=del_b)


def grid_convergence_check(params: MemoryParams, omega_w: ControlPulse,
                           omega_r: ControlPulse, input_mode) -> dict:
    """Total efficiency at the configured and doubled grids plus relative change."""
    coarse = memory_efficiency(params, omega_w, omega_r, input_mode)
    fine_params = params.refined()
    n2 = 2 * params.n_t
    fine = memory_efficiency(fine_params, omega_w.resampled(n2), omega_r.resampled(n2),
                             _resample_mode(np.asarray(input_mode), omega_w, n2))
    rel = abs(fine.eta_total - coarse.eta_total) / max(coarse.eta_total, 1e-300)
    return {"eta_total": coarse.eta_total, "eta_total_refined": fine.eta_total,
            "relative_change": rel}


# ---------------------------------------------------------------------------
# export


def transfer_matrix_to_csv(tm: TransferMatrix, path):
    """Write the transfer matrix as CSV rows (row, col, re, im) with block labels."""
    names = np.empty(tm.dim, dtype=object)
    for name, sl in tm.blocks.items():
        names[sl] = name
    with open(path, "w") as fh:
        fh.write("# linear input-output transfer matrix over mode bins\n")
        fh.write(f"# n_t={tm.n_t} n_z={tm.n_z} dim={tm.dim}\n")
        fh.write("# blocks: " + ", ".join(
            f"{k}=[{v.start}:{v.stop})" for k, v in tm.blocks.items()) + "\n")
        fh.write("# conjugated blocks: anti_w, anti_r\n")
        fh.write("row_block,col_block,row,col,re,im\n")
        for i in range(tm.dim):
            for j in range(tm.dim):
                c = tm.matrix[i, j]
                if c == 0:
                    continue
                fh.write(f"{names[i]},{names[j]},{i},{j},{c.real:.12e},{c.imag:.12e}\n")


def transfer_matrix_to_json(tm: TransferMatrix, path):
    payload = {
        "n_t": tm.n_t,
        "n_z": tm.n_z,
        "blocks": {k: [v.start, v.stop] for k, v in tm.blocks.items()},
        "conjugated_blocks": ["anti_w", "anti_r"],
        "matrix_re": tm.matrix.real.tolist(),
        "matrix_im": tm.matrix.imag.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def sweep_table_to_csv(table: PowerSweepTable, path):
    with open(path, "w") as fh:
        fh.write("# read-power sweep: matched-mode efficiency and excess noise (SNU)\n")
        fh.write("power,eta_forward,eta_backward,delta_forward,delta_backward\n")
        for p, ef, eb, df, db in table.rows():
            fh.write(f"{p:.12g},{ef:.12g},{eb:.12g},{df:.12g},{db:.12g}\n")


def sweep_table_to_json(table: PowerSweepTable, path):
    payload = {
        "power": table.powers.tolist(),
        "eta_forward": table.eta_forward.tolist(),
        "eta_backward": table.eta_backward.tolist(),
        "delta_forward": table.delta_forward.tolist(),
        "delta_backward": table.delta_backward.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)

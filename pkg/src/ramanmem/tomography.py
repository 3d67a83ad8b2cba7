"""Fock-basis state reconstruction, Wigner functions and Uhlmann fidelity.

Internally this module uses natural oscillator units where the vacuum
quadrature variance is 1/2 (x = (a + a^dag)/sqrt(2)); quadrature samples in
shot-noise units are rescaled by 1/sqrt(2) at the public boundary.  All
reported variances stay in SNU elsewhere in the package.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import eval_genlaguerre

from .gaussian import ChannelParams, GaussianState

__all__ = [
    "DensityMatrix",
    "QuadratureSample",
    "quadrature_amplitudes",
    "mle_reconstruct",
    "wigner_evaluate",
    "uhlmann_fidelity",
    "gaussian_to_fock",
    "fock_quadrature_variance",
    "density_matrix_to_json",
    "density_matrix_from_json",
    "wigner_to_csv",
]

_HERM_TOL = 1e-10
_TRACE_TOL = 1e-10
_EIG_TOL = 1e-10
TAIL_LEAKAGE_BOUND = 1e-4

SNU_TO_INTERNAL = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class QuadratureSample:
    """One homodyne outcome: quadrature value x (SNU scaling) at LO phase theta."""

    x: float
    theta: float


@dataclass
class DensityMatrix:
    """Hermitian, positive, unit-trace operator on a truncated Fock space."""

    rho: np.ndarray
    cutoff: int

    def __post_init__(self):
        rho = np.ascontiguousarray(self.rho, dtype=complex)
        self.rho = rho
        if rho.shape != (self.cutoff, self.cutoff):
            raise ValueError(f"rho must be ({self.cutoff}, {self.cutoff}), got {rho.shape}")
        self.validate(warn_tail=False)

    def validate(self, warn_tail: bool = True):
        rho = self.rho
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > _HERM_TOL:
            raise ValueError(f"density matrix not Hermitian: defect {herm:.3g}")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > _TRACE_TOL:
            raise ValueError(f"density matrix trace {tr:.12g} differs from 1")
        eigs = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
        if eigs.min() < -_EIG_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {eigs.min():.3g}")
        if warn_tail and self.tail_leakage > TAIL_LEAKAGE_BOUND:
            warnings.warn(
                f"Fock cutoff {self.cutoff} may be too small: top diagonal entry "
                f"{self.tail_leakage:.3g} exceeds {TAIL_LEAKAGE_BOUND:.0e}",
                stacklevel=2,
            )
        return self

    @property
    def tail_leakage(self) -> float:
        """Occupation of the highest retained Fock level."""
        return float(self.rho[-1, -1].real)

    def expect(self, op: np.ndarray) -> float:
        return float(np.trace(self.rho @ op).real)


def quadrature_amplitudes(x, theta: float, cutoff: int) -> np.ndarray:
    """Overlap <n|x, theta> for n = 0..cutoff-1, vacuum-variance-1/2 units.

    <n|x, theta> = e^{i n theta} H_n(x) e^{-x^2/2} / (pi^{1/4} sqrt(2^n n!)),
    evaluated with the stable normalized-Hermite recurrence (safe far beyond
    the cutoffs used here; validity documented to at least n = 60).

    Returns shape (cutoff,) for scalar x, else (cutoff, len(x)).
    """
    if cutoff < 1:
        raise ValueError(f"cutoff must be >= 1, got {cutoff}")
    scalar = np.isscalar(x)
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    psi = np.empty((cutoff, xv.size), dtype=complex)
    h_prev = np.pi ** (-0.25) * np.exp(-xv**2 / 2.0)
    psi[0] = h_prev
    if cutoff > 1:
        h_cur = math.sqrt(2.0) * xv * h_prev
        psi[1] = h_cur
        for n in range(2, cutoff):
            h_next = math.sqrt(2.0 / n) * xv * h_cur - math.sqrt((n - 1) / n) * h_prev
            psi[n] = h_next
            h_prev, h_cur = h_cur, h_next
    if theta != 0.0:
        psi *= np.exp(1j * theta * np.arange(cutoff))[:, None]
    return psi[:, 0] if scalar else psi


def _bin_samples(x, theta, n_x_bins, x_range, n_theta_bins):
    """Histogram samples on a uniform (x, theta mod pi) lattice.

    Returns bin centers and a (n_theta_bins, n_x_bins) count matrix.
    Out-of-range x samples are dropped (they carry negligible weight for the
    states considered here).
    """
    lo, hi = -abs(x_range), abs(x_range)
    keep = (x >= lo) & (x < hi)
    x = x[keep]
    th = np.mod(theta[keep], math.pi)
    ix = np.clip(((x - lo) / (hi - lo) * n_x_bins).astype(int), 0, n_x_bins - 1)
    it = np.clip((th / math.pi * n_theta_bins).astype(int), 0, n_theta_bins - 1)
    counts = np.zeros((n_theta_bins, n_x_bins))
    np.add.at(counts, (it, ix), 1.0)
    x_centers = lo + (np.arange(n_x_bins) + 0.5) * (hi - lo) / n_x_bins
    t_centers = (np.arange(n_theta_bins) + 0.5) * math.pi / n_theta_bins
    return x_centers, t_centers, counts


def mle_reconstruct(x, theta=None, cutoff: int = 20, iterations: int = 200,
                    damping: float = 0.0, *, x_units: str = "snu",
                    n_x_bins: int = 200, x_range: float = 6.0,
                    n_theta_bins: int = 24, prob_floor: float = 1e-12,
                    validate_each_iteration: bool = False):
    """Iterative maximum-likelihood reconstruction from quadrature samples.

    Samples are binned on a uniform (x, theta) lattice and the standard
    expectation-maximization fixed point  rho <- N[R rho R]  with
    R = sum_j f_j Pi_j / p_j(rho)  is iterated.  Bin probabilities are
    floored at ``prob_floor`` so empty-model bins never divide by zero.

    Parameters
    ----------
    x, theta : array_like
        Quadrature values and LO phases.  Alternatively pass a sequence of
        :class:`QuadratureSample` records as the first argument and omit
        ``theta``.  ``x_units='snu'`` (default) rescales x by 1/sqrt(2) to
        the internal convention; pass ``x_units='internal'`` for
        already-rescaled values.
    damping : float
        Blends R with the identity, R <- (R + d I)/(1 + d).
    validate_each_iteration : bool
        Re-check Hermiticity/positivity/trace after every step (test mode).

    Returns
    -------
    (DensityMatrix, ndarray)
        The reconstruction and the per-iteration log-likelihood history
        (non-decreasing within numerical tolerance).
    """
    if theta is None:
        records = list(x)
        if not all(isinstance(r, QuadratureSample) for r in records):
            raise ValueError("without theta, samples must be QuadratureSample records")
        x = np.array([r.x for r in records], dtype=float)
        theta = np.array([r.theta for r in records], dtype=float)
    x = np.asarray(x, dtype=float).ravel()
    theta = np.asarray(theta, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no quadrature samples given")
    if x.shape != theta.shape:
        raise ValueError("x and theta must have equal length")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if x_units == "snu":
        x = x * SNU_TO_INTERNAL
    elif x_units != "internal":
        raise ValueError(f"x_units must be 'snu' or 'internal', got {x_units!r}")
    if x.size < 10 * cutoff:
        warnings.warn(
            f"only {x.size} samples for cutoff {cutoff}; recommend >= {10 * cutoff}",
            stacklevel=2,
        )
    x_centers, t_centers, counts = _bin_samples(x, theta, n_x_bins, x_range, n_theta_bins)
    total = counts.sum()
    if total == 0:
        raise ValueError("all samples fell outside the x binning range")
    # projector amplitude stack: psi[j] for every populated (theta, x) bin
    it_idx, ix_idx = np.nonzero(counts)
    freq = counts[it_idx, ix_idx] / total
    psi = np.empty((it_idx.size, cutoff), dtype=complex)
    for t_bin in np.unique(it_idx):
        rows = it_idx == t_bin
        psi[rows] = quadrature_amplitudes(x_centers[ix_idx[rows]], t_centers[t_bin], cutoff).T

    rho = np.eye(cutoff, dtype=complex) / cutoff
    ll_history = np.empty(iterations)
    for step in range(iterations):
        probs = np.einsum("ji,ik,jk->j", psi.conj(), rho, psi).real
        probs = np.maximum(probs, prob_floor)
        ll_history[step] = float(np.sum(freq * np.log(probs)))
        weights = freq / probs
        r_op = (psi.T * weights) @ psi.conj()
        if damping > 0:
            r_op = (r_op + damping * np.eye(cutoff)) / (1.0 + damping)
        rho = r_op @ rho @ r_op
        rho = (rho + rho.conj().T) / 2.0
        rho /= np.trace(rho).real
        if validate_each_iteration:
            DensityMatrix(rho.copy(), cutoff)
    return DensityMatrix(rho, cutoff).validate(), ll_history


def wigner_evaluate(dm: DensityMatrix, xs, ps) -> np.ndarray:
    """Wigner function on a grid, internal units (vacuum gives W(0,0) = 1/pi).

    Uses the closed-form Fock kernels
    W_{|m><n|}(x, p) = (1/pi) (-1)^n sqrt(n!/m!) (sqrt(2)(x - i p))^{m-n}
                        L_n^{(m-n)}(2(x^2 + p^2)) e^{-(x^2 + p^2)},  m >= n.
    Returns a (len(xs), len(ps)) array normalized so its full-plane integral
    is 1 (up to grid truncation).
    """
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    xg, pg = np.meshgrid(xs, ps, indexing="ij")
    r2 = xg**2 + pg**2
    envelope = np.exp(-r2) / math.pi
    beta_conj = math.sqrt(2.0) * (xg - 1j * pg)
    cutoff = dm.cutoff
    lnfact = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, cutoff)))]) \
        if cutoff > 1 else np.array([0.0])
    w = np.zeros_like(r2, dtype=complex)
    for m in range(cutoff):
        for n in range(m + 1):
            coeff = dm.rho[m, n]
            if coeff == 0 and (m == n or dm.rho[n, m] == 0):
                continue
            amp = math.exp(0.5 * (lnfact[n] - lnfact[m]))
            kern = ((-1.0) ** n) * amp * beta_conj ** (m - n) \
                * eval_genlaguerre(n, m - n, 2.0 * r2) * envelope
            if m == n:
                w += coeff * kern
            else:
                w += coeff * kern + dm.rho[n, m] * np.conj(kern)
    return w.real


def uhlmann_fidelity(dm1: DensityMatrix, dm2: DensityMatrix) -> float:
    """Uhlmann fidelity F = (Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))^2.

    Computed through Hermitian eigendecompositions; symmetric in its
    arguments to better than 1e-8.  Inputs are re-validated.
    """
    if dm1.cutoff != dm2.cutoff:
        raise ValueError("density matrices must share one cutoff")
    dm1.validate(warn_tail=False)
    dm2.validate(warn_tail=False)
    evals, evecs = np.linalg.eigh(dm1.rho)
    evals = np.clip(evals, 0.0, None)
    sqrt1 = (evecs * np.sqrt(evals)) @ evecs.conj().T
    inner = sqrt1 @ dm2.rho @ sqrt1
    ev = np.linalg.eigvalsh((inner + inner.conj().T) / 2.0)
    ev = np.clip(ev, 0.0, None)
    fid = float(np.sum(np.sqrt(ev)) ** 2)
    return min(fid, 1.0)


def _squeezed_vacuum_amplitudes(r: float, cutoff: int) -> np.ndarray:
    """Fock amplitudes of a vacuum squeezed along x, c_{2k} only."""
    c = np.zeros(cutoff)
    if cutoff == 0:
        return c
    c[0] = 1.0 / math.sqrt(math.cosh(r))
    # ratio c_{2k}/c_{2k-2} = -tanh(r) * sqrt((2k-1)/(2k))
    val = c[0]
    for k in range(1, (cutoff - 1) // 2 + 1):
        val *= -math.tanh(r) * math.sqrt((2 * k - 1) / (2 * k))
        c[2 * k] = val
    return c


@lru_cache(maxsize=16)
def _beamsplitter_unitary(eta: float, n_sys: int, n_anc: int) -> np.ndarray:
    a = np.diag(np.sqrt(np.arange(1, n_sys)), 1)
    b = np.diag(np.sqrt(np.arange(1, n_anc)), 1)
    a_full = np.kron(a, np.eye(n_anc))
    b_full = np.kron(np.eye(n_sys), b)
    angle = math.acos(min(1.0, math.sqrt(eta)))
    gen = angle * (a_full.conj().T @ b_full - a_full @ b_full.conj().T)
    return expm(gen)


def gaussian_to_fock(state: GaussianState, ch: ChannelParams | None = None,
                     cutoff: int = 20, ancilla_cutoff: int = 12,
                     working_pad: int = 8) -> DensityMatrix:
    """Fock representation of a pure squeezed vacuum, optionally after the channel.

    The pure state uses the analytic even-photon expansion (squeezing
    parameter r = -ln(v_min)/2, then rotated to theta0).  A channel is
    applied as a beam splitter of transmissivity eta coupling the state to a
    thermal ancilla of mean photon number delta / (2 (1 - eta)), traced out;
    this reproduces the channel's variance law for every phase.

    Raises
    ------
    ValueError
        For mixed input states (only vacuum-seeded pure states are
        representable here), for eta = 1 with delta > 0, or when the cutoff
        is too small to hold the state.
    """
    if abs(state.v_min * state.v_max - 1.0) > 1e-6:
        raise ValueError(
            "only pure squeezed vacua have an analytic expansion here; "
            f"got v_min*v_max = {state.v_min * state.v_max:.6g}"
        )
    r = -0.5 * math.log(state.v_min)
    n_work = cutoff + working_pad
    c = _squeezed_vacuum_amplitudes(r, n_work)
    missing = 1.0 - float(np.sum(c**2))
    if missing > 1e-6:
        raise ValueError(
            f"cutoff {cutoff} (+pad {working_pad}) too small: amplitude tail {missing:.3g}"
        )
    if state.theta0 != 0.0:
        c = c * np.exp(1j * state.theta0 * np.arange(n_work))
    rho = np.outer(c, np.conj(c))

    if ch is not None and not (ch.eta == 1.0 and ch.delta == 0.0):
        if ch.eta >= 1.0 and ch.delta > 0.0:
            raise ValueError("eta = 1 with delta > 0 is not a loss channel")
        nbar = ch.delta / (2.0 * (1.0 - ch.eta))
        q = nbar / (1.0 + nbar)
        pth = (1 - q) * q ** np.arange(ancilla_cutoff)
        pth /= pth.sum()
        unitary = _beamsplitter_unitary(float(ch.eta), n_work, ancilla_cutoff)
        big = unitary @ np.kron(rho, np.diag(pth).astype(complex)) @ unitary.conj().T
        big = big.reshape(n_work, ancilla_cutoff, n_work, ancilla_cutoff)
        rho = np.einsum("ikjk->ij", big)

    rho = rho[:cutoff, :cutoff]
    tr = np.trace(rho).real
    if tr < 1.0 - 1e-4:
        raise ValueError(
            f"cutoff {cutoff} too small after the channel: retained trace {tr:.6g}"
        )
    rho = rho / tr
    rho = (rho + rho.conj().T) / 2.0
    return DensityMatrix(rho, cutoff).validate()


def fock_quadrature_variance(dm: DensityMatrix, theta: float) -> float:
    """Quadrature variance of a zero-mean Fock-space state, reported in SNU."""
    n = dm.cutoff
    a = np.diag(np.sqrt(np.arange(1, n)), 1)
    xop = (a * np.exp(-1j * theta) + a.conj().T * np.exp(1j * theta)) / math.sqrt(2.0)
    return 2.0 * dm.expect(xop @ xop)


# ---------------------------------------------------------------------------
# export


def density_matrix_to_json(dm: DensityMatrix, path, metadata: dict | None = None):
    payload = {
        "cutoff": dm.cutoff,
        "rho_re": dm.rho.real.tolist(),
        "rho_im": dm.rho.imag.tolist(),
        "metadata": metadata or {},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def density_matrix_from_json(path) -> DensityMatrix:
    with open(path) as fh:
        payload = json.load(fh)
    rho = np.asarray(payload["rho_re"]) + 1j * np.asarray(payload["rho_im"])
    return DensityMatrix(rho, payload["cutoff"])


def wigner_to_csv(xs, ps, w, path):
    with open(path, "w") as fh:
        fh.write("# Wigner function samples, internal units (vacuum variance 1/2)\n")
        fh.write("x,p,w\n")
        for i, xv in enumerate(xs):
            for j, pv in enumerate(ps):
                fh.write(f"{xv:.12g},{pv:.12g},{w[i, j]:.12g}\n")

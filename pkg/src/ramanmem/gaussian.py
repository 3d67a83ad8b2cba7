"""Single-mode Gaussian states and the noisy-channel model.

Everything here is expressed in shot-noise units (SNU): the vacuum state has
quadrature variance 1 in every direction.  A squeezing level quoted in dB is
positive below the shot-noise level, ``dB = -10*log10(V_SNU)``.

A memory run is summarized by an effective channel

    a_out = sqrt(eta) * a_in + sqrt(1 - eta) * v + b_th

with transmission ``eta``, a vacuum term ``v`` and an independent thermal
term ``b_th`` of variance ``delta`` (the excess noise).  On quadrature
variances this acts as ``V_out(theta) = eta*V_in(theta) + (1-eta) + delta``
for every phase angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussianState",
    "ChannelParams",
    "UncertaintyViolation",
    "squeezed_vacuum_state",
    "quadrature_variance",
    "variance_curve",
    "snu_to_db",
    "db_to_snu",
    "apply_noisy_channel",
    "gaussian_fidelity",
    "estimate_excess_noise",
    "fwhm_to_bandwidth",
    "bandwidth_to_fwhm",
]

_UNCERTAINTY_TOL = 1e-9


class UncertaintyViolation(ValueError):
    """Raised when a requested state would violate v_min * v_max >= 1."""


@dataclass(frozen=True)
class GaussianState:
    """Zero-mean single-mode Gaussian state.

    Parameters
    ----------
    v_min : float
        Variance of the minimum-noise quadrature, in SNU (vacuum = 1).
    v_max : float
        Variance of the orthogonal quadrature, in SNU.
    theta0 : float
        Orientation (radians) of the minimum-variance quadrature.
    """

    v_min: float
    v_max: float
    theta0: float = 0.0

    def __post_init__(self):
        if not (self.v_min > 0 and self.v_max > 0):
            raise ValueError(
                f"variances must be positive, got v_min={self.v_min}, v_max={self.v_max}"
            )
        if self.v_min > self.v_max:
            raise ValueError(
                f"v_min={self.v_min} exceeds v_max={self.v_max}; swap the axes instead"
            )
        if self.v_min * self.v_max < 1.0 - _UNCERTAINTY_TOL:
            raise UncertaintyViolation(
                f"uncertainty violation: v_min*v_max = {self.v_min:.6g}*{self.v_max:.6g}"
                f" = {self.v_min * self.v_max:.6g} < 1"
            )

    @property
    def purity(self) -> float:
        """Purity of the state, 1/sqrt(det V) = 1/sqrt(v_min*v_max)."""
        return 1.0 / math.sqrt(self.v_min * self.v_max)

    @property
    def is_pure(self) -> bool:
        return abs(self.v_min * self.v_max - 1.0) <= 10 * _UNCERTAINTY_TOL

    @property
    def squeezing_db(self) -> float:
        """Squeezing depth of the minimum-noise quadrature in dB."""
        return snu_to_db(self.v_min)

    def covariance(self) -> np.ndarray:
        """2x2 quadrature covariance matrix in SNU (vacuum = identity)."""
        c, s = math.cos(self.theta0), math.sin(self.theta0)
        rot = np.array([[c, -s], [s, c]])
        return rot @ np.diag([self.v_min, self.v_max]) @ rot.T


@dataclass(frozen=True)
class ChannelParams:
    """Effective noisy-channel parameters: transmission eta and excess noise delta (SNU)."""

    eta: float
    delta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")


def squeezed_vacuum_state(squeeze_db, antisqueeze_db, theta0=0.0) -> GaussianState:
    """Build a squeezed-vacuum state from squeezing / anti-squeezing levels in dB.

    ``v_min = 10**(-squeeze_db/10)``, ``v_max = 10**(+antisqueeze_db/10)``.
    Raises :class:`UncertaintyViolation` if the pair would give v_min*v_max < 1.
    """
    if squeeze_db < 0:
        raise ValueError(f"squeeze_db must be >= 0, got {squeeze_db}")
    if antisqueeze_db < 0:
        raise ValueError(f"antisqueeze_db must be >= 0, got {antisqueeze_db}")
    v_min = 10.0 ** (-squeeze_db / 10.0)
    v_max = 10.0 ** (antisqueeze_db / 10.0)
    return GaussianState(v_min=v_min, v_max=v_max, theta0=theta0)


def quadrature_variance(state: GaussianState, theta) -> float | np.ndarray:
    """Variance of the quadrature at phase ``theta`` (radians), period pi.

    ``V(theta) = v_min*cos^2(theta - theta0) + v_max*sin^2(theta - theta0)``.
    """
    d = np.asarray(theta) - state.theta0
    v = state.v_min * np.cos(d) ** 2 + state.v_max * np.sin(d) ** 2
    return float(v) if np.isscalar(theta) else v


def variance_curve(state: GaussianState, thetas) -> np.ndarray:
    """Variance curve as an (N, 2) array of rows (theta_i, V(theta_i))."""
    thetas = np.asarray(thetas, dtype=float)
    return np.column_stack([thetas, quadrature_variance(state, thetas)])


def snu_to_db(value) -> float:
    """Convert a variance in SNU to a squeezing depth in dB (positive below vacuum)."""
    value = np.asarray(value, dtype=float)
    if np.any(value <= 0):
        raise ValueError(f"variance must be positive, got {value}")
    out = -10.0 * np.log10(value)
    return float(out) if out.ndim == 0 else out


def db_to_snu(db) -> float:
    """Inverse of :func:`snu_to_db`: ``V = 10**(-dB/10)``."""
    out = 10.0 ** (-np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def apply_noisy_channel(state: GaussianState, ch: ChannelParams) -> GaussianState:
    """Propagate a Gaussian state through the noisy channel.

    Acts on every quadrature as ``V -> eta*V + (1 - eta) + delta``; the
    squeezing orientation is unchanged.  The output automatically satisfies
    the uncertainty bound.
    """
    off = (1.0 - ch.eta) + ch.delta
    return GaussianState(
        v_min=ch.eta * state.v_min + off,
        v_max=ch.eta * state.v_max + off,
        theta0=state.theta0,
    )


def gaussian_fidelity(s1: GaussianState, s2: GaussianState) -> float:
    """Uhlmann fidelity F = Tr[(rho1^1/2 rho2 rho1^1/2)^1/2]^2 of two zero-mean states.

    Uses the closed form for single-mode Gaussians via 2x2 covariance
    matrices.  For pure squeezed vacua aligned at the same angle with
    variances (v, 1/v) and (w, 1/w) this reduces to 2*sqrt(v*w)/(v+w).
    """
    v1 = s1.covariance()
    v2 = s2.covariance()
    big_delta = np.linalg.det(v1 + v2) / 4.0
    lam = max((np.linalg.det(v1) - 1.0), 0.0) * max((np.linalg.det(v2) - 1.0), 0.0) / 4.0
    fid = 1.0 / (math.sqrt(big_delta + lam) - math.sqrt(lam))
    return min(fid, 1.0)


def estimate_excess_noise(curve_in, curve_out, eta, vacuum_var=1.0) -> float:
    """Phase-averaged excess-noise estimate from input/output variance curves.

    Parameters
    ----------
    curve_in, curve_out : (N, 2) array_like
        Rows (theta_i, variance) on the *same* phase grid covering a full
        pi-period scan.
    eta : float
        Channel transmission assumed known.
    vacuum_var : float
        Measured vacuum variance (1.0 for ideally calibrated data).

    Returns
    -------
    float
        ``delta = mean_i [V_out_i - eta*V_in_i - (1-eta)*V_vac] / V_vac``.
        May be negative on noisy data; no clamping is applied.
    """
    curve_in = np.asarray(curve_in, dtype=float)
    curve_out = np.asarray(curve_out, dtype=float)
    if curve_in.shape != curve_out.shape or curve_in.ndim != 2 or curve_in.shape[1] != 2:
        raise ValueError(
            f"curves must be (N, 2) arrays of equal shape, got {curve_in.shape} and {curve_out.shape}"
        )
    if not np.allclose(curve_in[:, 0], curve_out[:, 0], atol=1e-12):
        raise ValueError("input and output curves use different phase grids")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if vacuum_var <= 0:
        raise ValueError(f"vacuum_var must be positive, got {vacuum_var}")
    resid = curve_out[:, 1] - eta * curve_in[:, 1] - (1.0 - eta) * vacuum_var
    return float(np.mean(resid) / vacuum_var)


def fwhm_to_bandwidth(fwhm_s) -> float:
    """Bandwidth in hertz for a pulse of the given FWHM in seconds, B = 1/FWHM."""
    if fwhm_s <= 0:
        raise ValueError(f"FWHM must be positive, got {fwhm_s}")
    return 1.0 / fwhm_s


def bandwidth_to_fwhm(bandwidth_hz) -> float:
    """Pulse FWHM in seconds for the given bandwidth in hertz, FWHM = 1/B."""
    if bandwidth_hz <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth_hz}")
    return 1.0 / bandwidth_hz

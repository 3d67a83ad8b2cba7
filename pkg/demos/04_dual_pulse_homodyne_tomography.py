"""Dual-pulse homodyne: from photocurrents to a density matrix.

Synthesizes a scanned homodyne run of a squeezed state (each trial carries a
weak signal pulse plus a bright phase-reference companion), then runs the
whole estimation chain: Hilbert-transform phase recovery, matched filtering,
phase-binned variances, the two-variance fit, and iterative maximum-
likelihood reconstruction in the Fock basis.
"""

import numpy as np

import ramanmem as rm

state = rm.squeezed_vacuum_state(1.6, 1.6)
mode = rm.gaussian_temporal_mode(n_samples=32, duration=1.0, center=0.5, fwhm=0.3)
drift = rm.PhaseDriftModel(bandwidth_hz=1e5, sigma_rad=0.05, seed=1)

dataset = rm.simulate_dual_pulse_run(state, mode, n_trials=60_000, drift=drift,
                                     seed=7, store_photocurrents=False)
print(f"simulated {dataset.n_trials} trials; companion-delay phase error std "
      f"= {dataset.metadata['companion_phase_error_std']:.4f} rad (negligible)")

# recovered LO phases come from the companion fringes
phases = dataset.phases()
q = rm.dataset_quadratures(dataset)

binned = rm.bin_variances(q, phases, n_bins=24)
fit = rm.fit_variance_curve(binned)
print(f"fitted variances: V_x = {fit.v_x:.4f} SNU, V_p = {fit.v_p:.4f} SNU, "
      f"theta0 = {np.degrees(fit.theta0):.2f} deg")
print(f"ground truth:     {state.v_min:.4f}, {state.v_max:.4f}, 0.00 deg")

# Fock-basis maximum likelihood on the same samples
rho, ll = rm.mle_reconstruct(q, phases, cutoff=20, iterations=200)
reference = rm.gaussian_to_fock(state, cutoff=20)
fid = rm.uhlmann_fidelity(rho, reference)
print(f"\nMLE reconstruction: fidelity to the analytic state = {fid:.4f}")
print(f"log-likelihood climbed monotonically: {bool(np.all(np.diff(ll) >= -1e-12))}")
print(f"photon-number diagonal: {np.round(np.diag(rho.rho).real[:6], 4)}")

# Wigner function values along the two axes
xs = np.linspace(-2.5, 2.5, 5)
w = rm.wigner_evaluate(rho, xs, xs)
print(f"\nW(0,0) = {w[2, 2]:.4f} (vacuum would give 1/pi = {1/np.pi:.4f})")
print(f"x-axis waist narrower than p-axis: "
      f"{w[3, 2]:.4f} (x = {xs[3]:.2f}) vs {w[2, 3]:.4f} (p = {xs[3]:.2f})")

# mode extraction needs a locked phase and strong variance contrast
strong = rm.squeezed_vacuum_state(12.0, 12.0)
locked = rm.simulate_dual_pulse_run(strong, mode, 10_000,
                                    locked_phase=np.pi / 2, seed=9)
est_mode, overlap = rm.extract_temporal_mode(locked)
print(f"\ntemporal-mode extraction from pointwise variance: overlap = {overlap:.4f}")

"""Write/read dynamics of the memory and its effective channel.

Propagates a signal pulse into the medium, stores it as a spin wave, reads
it back in both directions, and extracts the effective (eta, delta) channel
from the linear transfer matrix.  With the parasitic anti-Stokes coupling
switched off the whole cycle is a passive beam-splitter network and the
excitation budget closes to machine precision.
"""

import numpy as np

import ramanmem as rm

params = rm.MemoryParams(g_s=3.0, g_a=0.3, n_z=64, n_t=64, retrieval="backward")
t = rm.time_grid(params.n_t)
dt = 1.0 / params.n_t
dz = 1.0 / params.n_z

omega_w = rm.ControlPulse(rm.gaussian_envelope(t, 0.5, 0.3).astype(complex))
omega_r = rm.ControlPulse(rm.gaussian_envelope(t, 0.35, 0.25).astype(complex))
signal = rm.normalized_mode(rm.gaussian_envelope(t, 0.5, 0.25), dt)

# --- write stage -----------------------------------------------------------
write = rm.solve_write(params, omega_w, signal)
stored = rm.spin_energy(write.spin, dz)
print(f"write efficiency: {stored / rm.field_energy(signal, dt):.4f}")
peak_z = (np.argmax(np.abs(write.spin)) + 0.5) * dz
print(f"spin wave peaks at z = {peak_z:.2f} (weighted toward the entrance face)")

# --- read stage, both directions -------------------------------------------
for direction in ("forward", "backward"):
    par = rm.MemoryParams(g_s=params.g_s, g_a=params.g_a, n_z=params.n_z,
                          n_t=params.n_t, retrieval=direction)
    eff = rm.memory_efficiency(par, omega_w, omega_r, signal)
    print(f"{direction:8s}: eta_write = {eff.eta_write:.3f}, "
          f"eta_read = {eff.eta_read:.3f}, eta_total = {eff.eta_total:.3f}")

# --- excitation budget without four-wave mixing ----------------------------
lossless = rm.MemoryParams(g_s=3.0, g_a=0.0, n_z=64, n_t=64)
w0 = rm.solve_write(lossless, omega_w, signal)
r0 = rm.solve_read(lossless, omega_r, w0.spin)
budget = (rm.field_energy(w0.transmitted, dt) + rm.field_energy(r0.envelope, dt)
          + rm.spin_energy(r0.residual_spin, dz))
print(f"\npassive budget closes to {abs(budget - 1.0):.2e} "
      "(transmitted + retrieved + residual = input)")

# --- effective Gaussian channel from the transfer matrix -------------------
channel, tm = rm.bogoliubov_channel(params, omega_w, omega_r, signal)
print(f"\neffective channel: eta = {channel.eta:.4f}, delta = {channel.delta:.4f} SNU")
print(f"commutator preservation defect: {tm.commutator_defect():.2e}")

# --- read-power sweep: the backward advantage ------------------------------
powers = np.linspace(0.2, 1.6, 8)
table = rm.retrieval_power_sweep(params, omega_w, omega_r, signal, powers)
print("\npower   eta_fwd  eta_bwd  delta_fwd  delta_bwd")
for p, ef, eb, df, db in table.rows():
    print(f"{p:5.2f}  {ef:7.3f}  {eb:7.3f}  {df:9.4f}  {db:9.4f}")
print("backward retrieval reaches high efficiency at lower power, which is")
print("why it is the low-noise operating point.")

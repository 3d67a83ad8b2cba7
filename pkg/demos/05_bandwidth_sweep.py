"""Channel performance across input bandwidths.

Eight measured (bandwidth, eta, delta) rows are applied to inputs whose
squeezing shrinks as the pulses get shorter.  The retrieved squeezing and
the unconditional fidelity stay useful across the whole range; the fidelity
floor sits above 0.92 even with the anti-squeezing scanned up to 3 dB.
"""

import ramanmem as rm

bandwidths = [4.4, 6.28, 9.06, 13.0, 16.0, 18.4, 21.9, 24.0]
etas = [0.642, 0.635, 0.666, 0.630, 0.742, 0.629, 0.663, 0.757]
deltas = [0.025, 0.026, 0.023, 0.047, 0.038, 0.013, 0.025, 0.021]
# inputs span 1.6 dB at 4.4 MHz down to 0.9 dB at 24 MHz
squeeze_in = [1.6 + (0.9 - 1.6) * (b - 4.4) / (24.0 - 4.4) for b in bandwidths]

print("B (MHz)  in (dB)  out (dB)  fidelity   worst fidelity (1-3 dB antisqueeze)")
worst_overall = 1.0
for b, eta, delta, s_in in zip(bandwidths, etas, deltas, squeeze_in):
    channel = rm.ChannelParams(eta, delta)
    state = rm.squeezed_vacuum_state(s_in, s_in)
    out = rm.apply_noisy_channel(state, channel)
    fid = rm.gaussian_fidelity(state, out)
    worst = min(
        rm.gaussian_fidelity(st, rm.apply_noisy_channel(st, channel))
        for anti in (1.0, 1.5, 2.0, 2.5, 3.0) if anti >= s_in
        for st in [rm.squeezed_vacuum_state(s_in, anti)])
    worst_overall = min(worst_overall, worst)
    print(f"{b:7.2f}  {s_in:7.2f}  {rm.snu_to_db(out.v_min):8.3f}  {fid:8.4f}   {worst:8.4f}")

print(f"\nfidelity floor across the table: {worst_overall:.4f} (> 0.92)")

# bandwidth bookkeeping: pulse FWHM <-> bandwidth
for fwhm_ns in (227.2, 41.6):
    print(f"FWHM {fwhm_ns:6.1f} ns  ->  {rm.fwhm_to_bandwidth(fwhm_ns * 1e-9) / 1e6:.2f} MHz")

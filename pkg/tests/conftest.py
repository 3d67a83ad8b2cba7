import pytest

import ramanmem as rm


@pytest.fixture(scope="session")
def small_memory():
    """Fast memory configuration shared by solver tests."""
    params = rm.MemoryParams(g_s=3.0, g_a=0.3, n_z=48, n_t=48, retrieval="backward")
    t = rm.time_grid(params.n_t)
    dt = 1.0 / params.n_t
    omega_w = rm.ControlPulse(rm.gaussian_envelope(t, 0.5, 0.3).astype(complex))
    omega_r = rm.ControlPulse(rm.gaussian_envelope(t, 0.35, 0.25).astype(complex))
    u = rm.normalized_mode(rm.gaussian_envelope(t, 0.5, 0.25), dt)
    return params, omega_w, omega_r, u


@pytest.fixture(scope="session")
def lossless_memory(small_memory):
    params, omega_w, omega_r, u = small_memory
    lossless = rm.MemoryParams(g_s=params.g_s, g_a=0.0, n_z=params.n_z,
                               n_t=params.n_t, retrieval=params.retrieval)
    return lossless, omega_w, omega_r, u


def table_rows():
    """Measured per-bandwidth channel parameters used across tests."""
    bandwidths = [4.4, 6.28, 9.06, 13.0, 16.0, 18.4, 21.9, 24.0]
    etas = [0.642, 0.635, 0.666, 0.630, 0.742, 0.629, 0.663, 0.757]
    deltas = [0.025, 0.026, 0.023, 0.047, 0.038, 0.013, 0.025, 0.021]
    # input squeezing spans 1.6 dB at the smallest to 0.9 dB at the largest
    # bandwidth; intermediate values interpolated linearly in bandwidth
    squeeze = [1.6 + (0.9 - 1.6) * (b - 4.4) / (24.0 - 4.4) for b in bandwidths]
    return [
        {"bandwidth_mhz": b, "eta": e, "delta": d, "squeeze_db": s}
        for b, e, d, s in zip(bandwidths, etas, deltas, squeeze)
    ]


@pytest.fixture(scope="session")
def channel_table():
    return table_rows()

"""Static SVG figures rendered from persisted run artifacts.

Plotting only ever reads the CSV files a run produced; nothing is
recomputed.  SVGs are deterministic: the embedded creation date is dropped
and matplotlib's hashed element ids are salted with a fixed string.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

__all__ = ["emit_plots", "MissingArtifactError"]

_SVG_RC = {"svg.hashsalt": "ramanmem", "svg.fonttype": "none"}


class MissingArtifactError(FileNotFoundError):
    """A requested plot's source artifact is absent."""


def _save(fig: Figure, path: Path):
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _read_csv(path: Path):
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, data = rows[0], rows[1:]
    return header, data


def _col(header, data, name, cast=float):
    j = header.index(name)
    return [cast(r[j]) for r in data]


def _plot_variance_curves(src: Path, dst: Path):
    header, data = _read_csv(src)
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    for role, color in (("input", "tab:blue"), ("output", "tab:red")):
        rows = [r for r in data if r[header.index("role")] == role]
        if not rows:
            continue
        theta = _col(header, rows, "theta")
        var = _col(header, rows, "variance")
        fit = _col(header, rows, "fit")
        order = np.argsort(theta)
        theta = np.asarray(theta)[order]
        ax.plot(theta, np.asarray(var)[order], "o", ms=4, color=color, label=f"{role} bins")
        ax.plot(theta, np.asarray(fit)[order], "-", color=color, label=f"{role} fit")
    ax.axhline(1.0, ls="--", color="k", lw=0.8, label="shot noise")
    ax.set_xlabel("LO phase (rad)")
    ax.set_ylabel("quadrature variance (SNU)")
    ax.legend(fontsize=8)
    _save(fig, dst)


def _plot_bandwidth(src: Path, dst_squeeze: Path, dst_fid: Path):
    header, data = _read_csv(src)
    nominal = [r for r in data if r[header.index("kind")] == "nominal"]
    bw = _col(header, nominal, "bandwidth_mhz")
    s_in = _col(header, nominal, "squeeze_in_db")
    s_out = _col(header, nominal, "squeeze_out_db")
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.plot(bw, s_in, "o-", label="input squeezing")
    ax.plot(bw, s_out, "s-", label="retrieved squeezing")
    ax.set_xlabel("bandwidth (MHz)")
    ax.set_ylabel("squeezing (dB below shot noise)")
    ax.legend()
    _save(fig, dst_squeeze)

    fid_all = {}
    for r in data:
        b = float(r[header.index("bandwidth_mhz")])
        fid_all.setdefault(b, []).append(float(r[header.index("fidelity")]))
    bws = sorted(fid_all)
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.plot(bws, [min(fid_all[b]) for b in bws], "o-", label="worst over scan")
    ax.plot(bws, [max(fid_all[b]) for b in bws], "s--", label="best over scan")
    ax.axhline(0.92, ls="--", color="k", lw=0.8)
    ax.set_xlabel("bandwidth (MHz)")
    ax.set_ylabel("unconditional fidelity")
    ax.set_ylim(0.85, 1.0)
    ax.legend()
    _save(fig, dst_fid)


def _plot_read_power(src: Path, dst_eta: Path, dst_delta: Path):
    header, data = _read_csv(src)
    p = _col(header, data, "power")
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.plot(p, _col(header, data, "eta_forward"), "o-", label="forward")
    ax.plot(p, _col(header, data, "eta_backward"), "s-", label="backward")
    ax.set_xlabel("read power (arb. units)")
    ax.set_ylabel("memory efficiency")
    ax.legend()
    _save(fig, dst_eta)
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.plot(p, _col(header, data, "delta_forward"), "o-", label="forward")
    ax.plot(p, _col(header, data, "delta_backward"), "s-", label="backward")
    ax.set_xlabel("read power (arb. units)")
    ax.set_ylabel("excess noise (SNU)")
    ax.legend()
    _save(fig, dst_delta)


def _plot_wigner(src: Path, dst: Path):
    header, data = _read_csv(src)
    xs = np.asarray(_col(header, data, "x"))
    ps = np.asarray(_col(header, data, "p"))
    w = np.asarray(_col(header, data, "w"))
    xu = np.unique(xs)
    pu = np.unique(ps)
    grid = w.reshape(xu.size, pu.size)
    fig = Figure(figsize=(5, 4.4))
    ax = fig.add_subplot()
    levels = np.linspace(grid.min(), grid.max(), 21)
    cs = ax.contourf(xu, pu, grid.T, levels=levels, cmap="RdBu_r")
    ax.contour(xu, pu, grid.T, levels=8, colors="k", linewidths=0.4)
    fig.colorbar(cs, ax=ax, label="W(x, p)")
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    ax.set_aspect("equal")
    _save(fig, dst)


_PLOTTERS = {
    "variance_curves.csv": (_plot_variance_curves, ("variance_vs_phase.svg",)),
    "bandwidth_table.csv": (_plot_bandwidth,
                            ("squeezing_vs_bandwidth.svg", "fidelity_vs_bandwidth.svg")),
    "read_power_sweep.csv": (_plot_read_power,
                             ("eta_vs_read_power.svg", "delta_vs_read_power.svg")),
    "wigner_input.csv": (_plot_wigner, ("wigner_input.svg",)),
    "wigner_output.csv": (_plot_wigner, ("wigner_output.svg",)),
}


def emit_plots(run_dir, artifacts=None) -> list:
    """Render SVG figures for a run directory's persisted CSV artifacts.

    Parameters
    ----------
    run_dir : path-like
        Directory holding the run's artifacts (and receiving the SVGs).
    artifacts : sequence of str, optional
        Specific source CSVs to plot; by default every plottable artifact
        present is rendered.  Missing requested artifacts raise
        :class:`MissingArtifactError` naming the file.

    Returns
    -------
    list of str
        The SVG filenames written.
    """
    run_dir = Path(run_dir)
    if artifacts is None:
        artifacts = [name for name in _PLOTTERS if (run_dir / name).exists()]
        if not artifacts:
            raise MissingArtifactError(
                f"no plottable artifacts in {run_dir}; looked for: "
                + ", ".join(sorted(_PLOTTERS))
            )
    written = []
    for name in artifacts:
        if name not in _PLOTTERS:
            raise ValueError(f"no plotter registered for artifact {name!r}")
        src = run_dir / name
        if not src.exists():
            raise MissingArtifactError(f"artifact {src} is missing")
        func, outputs = _PLOTTERS[name]
        func(src, *(run_dir / out for out in outputs))
        written.extend(outputs)
    return written

"""Differential-evolution shaping of the write pulse.

The write pulse is a Gaussian parameterized by two genes, a temporal delay
``tau0`` and a width ``fwhm``, both in units of the write window.  A classic
rand/1/bin differential evolution with greedy selection searches the gene
space for the waveform that maximizes storage efficiency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .memory import (ControlPulse, MemoryParams, _cell_coefficients, _sweep,
                     time_grid)

__all__ = [
    "WritePulseGenes",
    "DEConfig",
    "GenerationRecord",
    "FitnessError",
    "gaussian_write_pulse",
    "de_optimize",
    "write_fitness",
    "write_fitness_population",
    "de_history_to_csv",
]


class FitnessError(RuntimeError):
    """A fitness evaluation failed or returned a non-finite value."""


@dataclass(frozen=True)
class WritePulseGenes:
    """Write-pulse genes: center delay and FWHM, in write-window units."""

    tau0: float
    fwhm: float

    def __post_init__(self):
        if self.fwhm <= 0:
            raise ValueError(f"fwhm must be positive, got {self.fwhm}")

    def as_array(self) -> np.ndarray:
        return np.array([self.tau0, self.fwhm], dtype=float)


@dataclass(frozen=True)
class DEConfig:
    """Hyperparameters of the rand/1/bin differential evolution.

    Out-of-bounds mutants are clipped to the bounds.  The run stops at
    ``max_generations`` or once the best fitness has improved by less than
    ``tolerance`` over ``stall_window`` consecutive generations.
    """

    bounds: tuple
    population: int = 20
    mutation: float = 0.8
    crossover: float = 0.9
    max_generations: int = 100
    tolerance: float = 1e-4
    stall_window: int = 10
    seed: int = 0

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if self.population < 4:
            raise ValueError(f"population must be >= 4, got {self.population}")
        if not 0.0 < self.mutation <= 2.0:
            raise ValueError(f"mutation factor must lie in (0, 2], got {self.mutation}")
        if not 0.0 <= self.crossover <= 1.0:
            raise ValueError(f"crossover rate must lie in [0, 1], got {self.crossover}")
        if self.max_generations < 1:
            raise ValueError(f"max_generations must be >= 1, got {self.max_generations}")
        if self.stall_window < 1:
            raise ValueError(f"stall_window must be >= 1, got {self.stall_window}")
        for lo, hi in bounds:
            if not lo < hi:
                raise ValueError(f"each bound must satisfy lo < hi, got ({lo}, {hi})")


@dataclass
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_genes: np.ndarray


def gaussian_write_pulse(genes: WritePulseGenes, n_t: int, duration: float = 1.0,
                         peak: float = 1.0, bounds=None) -> ControlPulse:
    """Real Gaussian Rabi envelope peak * exp(-4 ln2 (t - tau0)^2 / fwhm^2).

    Sampled on the bin-centered stage grid.  When ``bounds`` is given
    (pairs for tau0 and fwhm) genes outside it are rejected.
    """
    if bounds is not None:
        vec = genes.as_array()
        for g, (lo, hi) in zip(vec, bounds):
            if not lo <= g <= hi:
                raise ValueError(f"genes {tuple(vec)} outside bounds {tuple(bounds)}")
    if not 0.0 <= genes.tau0 <= duration:
        raise ValueError(f"tau0={genes.tau0} outside the write window [0, {duration}]")
    t = time_grid(n_t, duration)
    env = peak * np.exp(-4.0 * math.log(2.0) * (t - genes.tau0) ** 2 / genes.fwhm**2)
    return ControlPulse(env.astype(complex), duration)


def _evaluate(fitness, genes, fitness_batch=None):
    """Evaluate fitness for a (P, n_genes) population matrix."""
    if fitness_batch is not None:
        vals = np.asarray(fitness_batch(genes), dtype=float)
    else:
        vals = np.empty(genes.shape[0])
        for i, g in enumerate(genes):
            try:
                vals[i] = fitness(g)
            except Exception as exc:
                raise FitnessError(f"fitness evaluation failed for genes {g.tolist()}") from exc
    if not np.all(np.isfinite(vals)):
        bad = genes[~np.isfinite(vals)][0]
        raise FitnessError(f"fitness returned a non-finite value for genes {bad.tolist()}")
    return vals


def de_optimize(fitness, config: DEConfig, fitness_batch=None):
    """Maximize a fitness function with rand/1/bin differential evolution.

    Parameters
    ----------
    fitness : callable
        Maps a gene vector (1-D ndarray) to a float.  Must be defined for
        every in-bounds vector and deterministic.
    config : DEConfig
    fitness_batch : callable, optional
        Vectorized alternative taking a (P, n_genes) matrix and returning a
        length-P array; used for whole generations when provided.

    Returns
    -------
    (best_genes, best_fitness, history)
        ``history`` is a list of :class:`GenerationRecord`, one per
        generation including the initial population; the best fitness is
        non-decreasing along it.
    """
    rng = np.random.default_rng(config.seed)
    lo = np.array([b[0] for b in config.bounds])
    hi = np.array([b[1] for b in config.bounds])
    n_genes = lo.size
    pop_n = config.population
    pop = lo + (hi - lo) * rng.random((pop_n, n_genes))
    fit = _evaluate(fitness, pop, fitness_batch)
    history = []

    def record(gen):
        best = int(np.argmax(fit))
        history.append(GenerationRecord(
            generation=gen,
            best_fitness=float(fit[best]),
            mean_fitness=float(np.mean(fit)),
            best_genes=pop[best].copy(),
        ))

    record(0)
    stall = 0
    for gen in range(1, config.max_generations + 1):
        trials = np.empty_like(pop)
        for i in range(pop_n):
            r1, r2, r3 = _pick_distinct(rng, pop_n, i)
            mutant = pop[r1] + config.mutation * (pop[r2] - pop[r3])
            mutant = np.clip(mutant, lo, hi)
            cross = rng.random(n_genes) < config.crossover
            cross[rng.integers(n_genes)] = True
            trials[i] = np.where(cross, mutant, pop[i])
        trial_fit = _evaluate(fitness, trials, fitness_batch)
        better = trial_fit >= fit
        pop[better] = trials[better]
        fit[better] = trial_fit[better]
        prev_best = history[-1].best_fitness
        record(gen)
        if history[-1].best_fitness - prev_best < config.tolerance:
            stall += 1
        else:
            stall = 0
        if stall >= config.stall_window:
            break
    best = int(np.argmax(fit))
    return pop[best].copy(), float(fit[best]), history


def _pick_distinct(rng, n, exclude):
    idx = []
    while len(idx) < 3:
        j = int(rng.integers(n))
        if j != exclude and j not in idx:
            idx.append(j)
    return idx


def write_fitness(params: MemoryParams, genes, input_mode, peak: float = 1.0,
                  duration: float = 1.0) -> float:
    """Storage efficiency of the write pulse generated from ``genes``.

    ``genes`` may be a :class:`WritePulseGenes` or a length-2 array
    (tau0, fwhm).  Invariant under a global phase of the input mode since
    only energies enter.
    """
    g = genes if isinstance(genes, WritePulseGenes) else WritePulseGenes(*np.asarray(genes, dtype=float))
    vals = write_fitness_population(params, g.as_array()[None, :], input_mode,
                                    peak=peak, duration=duration)
    return float(vals[0])


def write_fitness_population(params: MemoryParams, genes_matrix, input_mode,
                             peak: float = 1.0, duration: float = 1.0) -> np.ndarray:
    """Vectorized storage efficiency for a (P, 2) matrix of gene vectors.

    All population members propagate through one lattice sweep with a
    per-member control envelope, so a whole generation costs about as much
    as a single solve.
    """
    genes_matrix = np.asarray(genes_matrix, dtype=float)
    if genes_matrix.ndim != 2 or genes_matrix.shape[1] != 2:
        raise ValueError(f"genes_matrix must be (P, 2), got {genes_matrix.shape}")
    if np.any(genes_matrix[:, 1] <= 0):
        raise FitnessError("fwhm gene must be positive for every member")
    n_t = params.n_t
    t = time_grid(n_t, duration)
    tau0 = genes_matrix[:, 0][None, :]
    fwhm = genes_matrix[:, 1][None, :]
    env = peak * np.exp(-4.0 * math.log(2.0) * (t[:, None] - tau0) ** 2 / fwhm**2)
    dt = duration / n_t
    u = np.asarray(input_mode, dtype=complex)
    if u.shape != (n_t,):
        raise ValueError(f"input_mode must have {n_t} samples, got {u.shape}")
    e_in = float(np.sum(np.abs(u) ** 2) * dt)
    if e_in <= 0:
        raise ValueError("input mode carries no energy")
    n_pop = genes_matrix.shape[0]
    coeffs = _cell_coefficients(params, env.astype(complex), dt)
    sig_in = np.repeat((u * math.sqrt(dt))[:, None], n_pop, axis=1)
    anti_in = np.zeros_like(sig_in)
    spin0 = np.zeros((params.n_z, n_pop), dtype=complex)
    _, _, spin, _, _ = _sweep(coeffs, sig_in, anti_in, spin0)
    return np.sum(np.abs(spin) ** 2, axis=0) / e_in


def de_history_to_csv(history, path):
    with open(path, "w") as fh:
        fh.write("# differential-evolution history (fitness maximized)\n")
        n_genes = history[0].best_genes.size if history else 0
        gene_cols = ",".join(f"best_gene_{j}" for j in range(n_genes))
        fh.write(f"generation,best_fitness,mean_fitness,{gene_cols}\n")
        for rec in history:
            genes = ",".join(f"{g:.12g}" for g in rec.best_genes)
            fh.write(f"{rec.generation},{rec.best_fitness:.12g},{rec.mean_fitness:.12g},{genes}\n")

"""Imperfection campaigns: positional disorder, nonradiative decay, dephasing."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .couplings import EmitterChain
from .darkstates import dark_observers
from .fullspace import IntegrationError, default_dt, evolve, inverted_state, mean_excitation

DEFAULT_SAMPLES = 200


def standard_observers(chain: EmitterChain) -> dict:
    """Ensemble excitations plus projections onto the ideal dark manifold."""
    obs = {
        "pumped": lambda s: mean_excitation(s, chain.pumped_sites),
        "unpumped": lambda s: mean_excitation(s, chain.unpumped_sites),
    }
    obs.update(dark_observers(chain.n_total, chain.n_pumped, "full", weighted=False))
    return obs


@dataclass(frozen=True)
class DisorderCampaign:
    base: EmitterChain
    epsilon: float
    samples: int = DEFAULT_SAMPLES
    seed: int = 0
    t_final: float = 10.0
    dt: float | None = None
    stride: int = 1
    check_positivity: bool = False

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("epsilon", "samples", "seed", "t_final", "dt", "stride",
                                           "check_positivity")}
        d["base"] = self.base.to_dict()
        return d


@dataclass
class EnsembleStatistics:
    times: np.ndarray
    mean: dict
    stderr: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for k in self.mean:
            if len(self.mean[k]) != self.times.size or len(self.stderr[k]) != self.times.size:
                raise ValueError(f"series {k!r} does not match the time grid")
            if np.any(np.asarray(self.stderr[k]) < 0):
                raise ValueError(f"negative standard error in {k!r}")

    def columns(self) -> dict:
        cols = {"time": self.times}
        for k in self.mean:
            cols[f"{k}_mean"] = self.mean[k]
            cols[f"{k}_stderr"] = self.stderr[k]
        return cols


def emitter_normal(seed: int, sample: int, emitter: int) -> float:
    """Standard normal keyed on (seed, sample, emitter) via a counter-based stream."""
    ss = np.random.SeedSequence(seed, spawn_key=(sample, emitter))
    return float(np.random.Generator(np.random.Philox(ss)).standard_normal())


def sample_positions(base: EmitterChain, epsilon: float, rng_state: tuple) -> np.ndarray:
    """Lattice positions plus independent Gaussian(0, epsilon) deviations.

    ``rng_state`` is the (seed, sample) pair; emitter i draws from the stream
    keyed (seed, sample, i).  Positions are not re-sorted.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    seed, sample = rng_state
    lattice = np.arange(base.n_total) * base.spacing
    if epsilon == 0:
        return lattice
    dev = np.array([emitter_normal(seed, sample, i) for i in range(base.n_total)])
    return lattice + epsilon * dev


def _run_sample(args):
    camp, index, builder = args
    pos = sample_positions(camp.base, camp.epsilon, (camp.seed, index))
    chain = camp.base.with_positions(pos)
    obs = (builder or standard_observers)(chain)
    try:
        tr = evolve(inverted_state(chain), chain, t_final=camp.t_final, dt=camp.dt,
                    observers=obs, stride=camp.stride, check_positivity=camp.check_positivity)
    except IntegrationError as exc:
        raise IntegrationError(f"sample {index} (seed {camp.seed}): {exc}") from exc
    reordered = bool(np.any(np.diff(pos) <= 0))
    inv = {k: tr.metadata[k] for k in ("max_trace_drift", "max_hermiticity_error", "min_eigenvalue")
           if k in tr.metadata}
    return np.asarray(tr.times), {k: np.asarray(v) for k, v in tr.observables.items()}, reordered, inv


def _reduce(stack: np.ndarray):
    # anchoring on the first sample makes identical samples reproduce it exactly
    ref = stack[0]
    dev = stack - ref
    mean = ref + np.mean(dev, axis=0)
    if stack.shape[0] > 1:
        err = np.std(dev, axis=0, ddof=1) / np.sqrt(stack.shape[0])
    else:
        err = np.zeros_like(ref)
    return mean, err


def run_campaign(c: DisorderCampaign, observers=None, workers: int = 1) -> EnsembleStatistics:
    """Full-space trajectories for every disorder sample, aggregated in sample order.

    ``observers`` is a module-level function mapping the sampled
    :class:`EmitterChain` to an observer dict (so that it pickles for worker
    processes); the default records ensemble excitations and dark projections.
    """
    if c.base.n_total > 12:
        raise ValueError("disorder campaigns use the full-space solver (N <= 12)")
    jobs = [(c, i, observers) for i in range(c.samples)]
    if workers > 1 and c.samples > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_sample, jobs, chunksize=max(1, c.samples // (4 * workers))))
    else:
        results = [_run_sample(j) for j in jobs]
    times = results[0][0]
    names = list(results[0][1])
    mean, err = {}, {}
    for name in names:
        mean[name], err[name] = _reduce(np.stack([r[1][name] for r in results]))
    meta = {
        "campaign": c.to_dict(),
        "dt": c.dt if c.dt is not None else default_dt(c.base),
        "rng": "Philox keyed by SeedSequence(seed, spawn_key=(sample, emitter))",
        "reordered": any(r[2] for r in results),
        "reordered_samples": sum(r[2] for r in results),
        "max_trace_drift": max(r[3]["max_trace_drift"] for r in results),
        "max_hermiticity_error": max(r[3]["max_hermiticity_error"] for r in results),
    }
    if c.check_positivity:
        meta["min_eigenvalue"] = min(r[3]["min_eigenvalue"] for r in results)
    return EnsembleStatistics(times, mean, err, meta)


def imperfection_scan(chain: EmitterChain, kind: str, epsilons, t_final: float = 10.0,
                      dt: float | None = None, observers=None, stride: int = 1) -> dict:
    """One full-space run per epsilon with gamma_nr = eps * gamma or gamma_phi = eps * gamma."""
    if kind not in ("nonradiative", "dephasing"):
        raise ValueError(f"kind must be 'nonradiative' or 'dephasing', got {kind!r}")
    out = {}
    for eps in epsilons:
        if eps < 0:
            raise ValueError(f"epsilon must be >= 0, got {eps}")
        rate = eps * chain.gamma
        ch = dataclasses.replace(chain, gamma_nr=rate) if kind == "nonradiative" else \
            dataclasses.replace(chain, gamma_phi=rate)
        obs = (observers or standard_observers)(ch)
        tr = evolve(inverted_state(ch), ch, t_final=t_final, dt=dt, observers=obs, stride=stride)
        tr.metadata[kind] = eps
        out[eps] = tr
    return out

"""Analytic dark-state projections for the mirror configuration.

All combinatorial quantities are exact Python integers or ``Fraction`` values
and are converted to floating point only at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, prod

import mpmath
import numpy as np
from scipy.integrate import solve_ivp

from .dicke import DickeProductVector, ladder_sq


def _check_m(n: int, n_p: int, m: int) -> None:
    if n < 1 or not 0 <= n_p <= n:
        raise ValueError(f"need 0 <= n_p <= n with n >= 1, got n = {n}, n_p = {n_p}")
    if not 0 <= m <= min(n_p, n - n_p):
        raise ValueError(f"m = {m} outside [0, min(n_p, n - n_p)] = [0, {min(n_p, n - n_p)}]")


def raised_norm_sq(n: int, a: int) -> int:
    """||(S^dag)^a |G>||^2 for a spin-n/2 ladder, i.e. prod of A^2 along the ladder."""
    return prod(ladder_sq(n, x) for x in range(1, a + 1))


def _to_float_sqrt(x: int) -> float:
    try:
        return float(x) ** 0.5
    except OverflowError:
        return float(mpmath.sqrt(mpmath.mpf(x)))


@dataclass(frozen=True)
class DarkStateSpec:
    """|Psi_D> proportional to sum_k c_k (S_p^dag)^(M-k) (S_np^dag)^k |G>.

    ``weights[k]`` is the exact probability that k of the M excitations sit in
    the un-pumped ensemble.
    """

    n: int
    n_p: int
    m: int
    coeffs: tuple
    norm_sq: int
    weights: tuple = field(repr=False)

    @property
    def n_np(self) -> int:
        return self.n - self.n_p

    @property
    def norm(self) -> float:
        return _to_float_sqrt(self.norm_sq)

    @property
    def unpumped_exact(self) -> Fraction:
        return sum((k * w for k, w in enumerate(self.weights)), Fraction(0))

    @property
    def number_expectation_unpumped(self) -> float:
        return float(self.unpumped_exact)

    @property
    def number_expectation_pumped(self) -> float:
        return float(self.m - self.unpumped_exact)

    def amplitudes(self) -> np.ndarray:
        """Normalised amplitudes on the product-Dicke states |M-k, k>."""
        return np.array([(-1) ** k * float(w) ** 0.5 for k, w in enumerate(self.weights)])

    def dicke_vector(self) -> DickeProductVector:
        amp = np.zeros((self.n_p + 1, self.n_np + 1), dtype=complex)
        for k, x in enumerate(self.amplitudes()):
            amp[self.m - k, k] = x
        return DickeProductVector(self.n_p, self.n_np, amp)

    def full_vector(self) -> np.ndarray:
        """Normalised state in the 2^N space (kron order, pumped sites first)."""
        return dark_state_vector(self, normalise=True)


@lru_cache(maxsize=None)
def dark_state(n: int, n_p: int, m: int) -> DarkStateSpec:
    _check_m(n, n_p, m)
    n_np = n - n_p
    coeffs = tuple((-1) ** k * comb(n_p - m + k, k) * comb(n_np - k, m - k) for k in range(m + 1))
    terms = [c * c * raised_norm_sq(n_p, m - k) * raised_norm_sq(n_np, k) for k, c in enumerate(coeffs)]
    total = sum(terms)
    weights = tuple(Fraction(t, total) for t in terms)
    return DarkStateSpec(n, n_p, m, coeffs, total, weights)


def recursion_ratio(n: int, n_p: int, m: int, k: int) -> Fraction:
    """r_k / r_(k-1) for the coefficient magnitudes."""
    return Fraction((n_p - m + k) * (m - k + 1), k * (n - n_p - k + 1))


def verify_recursion(spec: DarkStateSpec) -> bool:
    c = spec.coeffs
    if len(c) != spec.m + 1 or c[0] == 0:
        return False
    for k in range(1, spec.m + 1):
        if c[k] == 0 or (c[k] > 0) != (k % 2 == 0):
            return False
        if Fraction(abs(c[k]), abs(c[k - 1])) != recursion_ratio(spec.n, spec.n_p, spec.m, k):
            return False
    return True


def dark_state_vector(spec: DarkStateSpec, normalise: bool = True) -> np.ndarray:
    """Brute-force expansion of the dark state by repeated raising of |G>."""
    from .fullspace import ground_vector, raise_vector

    pumped = range(spec.n_p)
    unpumped = range(spec.n_p, spec.n)
    psi = np.zeros(2**spec.n, dtype=complex)
    for k, c in enumerate(spec.coeffs):
        v = ground_vector(spec.n)
        for _ in range(k):
            v = raise_vector(v, unpumped)
        for _ in range(spec.m - k):
            v = raise_vector(v, pumped)
        psi += c * v
    if normalise:
        psi /= np.linalg.norm(psi)
    return psi


@dataclass(frozen=True)
class HierarchyCoefficients:
    m: int
    big_c: int
    c_k: tuple
    ell: int
    initial_top_exact: Fraction

    @property
    def initial_top(self) -> float:
        return float(self.initial_top_exact)

    def distinct(self) -> bool:
        return len(set(self.c_k)) == len(self.c_k)


def initial_top_exact(n: int, n_p: int, m: int) -> Fraction:
    """|<Psi_D| S^l |Psi(0)>|^2 with l = n_p - m.

    Only the pumped ladder contributes: S^l lowers |n_p, 0> to |m, 0> with
    amplitude prod sqrt(A^2), and the dark state has weight p_0 there.
    """
    spec = dark_state(n, n_p, m)
    return spec.weights[0] * prod(ladder_sq(n_p, a) for a in range(m + 1, n_p + 1))


def initial_top_projection(n: int, n_p: int, m: int) -> float:
    return float(initial_top_exact(n, n_p, m))


@lru_cache(maxsize=None)
def hierarchy(n: int, n_p: int, m: int) -> HierarchyCoefficients:
    _check_m(n, n_p, m)
    big_c = n - 2 * m + 1
    ell = n_p - m
    return HierarchyCoefficients(m, big_c, tuple(k * (big_c - k) for k in range(ell + 1)), ell,
                                 initial_top_exact(n, n_p, m))


def partial_fraction_weights(h: HierarchyCoefficients) -> list:
    """Exact a_j = prod_{i != j} 1 / (C_i - C_j), so that the bottom level is
    top_0 * sum_j a_j exp(-gamma C_j t)."""
    out = []
    for j, cj in enumerate(h.c_k):
        den = prod(ci - cj for i, ci in enumerate(h.c_k) if i != j)
        out.append(Fraction(1, den))
    return out


def projection_trajectory(n: int, n_p: int, m: int, times, gamma: float = 1.0) -> np.ndarray:
    """Closed-form bottom-level projection for n_p <= n/2."""
    if 2 * n_p > n:
        raise ValueError("closed form needs n_p <= n/2 (C_k degenerate otherwise); "
                         "use hierarchy_integrate")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be non-negative")
    h = hierarchy(n, n_p, m)
    coef = [w * h.initial_top_exact for w in partial_fraction_weights(h)]
    scale = sum(abs(c) for c in coef)
    if scale < 100:
        # cancellation bounded by scale * eps, well below 1e-12
        rates = np.array(h.c_k, dtype=float)
        return np.exp(-gamma * np.outer(times, rates)) @ np.array([float(c) for c in coef])
    digits = 20 + int(mpmath.log10(mpmath.mpf(scale.numerator) / scale.denominator)) + 1
    with mpmath.workdps(digits):
        cm = [mpmath.mpf(c.numerator) / c.denominator for c in coef]
        out = [float(mpmath.fsum(a * mpmath.exp(-gamma * ck * mpmath.mpf(t)) for a, ck in zip(cm, h.c_k)))
               for t in times]
    return np.array(out)


def hierarchy_integrate(n: int, n_p: int, m: int, t_final: float, dt: float, gamma: float = 1.0,
                        extra_levels: int = 0, levels: bool = False, rtol: float = 1e-12,
                        atol: float = 1e-15):
    """Integrate the cascaded level equations on a uniform output grid.

    Returns ``(times, values)``; ``values`` is the bottom level, or every level
    (shape (len(times), ell + 1 + extra_levels)) when ``levels`` is true.
    Levels above ell start empty and have no source.
    """
    h = hierarchy(n, n_p, m)
    size = h.ell + 1 + extra_levels
    big_c = h.big_c
    rates = np.array([k * (big_c - k) for k in range(size)], dtype=float)
    y0 = np.zeros(size)
    y0[h.ell] = h.initial_top
    a = np.diag(-gamma * rates) + np.diag(np.full(size - 1, gamma), 1)
    steps = max(1, int(round(t_final / dt)))
    times = np.linspace(0.0, t_final, steps + 1)
    sol = solve_ivp(lambda t, y: a @ y, (0.0, t_final), y0, method="DOP853", t_eval=times,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"hierarchy integration failed: {sol.message}")
    y = sol.y.T
    return times, (y if levels else y[:, 0])


def _steady_direct(n: int, n_p: int, m: int) -> Fraction:
    """Long-time limit of the cascade, top_0 / prod_{k=1..l} C_k.  Valid for any n_p."""
    h = hierarchy(n, n_p, m)
    return h.initial_top_exact / prod(h.c_k[1:])


def steady_projection_exact(n: int, n_p: int, m: int) -> Fraction:
    _check_m(n, n_p, m)
    if 2 * n_p > n:
        return _steady_direct(n, n - n_p, m)
    return _steady_direct(n, n_p, m)


def steady_projection(n: int, n_p: int, m: int) -> float:
    return float(steady_projection_exact(n, n_p, m))


def steady_mean_excitations_exact(n: int, n_p: int):
    pumped = unpumped = Fraction(0)
    for m in range(min(n_p, n - n_p) + 1):
        w = steady_projection_exact(n, n_p, m)
        x = dark_state(n, n_p, m).unpumped_exact
        unpumped += w * x
        pumped += w * (m - x)
    return pumped, unpumped


def steady_mean_excitations(n: int, n_p: int) -> tuple:
    p, q = steady_mean_excitations_exact(n, n_p)
    return float(p), float(q)


def transfer_ratio_exact(n: int, n_p: int) -> Fraction:
    if n_p < 1:
        raise ValueError("transfer ratio needs n_p >= 1")
    return steady_mean_excitations_exact(n, n_p)[1] / n_p


def transfer_ratio(n: int, n_p: int) -> float:
    return float(transfer_ratio_exact(n, n_p))


def transfer_scan(n: int) -> list:
    """T for n_p = 1..n."""
    return [transfer_ratio(n, n_p) for n_p in range(1, n + 1)]


def optimal_pumping(n: int) -> tuple:
    """(T_max, n_p*) over n_p = 1..n; ties go to the smaller n_p."""
    if n < 2:
        raise ValueError("optimal pumping scan needs n >= 2")
    exact = [transfer_ratio_exact(n, n_p) for n_p in range(1, n + 1)]
    best = max(exact)
    return float(best), exact.index(best) + 1


def sweep(n_values, workers: int = 1):
    """Heatmap rows (n, n_p, T) and optimum rows (n, t_max, n_p_star, ratio)."""
    n_values = list(n_values)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            scans = list(ex.map(transfer_scan, n_values))
    else:
        scans = [transfer_scan(n) for n in n_values]
    heat, best = [], []
    for n, ts in zip(n_values, scans):
        heat.extend((n, k + 1, t) for k, t in enumerate(ts))
        if n >= 2:
            t_max, star = optimal_pumping(n)
            best.append((n, t_max, star, star / n))
    return heat, best


def dark_projection_total(n: int, n_p: int) -> Fraction:
    """Total steady weight in the ideal dark manifold (1 in the ideal mirror case)."""
    return sum(steady_projection_exact(n, n_p, m) for m in range(min(n_p, n - n_p) + 1))


def dark_observers(n: int, n_p: int, solver: str = "full", weighted: bool = True) -> dict:
    """Observers for the ideal dark-manifold projections of a trajectory.

    Gives ``dark_M{m}`` for every admissible m, their sum ``dark_total`` and, when
    ``weighted``, the dark-manifold share of each ensemble's excitation
    (``dark_pumped``, ``dark_unpumped``).  Works on full-space states
    (``solver="full"``) or product-Dicke densities (``"reduced"``).
    """
    specs = [dark_state(n, n_p, m) for m in range(min(n_p, n - n_p) + 1)]
    if solver == "full":
        from .fullspace import _projector

        probes = [_projector(n, s.full_vector()) for s in specs]
    elif solver == "reduced":
        vecs = [s.dicke_vector() for s in specs]
        probes = [lambda st, clamp=True, v=v: st.project(v) for v in vecs]
    else:
        raise ValueError(f"solver must be 'full' or 'reduced', got {solver!r}")
    # one evaluation per sampled state; holding the state keeps its id from being reused
    cache = {"state": None, "time": None, "vals": None}

    def values(state):
        if cache["state"] is not state or cache["time"] != state.time:
            cache.update(state=state, time=state.time, vals=[p(state, True) for p in probes])
        return cache["vals"]

    obs = {f"dark_M{s.m}": (lambda st, i=i: values(st)[i]) for i, s in enumerate(specs)}
    obs["dark_total"] = lambda st: float(sum(values(st)))
    if weighted:
        xp = [s.number_expectation_pumped for s in specs]
        xq = [s.number_expectation_unpumped for s in specs]
        obs["dark_pumped"] = lambda st: float(np.dot(values(st), xp))
        obs["dark_unpumped"] = lambda st: float(np.dot(values(st), xq))
    return obs

"""Permutation-symmetric reduction for the mirror configuration.

States live on the product basis |N_p/2, -N_p/2 + a> (x) |N_np/2, -N_np/2 + b>
with ``a`` excitations in the pumped and ``b`` in the un-pumped ensemble.  The
flat index of (a, b) is ``a * (N_np + 1) + b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, sqrt

import numpy as np
from scipy import sparse

from . import kernels
from .couplings import EmitterChain
from .fullspace import IntegrationError, _resolve_grid, default_dt, sector_basis, site_bit
from .trajectory import Trajectory


def ladder_coeff(n: int, m) -> float:
    """A_m = sqrt((n/2)(n/2 + 1) - m(m + 1)) for a spin-n/2 Dicke ladder."""
    m = Fraction(m).limit_denominator(2)
    j = Fraction(n, 2)
    if n < 0 or abs(m) > j or (m + j).denominator != 1:
        raise ValueError(f"invalid Dicke label m = {m} for n = {n}")
    return sqrt((j - m) * (j + m + 1))


def ladder_sq(n: int, a: int) -> int:
    """A^2 for lowering |a> -> |a-1> on a spin-n/2 ladder, as an exact integer."""
    if not 0 <= a <= n:
        raise ValueError(f"excitation number {a} outside [0, {n}]")
    return a * (n - a + 1)


def ladder_table(n: int) -> np.ndarray:
    """Lowering amplitudes s[a] = <a-1| S |a> for a = 0..n (s[0] = 0)."""
    out = np.zeros(n + 1)
    for a in range(1, n + 1):
        out[a] = ladder_coeff(n, Fraction(-n, 2) + a - 1)
    return out


def basis_size(n_p: int, n_np: int) -> int:
    return (n_p + 1) * (n_np + 1)


@dataclass
class DickeProductVector:
    n_p_max: int
    n_np_max: int
    amp: np.ndarray  # shape (n_p_max + 1, n_np_max + 1)

    def __post_init__(self):
        self.amp = np.asarray(self.amp, dtype=complex)
        if self.amp.shape != (self.n_p_max + 1, self.n_np_max + 1):
            raise ValueError(f"amplitude array must have shape {(self.n_p_max + 1, self.n_np_max + 1)}")

    @property
    def flat(self) -> np.ndarray:
        return self.amp.reshape(-1)

    def norm_sq(self) -> float:
        return float(np.vdot(self.flat, self.flat).real)

    def density(self, time: float = 0.0) -> "DickeProductDensity":
        v = self.flat
        return DickeProductDensity(self.n_p_max, self.n_np_max, np.outer(v, v.conj()), time)


@dataclass
class DickeProductDensity:
    n_p_max: int
    n_np_max: int
    rho: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        d = basis_size(self.n_p_max, self.n_np_max)
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.shape != (d, d):
            raise ValueError(f"density must be {d} x {d}, got {self.rho.shape}")

    @property
    def tensor(self) -> np.ndarray:
        p, q = self.n_p_max + 1, self.n_np_max + 1
        return self.rho.reshape(p, q, p, q)

    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    def populations(self) -> np.ndarray:
        """P(a, b) on the diagonal, shape (n_p_max + 1, n_np_max + 1)."""
        return np.real(np.diagonal(self.rho)).reshape(self.n_p_max + 1, self.n_np_max + 1)

    def mean_pumped(self) -> float:
        return float(self.populations().sum(axis=1) @ np.arange(self.n_p_max + 1))

    def mean_unpumped(self) -> float:
        return float(self.populations().sum(axis=0) @ np.arange(self.n_np_max + 1))

    def project(self, v: DickeProductVector) -> float:
        x = v.flat
        return float(np.vdot(x, self.rho @ x).real)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T)).min())


def collective_lowering(n_p: int, n_np: int, which: str = "total") -> sparse.csr_matrix:
    """S_p, S_np or S = S_p + S_np as a sparse matrix on the product basis."""
    if which not in ("pumped", "unpumped", "total"):
        raise ValueError(f"which must be 'pumped', 'unpumped' or 'total', got {which!r}")
    q = n_np + 1
    rows, cols, vals = [], [], []
    if which in ("pumped", "total"):
        sp = ladder_table(n_p)
        for a in range(1, n_p + 1):
            for b in range(q):
                rows.append((a - 1) * q + b)
                cols.append(a * q + b)
                vals.append(sp[a])
    if which in ("unpumped", "total"):
        sq = ladder_table(n_np)
        for a in range(n_p + 1):
            for b in range(1, q):
                rows.append(a * q + b - 1)
                cols.append(a * q + b)
                vals.append(sq[b])
    d = basis_size(n_p, n_np)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(d, d))


def collective_sz(n_p: int, n_np: int) -> sparse.csr_matrix:
    """S_z with eigenvalue (a + b) - N/2 on |a, b>."""
    a = np.repeat(np.arange(n_p + 1), n_np + 1)
    b = np.tile(np.arange(n_np + 1), n_p + 1)
    return sparse.diags((a + b) - 0.5 * (n_p + n_np)).tocsr()


def initial_state(chain: EmitterChain) -> DickeProductVector:
    """Pumped ensemble fully inverted, un-pumped in the ground state."""
    amp = np.zeros((chain.n_pumped + 1, chain.n_unpumped + 1), dtype=complex)
    amp[chain.n_pumped, 0] = 1.0
    return DickeProductVector(chain.n_pumped, chain.n_unpumped, amp)


def embed(v: DickeProductVector) -> np.ndarray:
    """Full-space vector (kron order, pumped sites first) for a product-basis vector."""
    n_p, n_np = v.n_p_max, v.n_np_max
    n = n_p + n_np
    basis = sector_basis(n)
    idx = np.arange(2**n)
    pmask = sum(site_bit(n, j) for j in range(n_p))
    a = basis.popcount[idx & pmask]
    b = basis.popcount[idx & ~pmask]
    norm = np.array([[1.0 / sqrt(comb(n_p, x) * comb(n_np, y)) for y in range(n_np + 1)]
                     for x in range(n_p + 1)])
    return (v.amp * norm)[a, b]


def _check_reduced(chain: EmitterChain) -> None:
    if not chain.is_mirror():
        raise ValueError("the reduced solver requires the mirror configuration "
                         "(all separations integer multiples of the wavelength)")
    if chain.gamma_phi > 0:
        raise ValueError("dephasing leaves the symmetric sector; use the full-space solver")
    if chain.gamma_nr > 0:
        raise ValueError("individual nonradiative decay leaves the symmetric sector; "
                         "use the full-space solver")


def reduced_rhs(state: DickeProductDensity, chain: EmitterChain) -> DickeProductDensity:
    """-(gamma/2){S^dag S, rho} + gamma S rho S^dag on the product basis."""
    _check_reduced(chain)
    _check_dims(state, chain)
    sp, sq = ladder_table(state.n_p_max), ladder_table(state.n_np_max)
    out = kernels.reduced_rhs(np.ascontiguousarray(state.tensor), sp, sq, chain.gamma)
    return DickeProductDensity(state.n_p_max, state.n_np_max, out.reshape(state.rho.shape), state.time)


def _check_dims(state, chain):
    if (state.n_p_max, state.n_np_max) != (chain.n_pumped, chain.n_unpumped):
        raise ValueError(f"state is for ({state.n_p_max}, {state.n_np_max}) ensembles, chain is "
                         f"({chain.n_pumped}, {chain.n_unpumped})")


def default_observers() -> dict:
    return {
        "pumped": DickeProductDensity.mean_pumped,
        "unpumped": DickeProductDensity.mean_unpumped,
        "trace": DickeProductDensity.trace,
    }


def reduced_evolve(state0, chain: EmitterChain, t_final: float = 10.0, dt: float | None = None,
                   observers: dict | None = None, stride: int = 1, check_positivity: bool = False,
                   trace_tol: float = 1e-6) -> Trajectory:
    """Fixed-step RK4 on the product basis; same sampling contract as
    :func:`wgdark.fullspace.evolve`."""
    _check_reduced(chain)
    if isinstance(state0, DickeProductVector):
        state0 = state0.density()
    _check_dims(state0, chain)
    dt = default_dt(chain) if dt is None else dt
    n_steps, dt = _resolve_grid(t_final, dt)
    observers = default_observers() if observers is None else observers
    stride = max(1, int(stride))
    sp, sq = ladder_table(chain.n_pumped), ladder_table(chain.n_unpumped)
    rho = np.ascontiguousarray(state0.tensor.copy())
    tr0 = state0.trace()
    times, series = [], {name: [] for name in observers}
    worst = {"trace": 0.0, "hermiticity": 0.0, "min_eigenvalue": np.inf}

    def sample(step):
        st = DickeProductDensity(chain.n_pumped, chain.n_unpumped, rho.reshape(state0.rho.shape),
                                 state0.time + step * dt)
        drift = abs(st.trace() - tr0)
        worst["trace"] = max(worst["trace"], drift)
        if not drift <= trace_tol:  # also catches NaN
            raise IntegrationError(f"trace drifted by {drift:.3e} at t = {st.time:.4g}; reduce dt (now {dt:g})")
        worst["hermiticity"] = max(worst["hermiticity"], st.hermiticity_error())
        if check_positivity:
            ev = st.min_eigenvalue()
            worst["min_eigenvalue"] = min(worst["min_eigenvalue"], ev)
            if ev < -1e-7:
                raise IntegrationError(f"density matrix lost positivity (min eigenvalue {ev:.3e})")
        times.append(st.time)
        for name, fn in observers.items():
            series[name].append(fn(st))
        return st

    final = sample(0)
    done = 0
    while done < n_steps:
        chunk = min(stride - done % stride, n_steps - done)
        rho = kernels.reduced_rk4(rho, sp, sq, chain.gamma, dt, chunk)
        done += chunk
        final = sample(done)
    meta = {
        "solver": "reduced",
        "backend": kernels.BACKEND,
        "chain": chain.to_dict(),
        "dt": dt,
        "t_final": t_final,
        "stride": stride,
        "max_trace_drift": worst["trace"],
        "max_hermiticity_error": worst["hermiticity"],
    }
    if check_positivity:
        meta["min_eigenvalue"] = worst["min_eigenvalue"]
    return Trajectory(times=times, observables=series, metadata=meta, final_state=final)

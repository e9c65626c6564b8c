"""Brute-force master-equation solver on the full 2^N emitter space.

Basis states are labelled by integers in kron order: emitter 0 is the most
significant bit and a set bit means the emitter is excited.  The generator
conserves the excitation-number difference between ket and bra, so density
matrices are stored as blocks ``(k, k')`` between excitation sectors; this is
an exact rewriting of the dense equations, not a truncation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

from . import kernels
from .couplings import CouplingMatrices, EmitterChain, build_couplings
from .trajectory import Trajectory

MAX_EMITTERS = 12


class IntegrationError(RuntimeError):
    """Raised when a trajectory leaves the physical state space."""


def _check_size(n: int) -> None:
    if n > MAX_EMITTERS:
        raise ValueError(f"full-space solver is limited to N <= {MAX_EMITTERS}, got N = {n}")


def site_bit(n: int, site: int) -> int:
    return 1 << (n - 1 - site)


@dataclass(frozen=True)
class SectorBasis:
    n: int
    states: tuple  # states[k]: ascending full indices with k excitations
    position: np.ndarray  # full index -> position inside its sector
    popcount: np.ndarray

    def dim(self, k: int) -> int:
        return self.states[k].size

    def occupation(self, k: int) -> np.ndarray:
        """Boolean (d_k, N) table: is emitter j excited in the i-th state."""
        bits = np.array([site_bit(self.n, j) for j in range(self.n)])
        return (self.states[k][:, None] & bits[None, :]) != 0


@lru_cache(maxsize=None)
def sector_basis(n: int) -> SectorBasis:
    _check_size(n)
    idx = np.arange(2**n)
    pop = np.array([bin(i).count("1") for i in idx])
    states = tuple(idx[pop == k] for k in range(n + 1))
    position = np.empty(2**n, dtype=np.int64)
    for s in states:
        position[s] = np.arange(s.size)
    return SectorBasis(n=n, states=states, position=position, popcount=pop)


@dataclass
class DenseState:
    """Density matrix over the 2^N configurations, held as sector blocks.

    ``rho`` assembles the dense matrix on demand.
    """

    blocks: dict
    n: int
    time: float = 0.0

    @classmethod
    def from_matrix(cls, rho, time: float = 0.0, atol: float = 0.0) -> "DenseState":
        rho = np.asarray(rho, dtype=complex)
        n = int(round(np.log2(rho.shape[0])))
        if rho.shape != (2**n, 2**n):
            raise ValueError(f"density matrix must be 2^N x 2^N, got {rho.shape}")
        basis = sector_basis(n)
        blocks = {}
        for k, sk in enumerate(basis.states):
            for kp, skp in enumerate(basis.states):
                b = rho[np.ix_(sk, skp)]
                if np.any(np.abs(b) > atol):
                    blocks[(k, kp)] = b.copy()
        return cls(blocks=blocks, n=n, time=time)

    @classmethod
    def from_vector(cls, psi, time: float = 0.0) -> "DenseState":
        psi = np.asarray(psi, dtype=complex)
        n = int(round(np.log2(psi.size)))
        if psi.size != 2**n:
            raise ValueError(f"state vector must have 2^N entries, got {psi.size}")
        basis = sector_basis(n)
        parts = {k: psi[s] for k, s in enumerate(basis.states) if np.any(psi[s] != 0)}
        blocks = {(k, kp): np.outer(parts[k], parts[kp].conj()) for k in parts for kp in parts}
        return cls(blocks=blocks, n=n, time=time)

    @classmethod
    def basis_state(cls, n: int, excited) -> "DenseState":
        _check_size(n)
        idx = sum(site_bit(n, j) for j in set(excited))
        psi = np.zeros(2**n, dtype=complex)
        psi[idx] = 1.0
        return cls.from_vector(psi)

    @property
    def rho(self) -> np.ndarray:
        basis = sector_basis(self.n)
        out = np.zeros((2**self.n, 2**self.n), dtype=complex)
        for (k, kp), b in self.blocks.items():
            out[np.ix_(basis.states[k], basis.states[kp])] = b
        return out

    def copy(self) -> "DenseState":
        return DenseState({key: b.copy() for key, b in self.blocks.items()}, self.n, self.time)

    def trace(self) -> complex:
        return sum(np.trace(b) for (k, kp), b in self.blocks.items() if k == kp)

    def hermiticity_error(self) -> float:
        err = 0.0
        for (k, kp), b in self.blocks.items():
            other = self.blocks.get((kp, k))
            if other is None:
                err = max(err, float(np.max(np.abs(b))))
            else:
                err = max(err, float(np.max(np.abs(b - other.conj().T))))
        return err

    def min_eigenvalue(self) -> float:
        if all(k == kp for k, kp in self.blocks):
            return min(float(np.linalg.eigvalsh(0.5 * (b + b.conj().T)).min()) for b in self.blocks.values())
        r = self.rho
        return float(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min())

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(b))) for b in self.blocks.values()), default=0.0)


def inverted_state(chain: EmitterChain) -> DenseState:
    """Pumped ensemble fully excited, the rest in the ground state."""
    return DenseState.basis_state(chain.n_total, chain.pumped_sites)


def ground_vector(n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    return psi


def lower_vector(psi, sites) -> np.ndarray:
    """Apply sum_{j in sites} sigma_j to a full-space vector."""
    psi = np.asarray(psi, dtype=complex)
    n = int(round(np.log2(psi.size)))
    idx = np.arange(psi.size)
    out = np.zeros_like(psi)
    for j in sites:
        b = site_bit(n, j)
        has = (idx & b) != 0
        out[idx[has] ^ b] += psi[has]
    return out


def raise_vector(psi, sites) -> np.ndarray:
    """Apply sum_{j in sites} sigma_j^dagger to a full-space vector."""
    psi = np.asarray(psi, dtype=complex)
    n = int(round(np.log2(psi.size)))
    idx = np.arange(psi.size)
    out = np.zeros_like(psi)
    for j in sites:
        b = site_bit(n, j)
        lacks = (idx & b) == 0
        out[idx[lacks] | b] += psi[lacks]
    return out


def _lowering_pairs(n: int, k: int, site: int):
    """(row in sector k-1, column in sector k) pairs where sigma_site acts."""
    basis = sector_basis(n)
    b = site_bit(n, site)
    s = basis.states[k]
    cols = np.nonzero(s & b)[0]
    rows = basis.position[s[cols] ^ b]
    return rows, cols


class EffectiveHamiltonian:
    """Non-Hermitian effective Hamiltonian, built sector by sector.

    ``pair`` is the N x N matrix multiplying sigma_m^dagger sigma_n.
    """

    def __init__(self, n: int, pair: np.ndarray):
        _check_size(n)
        self.n = n
        self.pair = np.asarray(pair, dtype=complex)
        self._blocks: dict[int, np.ndarray] = {}

    def block(self, k: int) -> np.ndarray:
        h = self._blocks.get(k)
        if h is None:
            h = self._build(k)
            self._blocks[k] = h
        return h

    def _build(self, k: int) -> np.ndarray:
        n = self.n
        basis = sector_basis(n)
        s = basis.states[k]
        h = np.zeros((s.size, s.size), dtype=complex)
        if k == 0:
            return h
        cols_all = np.arange(s.size)
        for nn in range(n):
            bn = site_bit(n, nn)
            has_n = (s & bn) != 0
            if not has_n.any():
                continue
            for m in range(n):
                a = self.pair[m, nn]
                if a == 0:
                    continue
                if m == nn:
                    h[cols_all[has_n], cols_all[has_n]] += a
                    continue
                bm = site_bit(n, m)
                sel = has_n & ((s & bm) == 0)
                if not sel.any():
                    continue
                targets = basis.position[(s[sel] ^ bn) | bm]
                h[targets, cols_all[sel]] += a
        return h

    def dense(self) -> np.ndarray:
        basis = sector_basis(self.n)
        out = np.zeros((2**self.n, 2**self.n), dtype=complex)
        for k, s in enumerate(basis.states):
            out[np.ix_(s, s)] = self.block(k)
        return out


def build_h_eff(chain: EmitterChain, c: CouplingMatrices | None = None) -> EffectiveHamiltonian:
    """sum (J_mn - i g_mn / 2) s_m^+ s_n - i (gamma_nr + 2 gamma_phi)/2 sum_n s_n^+ s_n."""
    c = build_couplings(chain) if c is None else c
    if c.n != chain.n_total:
        raise ValueError(f"couplings are {c.n} x {c.n} but the chain has {chain.n_total} emitters")
    pair = c.j - 0.5j * c.g
    pair = pair - 0.5j * (chain.gamma_nr + 2.0 * chain.gamma_phi) * np.eye(chain.n_total)
    return EffectiveHamiltonian(chain.n_total, pair)


class _CSR:
    """Sparse operator block whose products go through the kernel backend."""

    __slots__ = ("indptr", "indices", "data", "shape")

    def __init__(self, m: np.ndarray):
        a = sparse.csr_matrix(m)
        self.indptr, self.indices, self.shape = a.indptr, a.indices, a.shape
        real = np.isrealobj(a.data) or not a.data.imag.any()
        self.data = np.ascontiguousarray(a.data.real if real else a.data)

    def __matmul__(self, x):
        return kernels.csr_matmul(self.indptr, self.indices, self.data, x)


def _compact(m: np.ndarray):
    """CSR for large sparse operator blocks; small ones stay dense for BLAS."""
    if m.size >= 4096 and np.count_nonzero(m) < 0.25 * m.size:
        return _CSR(m)
    return m


class Generator:
    """Right-hand side of the master equation acting on sector blocks.

    The jump term sum_mn G_mn s_m rho s_n^dagger with G = g + gamma_nr * 1 is
    diagonalised into independent channels; channels with vanishing rate are
    dropped.  Hamiltonian and jump blocks are sparse: within a sector every
    column has at most 1 + k (N - k) nonzeros.
    """

    def __init__(self, chain: EmitterChain, c: CouplingMatrices | None = None,
                 h: EffectiveHamiltonian | None = None):
        _check_size(chain.n_total)
        self.chain = chain
        self.n = chain.n_total
        self.c = build_couplings(chain) if c is None else c
        if self.c.n != self.n:
            raise ValueError(f"couplings are {self.c.n} x {self.c.n} but the chain has {self.n} emitters")
        self.h = build_h_eff(chain, self.c) if h is None else h
        if self.h.n != self.n:
            raise ValueError("effective Hamiltonian dimension does not match the chain")
        rates, vecs = np.linalg.eigh(self.c.g + chain.gamma_nr * np.eye(self.n))
        keep = np.abs(rates) > 1e-13 * max(np.abs(rates).max(), 1.0)
        self.rates = rates[keep]
        self.modes = vecs[:, keep]
        self._h: dict[int, sparse.csr_matrix] = {}
        self._left: dict[int, sparse.csr_matrix] = {}
        self._right: dict[int, sparse.csr_matrix] = {}
        self._deph: dict[tuple, np.ndarray] = {}

    def _h_sparse(self, k):
        m = self._h.get(k)
        if m is None:
            m = self._h[k] = _compact(self.h.block(k))
        return m

    def _jump_left(self, k):
        """Channels stacked vertically: (nch * d_{k-1}, d_k)."""
        m = self._left.get(k)
        if m is None:
            m = self._left[k] = _compact(self._channels(k).reshape(-1, sector_basis(self.n).dim(k)))
        return m

    def _jump_right(self, k):
        """Rate-weighted channels stacked horizontally: (d_{k-1}, nch * d_k)."""
        m = self._right.get(k)
        if m is None:
            stack = self.rates[:, None, None] * self._channels(k)
            m = self._right[k] = _compact(np.concatenate(list(stack), axis=1))
        return m

    def _channels(self, k):
        basis = sector_basis(self.n)
        stack = np.zeros((self.rates.size, basis.dim(k - 1), basis.dim(k)))
        for site in range(self.n):
            rows, cols = _lowering_pairs(self.n, k, site)
            stack[:, rows, cols] += self.modes[site][:, None]
        return stack

    def _dephasing(self, k, kp):
        w = self._deph.get((k, kp))
        if w is None:
            basis = sector_basis(self.n)
            both = basis.states[k][:, None] & basis.states[kp][None, :]
            w = 2.0 * self.chain.gamma_phi * basis.popcount[both]
            self._deph[(k, kp)] = w
        return w

    def apply_blocks(self, blocks: dict, hermitian: bool = False) -> dict:
        """Generator applied to sector blocks.

        With ``hermitian=True`` the blocks must describe a Hermitian matrix
        (block (k', k) present and equal to the adjoint of (k, k')); rho H^dagger
        is then read off from H rho.
        """
        hr = {key: self._h_sparse(key[0]) @ r for key, r in blocks.items()}
        out = {}
        for (k, kp), r in blocks.items():
            if hermitian:
                rh = hr[(kp, k)].conj().T
            else:
                rh = (self._h_sparse(kp) @ r.conj().T).conj().T
            d = -1j * (hr[(k, kp)] - rh)
            if self.chain.gamma_phi > 0:
                d += self._dephasing(k, kp) * r
            out[(k, kp)] = d
        if self.rates.size:
            nch = self.rates.size
            for (k, kp), r in blocks.items():
                if k == 0 or kp == 0:
                    continue
                # sum_i L_i r (w_i L_i)^T = (W_kp @ Y^T)^T with Y the stacked L_i r
                y = (self._jump_left(k) @ r).reshape(nch, -1, r.shape[1])
                yt = y.transpose(0, 2, 1).reshape(nch * r.shape[1], -1)
                contrib = (self._jump_right(kp) @ yt).T
                key = (k - 1, kp - 1)
                out[key] = out[key] + contrib if key in out else np.ascontiguousarray(contrib)
        return out

    def apply(self, state: DenseState) -> DenseState:
        if state.n != self.n:
            raise ValueError(f"state has {state.n} emitters, generator has {self.n}")
        return DenseState(self.apply_blocks(state.blocks), self.n, state.time)


def lindblad_rhs(state: DenseState, h: EffectiveHamiltonian, c: CouplingMatrices,
                 chain: EmitterChain) -> np.ndarray:
    """Dense d rho / dt for ``state``."""
    if not (state.n == h.n == c.n == chain.n_total):
        raise ValueError("state, Hamiltonian, couplings and chain disagree on N")
    return Generator(chain, c, h).apply(state).rho


def _closure(keys) -> list:
    """Sector pairs reachable from ``keys`` by repeated joint lowering."""
    seen = set()
    for k, kp in keys:
        while k >= 0 and kp >= 0:
            seen.add((k, kp))
            k, kp = k - 1, kp - 1
    return sorted(seen)


def default_dt(chain: EmitterChain) -> float:
    return 0.01 / (chain.n_total * chain.gamma)


def _resolve_grid(t_final: float, dt: float):
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if t_final < 0:
        raise ValueError(f"t_final must be >= 0, got {t_final}")
    n_steps = int(round(t_final / dt))
    if n_steps == 0 and t_final > 0:
        n_steps = 1
    if n_steps and abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        dt = t_final / n_steps
    return n_steps, dt


class _RK4:
    """Fixed-step RK4 over a fixed list of sector blocks."""

    def __init__(self, gen: Generator, keys, hermitian: bool):
        self.gen = gen
        self.keys = keys
        self.hermitian = hermitian

    def rhs(self, arrs):
        out = self.gen.apply_blocks(dict(zip(self.keys, arrs)), self.hermitian)
        return [out[k] for k in self.keys]

    def step(self, y, h, k1=None):
        k1 = self.rhs(y) if k1 is None else k1
        k2 = self.rhs([a + 0.5 * h * b for a, b in zip(y, k1)])
        k3 = self.rhs([a + 0.5 * h * b for a, b in zip(y, k2)])
        k4 = self.rhs([a + h * b for a, b in zip(y, k3)])
        return [a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)]


def _start(state0: DenseState, gen: Generator):
    keys = _closure(state0.blocks)
    basis = sector_basis(state0.n)
    y = [state0.blocks[k].astype(complex) if k in state0.blocks
         else np.zeros((basis.dim(k[0]), basis.dim(k[1])), dtype=complex) for k in keys]
    hermitian = state0.hermiticity_error() <= 1e-9
    return _RK4(gen, keys, hermitian), y


def default_observers(chain: EmitterChain) -> dict:
    obs = {
        "pumped": lambda s: mean_excitation(s, chain.pumped_sites),
        "unpumped": lambda s: mean_excitation(s, chain.unpumped_sites),
    }
    for j in range(chain.n_total):
        obs[f"n_{j}"] = (lambda s, j=j: mean_excitation(s, [j]))
    obs["trace"] = lambda s: float(s.trace().real)
    return obs


def evolve(state0: DenseState, chain: EmitterChain, c: CouplingMatrices | None = None,
           t_final: float = 10.0, dt: float | None = None, observers: dict | None = None,
           stride: int = 1, check_positivity: bool = False, trace_tol: float = 1e-6) -> Trajectory:
    """Integrate the master equation with fixed-step RK4.

    ``observers`` maps names to functions of a :class:`DenseState`; they are
    sampled every ``stride`` steps, including t = 0 and the final time.
    """
    gen = Generator(chain, c)
    if state0.n != chain.n_total:
        raise ValueError(f"initial state has {state0.n} emitters, chain has {chain.n_total}")
    dt = default_dt(chain) if dt is None else dt
    limit = 0.05 / (chain.n_total * chain.gamma + chain.gamma_nr + 2 * chain.gamma_phi)
    if dt > limit:
        warnings.warn(f"dt = {dt:g} exceeds the recommended {limit:g}", stacklevel=2)
    n_steps, dt = _resolve_grid(t_final, dt)
    observers = default_observers(chain) if observers is None else observers
    stride = max(1, int(stride))

    rk, y = _start(state0, gen)
    keys = rk.keys
    t0 = state0.time
    tr0 = float(state0.trace().real)
    times, series = [], {name: [] for name in observers}
    worst = {"hermiticity": 0.0, "trace": 0.0, "min_eigenvalue": np.inf}

    def sample(step):
        st = DenseState(dict(zip(keys, y)), chain.n_total, t0 + step * dt)
        drift = abs(float(st.trace().real) - tr0)
        worst["trace"] = max(worst["trace"], drift)
        if not drift <= trace_tol:  # also catches NaN
            raise IntegrationError(
                f"trace drifted by {drift:.3e} at t = {st.time:.4g}; reduce dt (now {dt:g})")
        worst["hermiticity"] = max(worst["hermiticity"], st.hermiticity_error())
        if check_positivity:
            ev = st.min_eigenvalue()
            worst["min_eigenvalue"] = min(worst["min_eigenvalue"], ev)
            if ev < -1e-7:
                raise IntegrationError(f"density matrix lost positivity (min eigenvalue {ev:.3e}) "
                                       f"at t = {st.time:.4g}; reduce dt (now {dt:g})")
        times.append(st.time)
        for name, fn in observers.items():
            series[name].append(fn(st))
        return st

    final = sample(0)
    for step in range(1, n_steps + 1):
        y = rk.step(y, dt)
        if step % stride == 0 or step == n_steps:
            final = sample(step)
    meta = {
        "solver": "full",
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


def steady_state(state0: DenseState, chain: EmitterChain, c: CouplingMatrices | None = None,
                 dt: float | None = None, tol: float = 1e-8, t_max: float = 50.0):
    """Integrate until max |d rho/dt| < tol * gamma or t reaches t_max.

    Returns the final state and a dict naming the criterion that fired.
    """
    gen = Generator(chain, c)
    dt = default_dt(chain) if dt is None else dt
    rk, y = _start(state0, gen)
    keys = rk.keys
    n_max = int(np.ceil(t_max / dt))
    step, norm = 0, np.inf
    while True:
        k1 = rk.rhs(y)
        norm = max(float(np.max(np.abs(b))) for b in k1)
        if norm < tol * chain.gamma:
            criterion = "rhs_norm"
            break
        if step >= n_max:
            criterion = "t_max"
            break
        y = rk.step(y, dt, k1)
        step += 1
    st = DenseState(dict(zip(keys, y)), chain.n_total, state0.time + step * dt)
    return st, {"criterion": criterion, "time": st.time, "rhs_norm": norm, "dt": dt}


def mean_excitation(state: DenseState, sites) -> float:
    """sum_{j in sites} Tr(rho s_j^+ s_j)."""
    sites = list(sites)
    if any(not 0 <= j < state.n for j in sites):
        raise ValueError(f"site indices must lie in [0, {state.n})")
    if not sites:
        return 0.0
    basis = sector_basis(state.n)
    total = 0.0
    for (k, kp), b in state.blocks.items():
        if k != kp or k == 0:
            continue
        counts = basis.occupation(k)[:, sites].sum(axis=1)
        total += float(np.real(np.diagonal(b)) @ counts)
    return total


def project(state: DenseState, target, clamp: bool = True) -> float:
    """<target| rho |target> for a normalised full-space vector."""
    target = np.asarray(target, dtype=complex)
    if target.size != 2**state.n:
        raise ValueError(f"target has {target.size} entries, expected {2**state.n}")
    nrm = np.vdot(target, target).real
    if abs(nrm - 1.0) > 1e-10:
        raise ValueError(f"target is not normalised (norm^2 = {nrm:.12g})")
    return _projector(state.n, target)(state, clamp)


def _projector(n: int, target):
    basis = sector_basis(n)
    parts = {k: target[s] for k, s in enumerate(basis.states) if np.any(target[s] != 0)}

    def value(state, clamp=True):
        v = 0.0
        for (k, kp), b in state.blocks.items():
            if k in parts and kp in parts:
                v += np.vdot(parts[k], b @ parts[kp]).real
        return min(max(v, 0.0), 1.0) if clamp else v

    return value


def projection_observer(target, n: int | None = None):
    """Observer computing <target| rho |target> with the sector split precomputed."""
    target = np.asarray(target, dtype=complex)
    n = int(round(np.log2(target.size))) if n is None else n
    f = _projector(n, target)
    return lambda state: f(state, True)

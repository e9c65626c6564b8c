"""Emitter geometry and waveguide-mediated dipole-dipole couplings.

Lengths are in units of the transition wavelength, rates in units of the
waveguide decay rate and times in units of its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

#: Threshold below which an eigenvalue of the dissipative matrix counts as zero.
ZERO_RATE = 1e-8


@dataclass(frozen=True)
class EmitterChain:
    """A chain of ``n_total`` two-level emitters, the first ``n_pumped`` of
    which form the pumped ensemble.

    ``positions`` defaults to the lattice ``i * spacing``.
    """

    n_total: int
    n_pumped: int
    spacing: float = 1.0
    gamma: float = 1.0
    gamma_nr: float = 0.0
    gamma_phi: float = 0.0
    positions: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if int(self.n_total) != self.n_total or self.n_total < 1:
            raise ValueError(f"n_total must be a positive integer, got {self.n_total}")
        if int(self.n_pumped) != self.n_pumped or not 0 <= self.n_pumped <= self.n_total:
            raise ValueError(f"n_pumped must lie in [0, {self.n_total}], got {self.n_pumped}")
        if self.spacing < 0:
            raise ValueError(f"spacing must be >= 0, got {self.spacing}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.gamma_nr < 0 or self.gamma_phi < 0:
            raise ValueError("gamma_nr and gamma_phi must be >= 0")
        if self.positions is None:
            pos = tuple(float(i * self.spacing) for i in range(self.n_total))
        else:
            pos = tuple(float(x) for x in self.positions)
            if len(pos) != self.n_total:
                raise ValueError(f"expected {self.n_total} positions, got {len(pos)}")
        object.__setattr__(self, "positions", pos)

    @property
    def n_unpumped(self) -> int:
        return self.n_total - self.n_pumped

    @property
    def pumped_sites(self) -> range:
        return range(self.n_pumped)

    @property
    def unpumped_sites(self) -> range:
        return range(self.n_pumped, self.n_total)

    def with_positions(self, positions) -> "EmitterChain":
        return replace(self, positions=tuple(float(x) for x in positions))

    def is_mirror(self, tol: float = 1e-12) -> bool:
        """True when every pair separation is an integer number of wavelengths."""
        x = np.asarray(self.positions)
        frac = np.abs(x - x[0])
        return bool(np.all(np.abs(frac - np.round(frac)) <= tol))

    def to_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_pumped": self.n_pumped,
            "spacing": self.spacing,
            "gamma": self.gamma,
            "gamma_nr": self.gamma_nr,
            "gamma_phi": self.gamma_phi,
            "positions": list(self.positions),
        }


@dataclass(frozen=True)
class CouplingMatrices:
    """Coherent (``j``) and dissipative (``g``) interaction matrices."""

    j: np.ndarray
    g: np.ndarray

    @property
    def n(self) -> int:
        return self.g.shape[0]


def build_couplings(chain: EmitterChain) -> CouplingMatrices:
    """J_mn = (gamma/2) sin(2 pi x_mn), gamma_mn = gamma cos(2 pi x_mn)."""
    x = np.asarray(chain.positions, dtype=float)
    sep = np.abs(x[:, None] - x[None, :])
    phase = 2.0 * np.pi * sep
    j = 0.5 * chain.gamma * np.sin(phase)
    g = chain.gamma * np.cos(phase)
    np.fill_diagonal(j, 0.0)
    np.fill_diagonal(g, chain.gamma)
    return CouplingMatrices(j=j, g=g)


def decay_spectrum(c: CouplingMatrices) -> np.ndarray:
    """Eigenvalues of the dissipative matrix, sorted descending."""
    g = np.asarray(c.g)
    if not np.allclose(g, g.T, atol=1e-12):
        raise ValueError("dissipative matrix is not symmetric")
    return np.sort(np.linalg.eigvalsh(g))[::-1]


def spectrum_metadata(spectrum: np.ndarray, gamma: float = 1.0) -> dict:
    """Counts of nonzero and negative rates, used as output metadata."""
    spectrum = np.asarray(spectrum)
    return {
        "n_nonzero": int(np.sum(np.abs(spectrum) > ZERO_RATE * gamma)),
        "has_negative": bool(np.any(spectrum < -ZERO_RATE * gamma)),
        "min_eigenvalue": float(spectrum.min()),
    }

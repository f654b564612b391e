"""Closed-form microring resonator and directional-coupler physics.

A ring of perimeter L (nm) and index n side-coupled to a bus waveguide
with self-coupling amplitude r has thru-port field transmission

    T_thru(lam) = r (1 - e^{i phi}) / (1 - r^2 e^{i phi}),  phi = 2 pi n L / lam

so the thru-port power is

    P_thru = 2 r^2 (1 - cos phi) / (1 + r^4 - 2 r^2 cos phi)

and P_drop = 1 - P_thru. Resonances sit at lam = n L / m for integer m.
Near a resonance the drop-port power is well approximated by a
Cauchy-Lorentz distribution

    P_drop ~ a gamma^2 / (gamma^2 + (lam - lam0)^2)

with half-width gamma = (1 - r^2) n L / (2 pi r m^2). All wavelengths in
nm, all powers in linear fractions of the incident power.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray


@dataclass(frozen=True)
class CouplerMatrix:
    """Lossless 2x2 directional coupler.

    Parameters
    ----------
    r : float
        Self-coupling amplitude, 0 <= r <= 1. The cross amplitude is
        t = sqrt(1 - r^2) and carries an implicit pi/2 phase.
    """

    r: float

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ValueError(f"self-coupling r={self.r} outside [0, 1]")

    @property
    def t(self) -> float:
        """Cross-coupling amplitude sqrt(1 - r^2)."""
        return float(np.sqrt(1.0 - self.r**2))

    @property
    def matrix(self) -> NDArray[np.complex128]:
        """Unitary scattering matrix [[r, it], [it, r]]."""
        return np.array(
            [[self.r, 1j * self.t], [1j * self.t, self.r]], dtype=np.complex128
        )

    def apply(self, fields: ArrayLike) -> NDArray[np.complex128]:
        """Scatter a pair of input field amplitudes."""
        return self.matrix @ np.asarray(fields, dtype=np.complex128)


@dataclass(frozen=True)
class RingPhysical:
    """First-principles ring description.

    Parameters
    ----------
    r : float
        Bus self-coupling amplitude, 0 < r < 1.
    n : float
        Refractive index (wavelength-independent, continuous-wave model).
    L : float
        Ring perimeter in nm.
    m : int
        Resonance order of interest (lam0 = n L / m).
    """

    r: float
    n: float
    L: float
    m: int

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"self-coupling r={self.r} outside (0, 1)")
        if self.n <= 0 or self.L <= 0:
            raise ValueError("index and perimeter must be positive")
        if self.m < 1:
            raise ValueError("resonance order must be a positive integer")

    @property
    def lam0(self) -> float:
        """Resonance wavelength n L / m in nm."""
        return self.n * self.L / self.m


@dataclass(frozen=True)
class RingModel:
    """Lorentzian behavioral model of one ring resonance.

    Parameters
    ----------
    lam0 : float
        Resonance wavelength in nm.
    gamma : float
        Lorentzian half-width in nm.
    atten : float
        Peak attenuation a in (0, 1]: fraction of power dropped exactly
        on resonance. A free model parameter, not derived from coupling.
    """

    lam0: float
    gamma: float
    atten: float
    fwhm: float = field(init=False)

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not 0.0 < self.atten <= 1.0:
            raise ValueError("atten must lie in (0, 1]")
        object.__setattr__(self, "fwhm", 2.0 * self.gamma)


def exact_thru_transmission(ring: RingPhysical, lam: ArrayLike) -> NDArray[np.float64]:
    """Exact thru-port power transmission of a physical ring.

    Parameters
    ----------
    ring : RingPhysical
    lam : array_like
        Wavelength(s) in nm, all > 0.

    Returns
    -------
    ndarray
        P_thru in [0, 1]; the drop port carries 1 - P_thru.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("wavelength must be positive")
    phi = 2.0 * np.pi * ring.n * ring.L / lam
    r2 = ring.r**2
    cosphi = np.cos(phi)
    return 2.0 * r2 * (1.0 - cosphi) / (1.0 + r2**2 - 2.0 * r2 * cosphi)


def exact_drop_transmission(ring: RingPhysical, lam: ArrayLike) -> NDArray[np.float64]:
    """Exact drop-port power transmission, 1 - P_thru."""
    return 1.0 - exact_thru_transmission(ring, lam)


def lorentz_drop(ring: RingModel, lam: ArrayLike) -> NDArray[np.float64]:
    """Lorentzian drop-port power a g^2 / (g^2 + (lam - lam0)^2)."""
    lam = np.asarray(lam, dtype=float)
    g2 = ring.gamma**2
    return ring.atten * g2 / (g2 + (lam - ring.lam0) ** 2)


def lorentz_thru(ring: RingModel, lam: ArrayLike) -> NDArray[np.float64]:
    """Lorentzian thru-port power, 1 - lorentz_drop."""
    return 1.0 - lorentz_drop(ring, lam)


def gamma_from_physical(ring: RingPhysical) -> float:
    """Lorentzian half-width gamma = (1 - r^2) n L / (2 pi r m^2) in nm."""
    return (1.0 - ring.r**2) * ring.n * ring.L / (2.0 * np.pi * ring.r * ring.m**2)


def resonant_wavelengths(ring: RingPhysical, window: tuple[float, float]) -> list[float]:
    """Resonance wavelengths n L / m' inside a window, ascending.

    Parameters
    ----------
    ring : RingPhysical
    window : (low, high)
        Wavelength window in nm, low < high.

    Returns
    -------
    list of float
        Possibly empty.
    """
    low, high = window
    if not low < high:
        raise ValueError("window.low must be below window.high")
    nL = ring.n * ring.L
    # lam = nL / m' inside [low, high]  <=>  nL/high <= m' <= nL/low
    m_lo = int(np.ceil(nL / high))
    m_hi = int(np.floor(nL / low))
    lams = [nL / mp for mp in range(max(m_lo, 1), m_hi + 1)]
    return sorted(lam for lam in lams if low <= lam <= high)

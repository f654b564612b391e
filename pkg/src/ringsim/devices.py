"""Composable simulated photonic devices and the OSA measurement layer.

A device graph is a tree of filter banks (dendrite or axon mode),
cascades (series composition) and splitters (equal-power parallel
branches). Given a per-channel heater power state, every ring's
resonance sits at its bias wavelength plus the thermal-crosstalk shift,
and each bank's per-wavelength transmission is the product of its rings'
Lorentzian thru responses. The graph is the hidden ground-truth plant
that calibration must learn: its parameters are set at construction and
never exposed through the measurement interface.

Spectra are sampled on a uniform wavelength grid, scaled by pump power
and the root attenuation, perturbed by zero-mean pink noise in the dB
domain, and returned in dBm.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .optics import RingModel, lorentz_thru
from .thermal import DriveUnit, ThermalGroup, convert_drive


def dbm2lin(dbm: ArrayLike) -> NDArray[np.float64]:
    """dBm to linear mW."""
    return np.power(10.0, np.asarray(dbm, dtype=float) / 10.0)


def lin2dbm(mw: ArrayLike, floor: float = 1e-15) -> NDArray[np.float64]:
    """Linear mW to dBm; powers below ``floor`` are clamped."""
    return 10.0 * np.log10(np.maximum(np.asarray(mw, dtype=float), floor))


@dataclass(frozen=True)
class Spectrum:
    """Uniformly gridded optical spectrum.

    Parameters
    ----------
    wavelengths : ndarray
        Strictly ascending nm grid with uniform spacing.
    power : ndarray
        Samples in dBm.
    """

    wavelengths: NDArray[np.float64]
    power: NDArray[np.float64]

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=float)
        p = np.asarray(self.power, dtype=float)
        if wl.ndim != 1 or wl.size < 2 or wl.shape != p.shape:
            raise ValueError("wavelengths and power must be matching 1-d arrays")
        steps = np.diff(wl)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9:
            raise ValueError("grid must be ascending and uniform")
        if not np.all(np.isfinite(p)):
            raise ValueError("power samples must be finite")
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "power", p)

    @property
    def resolution(self) -> float:
        """Grid spacing in nm."""
        return float(self.wavelengths[1] - self.wavelengths[0])

    def shift(self, delta_nm: float) -> "Spectrum":
        """Same samples on a wavelength axis shifted by delta_nm."""
        return Spectrum(self.wavelengths + delta_nm, self.power)

    def crop(self, window: tuple[float, float]) -> "Spectrum":
        """Samples inside [low, high]."""
        low, high = window
        sel = (self.wavelengths >= low) & (self.wavelengths <= high)
        if np.count_nonzero(sel) < 2:
            raise ValueError("crop window holds fewer than 2 samples")
        return Spectrum(self.wavelengths[sel], self.power[sel])

    def linear(self) -> NDArray[np.float64]:
        """Samples in linear mW."""
        return dbm2lin(self.power)

    def interp_linear(self, at_nm: ArrayLike) -> NDArray[np.float64]:
        """Linear-power samples interpolated at arbitrary wavelengths."""
        return np.interp(np.asarray(at_nm, dtype=float),
                         self.wavelengths, self.linear())

    def to_csv(self) -> str:
        """Two-column CSV text (nm, dBm)."""
        lines = ["nm,dbm"]
        lines += [f"{w:.6f},{p:.9f}" for w, p in zip(self.wavelengths, self.power)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class OsaConfig:
    """Optical spectrum analyzer settings.

    Parameters
    ----------
    pump_power : float
        Per-channel source power in mW.
    spacing : float
        Grid resolution in nm.
    noise_amplitude : float
        Pink-noise RMS in dB; 0 disables noise.
    """

    pump_power: float = 0.1
    spacing: float = 0.01
    noise_amplitude: float = 0.2

    def __post_init__(self):
        if self.pump_power <= 0 or self.spacing <= 0 or self.noise_amplitude < 0:
            raise ValueError("invalid OSA configuration")


def pink_noise(n: int, amplitude: float,
               rng: np.random.Generator) -> NDArray[np.float64]:
    """Zero-mean pink (1/f power) noise of the given RMS amplitude.

    White Gaussian noise is shaped in the frequency domain by a
    1/sqrt(f) amplitude filter, then renormalized.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if amplitude == 0.0:
        return np.zeros(n)
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n)
    f[0] = 1.0  # DC bin removed below
    spec = spec / np.sqrt(f)
    spec[0] = 0.0
    shaped = np.fft.irfft(spec, n)
    shaped -= shaped.mean()
    rms = np.sqrt(np.mean(shaped**2))
    if rms == 0.0:
        return np.zeros(n)
    return shaped * (amplitude / rms)


class FilterBank:
    """A bank of rings on one bus.

    In dendrite mode both ports are observable and per-wavelength
    thru + drop = incident. In axon mode only the thru port propagates
    downstream; drop power dissipates.

    Parameters
    ----------
    name : str
        Tap identifier.
    thermal : ThermalGroup
        Shared thermal group; one channel per ring.
    channel_ids : list of int
        Heater channel of each ring, in ring order.
    mode : str
        'dendrite' or 'axon'.
    """

    def __init__(self, name: str, thermal: ThermalGroup,
                 channel_ids: list[int], mode: str = "dendrite"):
        if mode not in ("dendrite", "axon"):
            raise ValueError("mode must be 'dendrite' or 'axon'")
        unknown = set(channel_ids) - set(thermal.channels)
        if unknown:
            raise KeyError(f"unknown channels {sorted(unknown)}")
        self.name = name
        self.thermal = thermal
        self.channel_ids = list(channel_ids)
        self.mode = mode
        self.rings: list[RingModel] = []

    def set_bias_params(self, lam0: ArrayLike, atten: ArrayLike,
                        fwhm: ArrayLike) -> None:
        """Resonance wavelength, peak attenuation and FWHM of each ring
        at the bias operating point (drive == heat bias)."""
        lam0 = np.atleast_1d(np.asarray(lam0, dtype=float))
        atten = np.broadcast_to(np.asarray(atten, dtype=float), lam0.shape)
        fwhm = np.broadcast_to(np.asarray(fwhm, dtype=float), lam0.shape)
        if lam0.size != len(self.channel_ids):
            raise ValueError("one bias wavelength per ring required")
        self.rings = [
            RingModel(lam0=float(l), gamma=float(f) / 2.0, atten=float(a))
            for l, a, f in zip(lam0, atten, fwhm)
        ]

    def shifted_rings(self, power_mw: dict[int, float]) -> list[RingModel]:
        """Ring models displaced by the thermal shift at an absolute
        per-channel power state (mW)."""
        if not self.rings:
            raise ValueError(f"bank {self.name}: bias parameters not set")
        chans = self.thermal.channels
        p = np.array([power_mw.get(ch, 0.0) for ch in chans])
        dp = p - self.thermal.bias_vector()
        shifts = self.thermal.K @ dp
        out = []
        for ring, ch in zip(self.rings, self.channel_ids):
            row = chans.index(ch)
            out.append(replace(ring, lam0=ring.lam0 + float(shifts[row])))
        return out

    def thru_transmission(self, lam: NDArray[np.float64],
                          power_mw: dict[int, float]) -> NDArray[np.float64]:
        t = np.ones_like(lam)
        for ring in self.shifted_rings(power_mw):
            t = t * lorentz_thru(ring, lam)
        return t

    def taps(self, lam, power_mw, t_in):
        t_thru = t_in * self.thru_transmission(lam, power_mw)
        out = {(self.name, "thru"): t_thru}
        if self.mode == "dendrite":
            out[(self.name, "drop")] = t_in - t_thru
        return t_thru, out


class Cascade:
    """Series composition; each child's thru feeds the next child."""

    def __init__(self, *children):
        self.children = list(children)

    def taps(self, lam, power_mw, t_in):
        taps = {}
        t = t_in
        for child in self.children:
            t, child_taps = child.taps(lam, power_mw, t)
            taps.update(child_taps)
        return t, taps


class Splitter:
    """Equal-power parallel branches; no downstream output."""

    def __init__(self, *children):
        self.children = list(children)

    def taps(self, lam, power_mw, t_in):
        taps = {}
        share = t_in / len(self.children)
        for child in self.children:
            _, child_taps = child.taps(lam, power_mw, share)
            taps.update(child_taps)
        return None, taps


@dataclass
class SimulatedPlant:
    """Hidden ground-truth device behind the measurement interface.

    Parameters
    ----------
    root : FilterBank | Cascade | Splitter
    thermal : ThermalGroup
        Ground-truth thermal parameters.
    attenuation : float
        Global linear power factor applied once at the root.
    osa : OsaConfig
    rng : np.random.Generator
        Noise stream for spectra.
    """

    root: object
    thermal: ThermalGroup
    attenuation: float = 1.0
    osa: OsaConfig = field(default_factory=OsaConfig)
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    _drive: dict[int, float] = field(default_factory=dict)

    def set_drive(self, values: dict[int, float],
                  unit: DriveUnit = DriveUnit.MW) -> None:
        """Set absolute per-channel heater power. Channels not named
        keep their previous value (initially 0)."""
        res = self.thermal.heater_resistance
        for ch, v in values.items():
            if ch not in self.thermal.channels:
                raise KeyError(f"unknown channel {ch}")
            mw = convert_drive(v, unit, DriveUnit.MW, res)
            if mw < 0:
                raise ValueError(f"channel {ch}: negative power")
            self._drive[ch] = mw

    def drive(self) -> dict[int, float]:
        """Current absolute power state (mW)."""
        return {ch: self._drive.get(ch, 0.0) for ch in self.thermal.channels}

    def transmission(self, tap: tuple[str, str],
                     lam: ArrayLike) -> NDArray[np.float64]:
        """Noiseless linear transmission from source to a tap, including
        root attenuation."""
        lam = np.asarray(lam, dtype=float)
        _, taps = self.root.taps(lam, self.drive(), np.ones_like(lam))
        if tap not in taps:
            raise KeyError(f"unknown tap {tap}")
        return self.attenuation * taps[tap]

    def spectrum(self, window: tuple[float, float], tap: tuple[str, str],
                 avg_count: int = 1) -> Spectrum:
        """Noisy OSA sweep of a tap over [low, high] nm.

        Averages ``avg_count`` independent pink-noise draws in the
        linear domain.
        """
        low, high = window
        if not low < high:
            raise ValueError("empty window")
        n = int(round((high - low) / self.osa.spacing)) + 1
        lam = low + self.osa.spacing * np.arange(n)
        base = self.osa.pump_power * self.transmission(tap, lam)
        acc = np.zeros(n)
        for _ in range(max(1, avg_count)):
            noise_db = pink_noise(n, self.osa.noise_amplitude, self.rng)
            acc += base * np.power(10.0, noise_db / 10.0)
        return Spectrum(lam, lin2dbm(acc / max(1, avg_count)))

    def channel_powers(self, tap: tuple[str, str],
                       channels: ArrayLike) -> NDArray[np.float64]:
        """Noiseless linear power (mW) exactly at channel wavelengths."""
        lam = np.asarray(channels, dtype=float)
        return self.osa.pump_power * self.transmission(tap, lam)

"""Mode-division-multiplexing analysis tools.

An asymmetric two-arm interferometer with cross-coupling power
coefficient alpha and path-length difference dL transmits
T(lam) = alpha^2 + (1-alpha)^2 - 2 alpha (1-alpha) cos(2 pi dL / lam),
a sinusoid in optical frequency whose swing (the extinction ratio)
peaks at alpha = 0.5. This module extracts extinction ratios from
measured spectra by sinusoid fitting, inverts them back to candidate
coupling coefficients for geometry sweeps, and compensates unitary
intermodal mixing by pre-applying the conjugate transpose to a weight
vector.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import curve_fit

from .devices import Spectrum, lin2dbm, pink_noise

# fitted trough power is clamped to this fraction of the fitted offset
# so perfect extinction reports a large finite ratio
MIN_POWER_FRACTION = 1e-3


class SinusoidFitError(ValueError):
    """The spectrum is not sinusoidal enough to extract a swing."""


@dataclass(frozen=True)
class InterferometerModel:
    """Asymmetric two-arm interferometer.

    Parameters
    ----------
    alpha : float
        Cross-coupling power coefficient in [0, 1].
    dl : float
        Path-length difference in nm, > 0.
    """

    alpha: float
    dl: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.dl <= 0:
            raise ValueError("dl must be positive")


@dataclass(frozen=True)
class ModeMixing:
    """Unitary intermodal-mixing matrix.

    Parameters
    ----------
    M : ndarray
        Square complex matrix, unitary within 1e-9.
    """

    M: NDArray[np.complex128]

    def __post_init__(self):
        m = np.asarray(self.M, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("M must be square")
        if not np.allclose(m @ m.conj().T, np.eye(len(m)), atol=1e-9):
            raise ValueError("M must be unitary within 1e-9")
        object.__setattr__(self, "M", m)


def interferometer_transmission(m: InterferometerModel,
                                lam: ArrayLike) -> NDArray[np.float64]:
    """Power transmission at wavelengths lam (nm, > 0)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("wavelengths must be positive")
    a = m.alpha
    return (a**2 + (1.0 - a) ** 2
            - 2.0 * a * (1.0 - a) * np.cos(2.0 * np.pi * m.dl / lam))


def make_interferometer_spectrum(m: InterferometerModel,
                                 window: tuple[float, float] = (1530.0,
                                                                1560.0),
                                 spacing: float = 0.01,
                                 pump_mw: float = 0.1,
                                 noise_amplitude: float = 0.0,
                                 rng: np.random.Generator | None = None,
                                 ) -> Spectrum:
    """Synthetic dBm spectrum of a pumped interferometer, optionally
    with pink dB-domain noise."""
    lam = np.arange(window[0], window[1] + spacing / 2.0, spacing)
    dbm = lin2dbm(pump_mw * interferometer_transmission(m, lam))
    if noise_amplitude > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        dbm = dbm + pink_noise(len(lam), noise_amplitude, rng)
    return Spectrum(lam, dbm)


def _fit_sinusoid(x: NDArray[np.float64], p: NDArray[np.float64],
                  ) -> tuple[float, float]:
    """Least-squares offset + amplitude of p ~ A + B cos(2 pi x/T + phi).

    Returns (offset, |amplitude|). Raises SinusoidFitError when the
    residual RMS exceeds 20% of the fitted amplitude.
    """
    offset0 = float(np.mean(p))
    amp0 = float(np.max(p) - np.min(p)) / 2.0
    if amp0 <= 1e-12 * max(abs(offset0), 1e-300):
        return offset0, 0.0
    # dominant oscillation from the FFT of the detrended signal
    spec = np.abs(np.fft.rfft(p - offset0))
    spec[0] = 0.0
    k = int(np.argmax(spec))
    if k == 0 or spec[k] == 0.0:
        return offset0, 0.0
    span = float(x[-1] - x[0])
    period0 = span / k

    def model(xv, offset, amp, period, phase):
        return offset + amp * np.cos(2.0 * np.pi * xv / period + phase)

    try:
        popt, _ = curve_fit(model, x, p,
                            p0=[offset0, amp0, period0, 0.0], maxfev=20000)
    except RuntimeError as exc:
        raise SinusoidFitError(f"sinusoid fit failed: {exc}") from exc
    offset, amp = float(popt[0]), abs(float(popt[1]))
    residual = float(np.sqrt(np.mean((p - model(x, *popt)) ** 2)))
    if amp <= 0 or residual > 0.2 * amp:
        raise SinusoidFitError(
            f"residual {residual:.3g} exceeds 20% of amplitude {amp:.3g}")
    return offset, amp


def extinction_ratio(s: Spectrum) -> float:
    """Oscillation swing of a spectrum in dB.

    A sinusoid (offset, amplitude, period, phase) is least-squares
    fitted to the linear-power samples against optical frequency, where
    the interferometer oscillation is exactly periodic. The ratio is
    10 log10(max/min) of the fit, with the minimum clamped to 1e-3 of
    the offset so full extinction stays finite.

    Raises
    ------
    SinusoidFitError
        If the fit residual exceeds 20% of the fitted amplitude.
    """
    # resample onto a uniform 1/wavelength grid, where the phase
    # 2 pi dL / lam advances linearly
    k_desc = 1.0 / s.wavelengths[::-1]
    p_desc = s.linear()[::-1]
    k = np.linspace(k_desc[0], k_desc[-1], len(k_desc))
    p = np.interp(k, k_desc, p_desc)
    offset, amp = _fit_sinusoid(k, p)
    if amp == 0.0:
        return 0.0
    peak = offset + amp
    trough = max(offset - amp, MIN_POWER_FRACTION * max(offset, 1e-300))
    return float(10.0 * np.log10(peak / trough))


def alpha_from_extinction(er_db: float) -> tuple[float, float]:
    """Candidate coupling coefficients {alpha, 1 - alpha} for a swing.

    The peak-to-trough ratio r fixes B/A = (r-1)/(r+1) with
    A = alpha^2 + (1-alpha)^2 and B = 2 alpha (1-alpha); solving the
    quadratic yields the symmetric branch pair.
    """
    if er_db < 0:
        raise ValueError("extinction ratio must be >= 0 dB")
    r = 10.0 ** (er_db / 10.0)
    s = (r - 1.0) / (r + 1.0)
    u = s / (2.0 * (1.0 + s))          # u = alpha (1 - alpha) <= 1/4
    root = np.sqrt(max(0.0, 1.0 - 4.0 * u))
    lo = (1.0 - root) / 2.0
    return float(lo), float(1.0 - lo)


def coupling_report(sweep: list[tuple[float, float, Spectrum]],
                    ) -> list[dict]:
    """Extinction analysis of a coupler-geometry sweep.

    Each row carries (width, length, alpha_lo, alpha_hi, er_db); rows
    are sorted so the maximum-swing geometry (alpha closest to 0.5)
    ranks first. Spectra that fail the sinusoid fit produce rows with
    an 'error' field at the end of the table instead of aborting.
    """
    good, bad = [], []
    for width, length, spectrum in sweep:
        try:
            er = extinction_ratio(spectrum)
        except SinusoidFitError as exc:
            bad.append({"width": width, "length": length,
                        "alpha_lo": None, "alpha_hi": None,
                        "er_db": None, "error": str(exc)})
            continue
        lo, hi = alpha_from_extinction(er)
        good.append({"width": width, "length": length,
                     "alpha_lo": lo, "alpha_hi": hi, "er_db": er})
    good.sort(key=lambda row: abs(row["alpha_lo"] - 0.5))
    return good + bad


def read_sweep_dir(path: str | Path) -> list[tuple[float, float, Spectrum]]:
    """Ingest width_length.csv spectra (columns nm, dbm) from a
    directory; file stems encode the geometry, e.g. 0.45_12.5.csv."""
    path = Path(path)
    sweep = []
    for csv_path in sorted(path.glob("*.csv")):
        match = re.fullmatch(r"([0-9.]+)_([0-9.]+)", csv_path.stem)
        if match is None:
            raise ValueError(f"cannot parse geometry from {csv_path.name}")
        rows = np.loadtxt(csv_path, delimiter=",", skiprows=1)
        spectrum = Spectrum(rows[:, 0], rows[:, 1])
        sweep.append((float(match.group(1)), float(match.group(2)),
                      spectrum))
    if not sweep:
        raise ValueError(f"no width_length.csv spectra in {path}")
    return sweep


def coupling_report_csv(rows: list[dict]) -> str:
    """CSV text of a coupling report."""
    lines = ["width,length,alpha_lo,alpha_hi,er_db,error"]
    for r in rows:
        if r.get("error"):
            lines.append(f"{r['width']},{r['length']},,,,{r['error']}")
        else:
            lines.append(f"{r['width']},{r['length']},{r['alpha_lo']:.6f},"
                         f"{r['alpha_hi']:.6f},{r['er_db']:.6f},")
    return "\n".join(lines) + "\n"


def compensate_mixing(m: ModeMixing,
                      desired_weights: ArrayLike) -> NDArray[np.complex128]:
    """Pre-weights that realize the desired weights after the mixing
    matrix: w_pre = M^dagger w, so M w_pre = w within 1e-9."""
    w = np.asarray(desired_weights, dtype=complex)
    if w.shape != (m.M.shape[0],):
        raise ValueError("weight vector length must match M")
    return m.M.conj().T @ w

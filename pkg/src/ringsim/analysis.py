"""Spectrum feature extraction: background removal, trough detection,
center/FWHM estimation and filter-shape pulls.

Troughs are located on a moving-average smoothed copy of the linear
power samples (window = min_separation / 4), refined to sub-grid
precision with a parabola through the three samples around each
minimum. FWHM is measured at half depth in linear power. Backgrounds
come in two flavors: 'smoothed' (wide upper-envelope low-pass of the
current spectrum) and 'tuned' (stitched from a base spectrum and a
spectrum with every resonance displaced out of the way).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.ndimage import maximum_filter1d, uniform_filter1d

from .devices import Spectrum, dbm2lin, lin2dbm


class TroughCountError(RuntimeError):
    """Fewer distinguishable troughs than requested (merge signal)."""


@dataclass(frozen=True)
class ResonanceFeature:
    """One detected trough.

    Parameters
    ----------
    lam : float
        Center wavelength in nm (sub-grid, at the minimum).
    fwhm : float
        Full width at half depth in linear power, nm.
    depth : float
        dB below the local baseline, > 0.
    mid : float
        Midpoint of the half-depth crossings, nm. Equals lam for a
        symmetric trough but stays unbiased for a double-welled
        (nearly merged) trough whose minimum sits off center.
    """

    lam: float
    fwhm: float
    depth: float
    mid: float = 0.0


def _smooth(lin: NDArray[np.float64], width_samples: int) -> NDArray[np.float64]:
    return uniform_filter1d(lin, size=max(1, width_samples), mode="nearest")


def find_resonances(s: Spectrum, expected_count: int,
                    min_separation: float) -> list[ResonanceFeature]:
    """Locate exactly ``expected_count`` troughs, ascending in wavelength.

    Raises
    ------
    TroughCountError
        If fewer than ``expected_count`` troughs separated by at least
        ``min_separation`` nm are distinguishable. Cascaded calibration
        uses this as its merged-trough signal.
    """
    if expected_count < 1:
        raise ValueError("expected_count must be >= 1")
    res = s.resolution
    lin = dbm2lin(s.power)
    width = max(1, int(round(min_separation / 4.0 / res)))
    sm = _smooth(lin, width)
    # light smoothing preserves trough depth/width for the measurements
    # but still needs a few samples to steady flat-bottomed troughs
    fine = _smooth(lin, max(3, width // 4))

    interior = np.arange(1, len(sm) - 1)
    is_min = (sm[interior] <= sm[interior - 1]) & (sm[interior] < sm[interior + 1])
    candidates = interior[is_min]
    # deepest-first greedy selection honoring the separation constraint
    order = candidates[np.argsort(sm[candidates])]
    sep_samples = min_separation / res
    picked: list[int] = []
    for idx in order:
        if all(abs(idx - p) >= sep_samples for p in picked):
            picked.append(int(idx))
        if len(picked) == expected_count:
            break
    if len(picked) < expected_count:
        raise TroughCountError(
            f"found {len(picked)} troughs, expected {expected_count}"
        )
    picked.sort()

    features = []
    for idx in picked:
        # snap to the finely smoothed minimum near the coarse one
        lo0 = max(1, idx - width)
        hi0 = min(len(fine) - 1, idx + width + 1)
        idx = lo0 + int(np.argmin(fine[lo0:hi0]))

        # parabolic sub-grid refinement
        y0, y1, y2 = fine[idx - 1], fine[idx], fine[idx + 1]
        denom = y0 - 2.0 * y1 + y2
        frac = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
        frac = float(np.clip(frac, -0.5, 0.5))
        lam = s.wavelengths[idx] + frac * res

        # local baseline from the heavily smoothed upper envelope
        half_win = max(2, int(round(3.0 * min_separation / res)))
        lo = max(0, idx - half_win)
        hi = min(len(sm), idx + half_win + 1)
        baseline = float(np.max(sm[lo:hi]))
        bottom = float(y1)
        depth_db = 10.0 * np.log10(max(baseline, 1e-300) / max(bottom, 1e-300))

        half = 0.5 * (baseline + bottom)
        left = idx
        while left > 0 and fine[left] < half:
            left -= 1
        right = idx
        while right < len(fine) - 1 and fine[right] < half:
            right += 1
        # linear interpolation of the two crossings
        if fine[left + 1] != fine[left]:
            xl = left + (half - fine[left]) / (fine[left + 1] - fine[left])
        else:
            xl = float(left)
        if fine[right] != fine[right - 1]:
            xr = right - (fine[right] - half) / (fine[right] - fine[right - 1])
        else:
            xr = float(right)
        fwhm = max((xr - xl) * res, res)
        mid = s.wavelengths[0] + 0.5 * (xl + xr) * res
        features.append(ResonanceFeature(lam=float(lam), fwhm=float(fwhm),
                                         depth=float(max(depth_db, 0.0)),
                                         mid=float(mid)))
    return features


def smoothed_background(s: Spectrum, envelope_nm: float = 2.0) -> Spectrum:
    """Upper-envelope low-pass background of a raw spectrum.

    A moving maximum of width ``envelope_nm`` rides over the troughs;
    a moving average of the same width removes the staircase.
    """
    width = max(1, int(round(envelope_nm / s.resolution)))
    env = maximum_filter1d(s.power, size=width, mode="nearest")
    return Spectrum(s.wavelengths, _smooth(env, width))


def build_tuned_background(base: Spectrum, displaced: Spectrum,
                           smooth_nm: float = 0.5) -> Spectrum:
    """Background stitched from a base spectrum and one with every
    resonance displaced: the less-attenuated envelope, low-passed."""
    if base.wavelengths.shape != displaced.wavelengths.shape or \
            np.max(np.abs(base.wavelengths - displaced.wavelengths)) > 1e-9:
        raise ValueError("spectra must share one grid")
    env = np.maximum(base.power, displaced.power)
    width = max(1, int(round(smooth_nm / base.resolution)))
    return Spectrum(base.wavelengths, _smooth(env, width))


def remove_background(raw: Spectrum, background: Spectrum) -> Spectrum:
    """Foreground in dB relative to the background (baseline ~ 0 dB)."""
    bg = np.interp(raw.wavelengths, background.wavelengths, background.power)
    return Spectrum(raw.wavelengths, raw.power - bg)


def extract_filter_shape(s: Spectrum, feature: ResonanceFeature,
                         window_fwhms: float) -> tuple[NDArray[np.float64],
                                                       NDArray[np.float64]]:
    """Transmission curve around one trough of a background-removed
    spectrum.

    Returns
    -------
    (rel_nm, transmission)
        Wavelength offsets from the trough center and the clipped
        linear transmission in [0, 1], covering
        +- (window_fwhms / 2) * fwhm.
    """
    half = window_fwhms * feature.fwhm / 2.0
    window = (feature.lam - half, feature.lam + half)
    if window[0] < s.wavelengths[0] or window[1] > s.wavelengths[-1]:
        raise ValueError("shape window exceeds the spectrum")
    cropped = s.crop(window)
    rel = cropped.wavelengths - feature.lam
    lin = np.clip(dbm2lin(cropped.power), 0.0, 1.0)
    return rel, lin


class SpectrumAssistant:
    """Stateful helper owned by one calibration run.

    Wraps a plant tap with windowed acquisition, background bookkeeping
    and trough detection.

    Parameters
    ----------
    plant : SimulatedPlant
    tap : (node, port)
    window : (low, high) nm
        Initial acquisition window; tracking may recenter it.
    n_chan : int
        Number of troughs expected in the window.
    min_separation : float
        Minimum trough separation in nm for the peak finder.
    """

    def __init__(self, plant, tap, window, n_chan: int,
                 min_separation: float = 0.5):
        self.plant = plant
        self.tap = tap
        self.window = tuple(window)
        self.n_chan = n_chan
        self.min_separation = min_separation
        self.tuned_bg: Spectrum | None = None

    def raw_spect(self, avg_count: int = 1) -> Spectrum:
        return self.plant.spectrum(self.window, self.tap, avg_count=avg_count)

    def fg_spect(self, avg_count: int = 1, bg_type: str = "tuned") -> Spectrum:
        """Background-removed spectrum (baseline ~ 0 dB)."""
        raw = self.raw_spect(avg_count)
        if bg_type == "tuned":
            if self.tuned_bg is None:
                raise ValueError("tuned background not set")
            bg = self.tuned_bg
        elif bg_type == "smoothed":
            bg = smoothed_background(raw)
        else:
            raise ValueError(f"unknown background type {bg_type!r}")
        return remove_background(raw, bg)

    def set_bg_tuned(self, base_raw: Spectrum, displaced_raw: Spectrum) -> None:
        self.tuned_bg = build_tuned_background(base_raw, displaced_raw)

    def resonances(self, spect: Spectrum | None = None,
                   avg_count: int = 1, n_chan: int | None = None,
                   bg_type: str | None = None) -> list[ResonanceFeature]:
        if spect is None:
            bg = bg_type or ("tuned" if self.tuned_bg is not None else "smoothed")
            spect = self.fg_spect(avg_count=avg_count, bg_type=bg)
        return find_resonances(spect, n_chan or self.n_chan,
                               self.min_separation)

    def attenuation_estimate(self) -> float:
        """Linear baseline attenuation from the tuned background."""
        if self.tuned_bg is None:
            raise ValueError("tuned background not set")
        baseline_mw = float(np.median(dbm2lin(self.tuned_bg.power)))
        return baseline_mw / self.plant.osa.pump_power

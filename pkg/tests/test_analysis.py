"""Trough detection, backgrounds and filter-shape extraction."""

import numpy as np
import pytest

from ringsim.analysis import (
    ResonanceFeature,
    SpectrumAssistant,
    TroughCountError,
    build_tuned_background,
    extract_filter_shape,
    find_resonances,
    remove_background,
)
from ringsim.devices import Spectrum, lin2dbm
from ringsim.optics import RingModel, lorentz_thru


def synthetic_fg(centers, fwhm=0.2, atten=0.98, window=(1545.0, 1560.0),
                 spacing=0.01, noise=0.0, seed=0):
    """Background-removed spectrum of independent Lorentzian troughs."""
    lam = np.arange(window[0], window[1] + spacing / 2, spacing)
    t = np.ones_like(lam)
    for c in centers:
        ring = RingModel(lam0=c, gamma=fwhm / 2, atten=atten)
        t = t * lorentz_thru(ring, lam)
    db = lin2dbm(t)
    if noise:
        db = db + noise * np.random.default_rng(seed).standard_normal(lam.size)
    return Spectrum(lam, db)


class TestFindResonances:
    def test_noiseless_four_troughs(self):
        centers = [1550.0, 1552.0, 1554.0, 1556.0]
        feats = find_resonances(synthetic_fg(centers), 4, 0.5)
        assert len(feats) == 4
        for f, c in zip(feats, centers):
            assert abs(f.lam - c) < 0.005
            assert f.depth > 15.0

    def test_fwhm_estimate(self):
        feats = find_resonances(synthetic_fg([1552.0], fwhm=0.2), 1, 0.5)
        assert feats[0].fwhm == pytest.approx(0.2, rel=0.25)

    def test_sorted_output(self):
        feats = find_resonances(synthetic_fg([1556.0, 1550.0, 1553.0]), 3, 0.5)
        lams = [f.lam for f in feats]
        assert lams == sorted(lams)

    def test_merged_raises(self):
        s = synthetic_fg([1552.0, 1552.15], fwhm=0.2)
        with pytest.raises(TroughCountError):
            find_resonances(s, 2, 0.5)

    def test_flat_raises(self):
        s = Spectrum(np.arange(1550.0, 1555.0, 0.01),
                     np.zeros(len(np.arange(1550.0, 1555.0, 0.01))))
        with pytest.raises(TroughCountError):
            find_resonances(s, 1, 0.5)

    def test_center_bias_under_noise(self):
        errs = []
        for seed in range(100):
            s = synthetic_fg([1552.0], noise=0.1, seed=seed)
            f = find_resonances(s, 1, 0.5)[0]
            errs.append(f.lam - 1552.0)
        assert abs(np.mean(errs)) < 0.002


class TestBackground:
    def test_tuned_background_recovers_baseline(self):
        base = synthetic_fg([1550.0, 1552.0], noise=0.05, seed=1)
        displaced = synthetic_fg([1550.6, 1552.6], noise=0.05, seed=2)
        bg = build_tuned_background(base, displaced)
        # baseline should sit near 0 dB with no deep residual troughs
        assert np.percentile(bg.power, 5) > -1.0
        fg = remove_background(base, bg)
        feats = find_resonances(fg, 2, 0.5)
        assert abs(feats[0].lam - 1550.0) < 0.01

    def test_identical_spectra(self):
        flat = Spectrum(np.arange(1550.0, 1555.0, 0.01),
                        -40.0 * np.ones(500))
        bg = build_tuned_background(flat, flat)
        assert np.max(np.abs(bg.power + 40.0)) < 1e-9

    def test_idempotent_removal(self):
        base = synthetic_fg([1550.0, 1552.0])
        displaced = synthetic_fg([1550.6, 1552.6])
        bg = build_tuned_background(base, displaced)
        fg = remove_background(base, bg)
        fg2 = remove_background(fg, build_tuned_background(
            remove_background(base, bg), remove_background(displaced, bg)))
        # second removal changes the residual baseline by <0.2 dB
        sel = np.abs(fg.wavelengths - 1551.0) < 0.3  # between troughs
        assert np.max(np.abs(fg2.power[sel] - fg.power[sel])) < 0.2

    def test_grid_mismatch(self):
        a = synthetic_fg([1550.0])
        b = synthetic_fg([1550.0], window=(1544.0, 1559.0))
        with pytest.raises(ValueError):
            build_tuned_background(a, b)


class TestFilterShape:
    def test_matches_analytic_lorentzian(self):
        s = synthetic_fg([1552.0], fwhm=0.2, atten=0.98)
        feat = find_resonances(s, 1, 0.5)[0]
        rel, lin = extract_filter_shape(s, feat, window_fwhms=7)
        gamma = 0.1
        expected = 1.0 - 0.98 * gamma**2 / (gamma**2 + rel**2)
        rms = np.sqrt(np.mean((lin - expected) ** 2))
        assert rms < 0.02
        # transmission at the center is 1 - atten
        assert lin[np.argmin(np.abs(rel))] == pytest.approx(0.02, abs=0.01)

    def test_window_fwhms_span(self):
        s = synthetic_fg([1552.0], fwhm=0.2)
        feat = find_resonances(s, 1, 0.5)[0]
        for w in (7, 8):
            rel, _ = extract_filter_shape(s, feat, window_fwhms=w)
            assert rel[0] == pytest.approx(-w * feat.fwhm / 2, abs=0.02)
            assert rel[-1] == pytest.approx(w * feat.fwhm / 2, abs=0.02)

    def test_window_exceeding_spectrum(self):
        s = synthetic_fg([1552.0], window=(1551.5, 1552.5))
        feat = ResonanceFeature(lam=1552.0, fwhm=0.2, depth=17.0)
        with pytest.raises(ValueError):
            extract_filter_shape(s, feat, window_fwhms=20)


class TestAssistant:
    def make_plant(self, noise=0.2, seed=0):
        from ringsim.devices import FilterBank, OsaConfig, SimulatedPlant
        from ringsim.thermal import ThermalGroup

        channels = [5, 3, 6, 4]
        K = np.abs(0.1 * np.random.default_rng(seed).standard_normal((4, 4))
                   + 0.1 + 0.5 * np.eye(4)) * 200.0
        bias = {5: 0.0625, 3: 0.04, 6: 0.0225, 4: 0.01}
        therm = ThermalGroup(channels=channels, K=K, heat_bias=bias,
                             heater_resistance=100000.0)
        fb = FilterBank("fb", therm, channels)
        fb.set_bias_params([1550.0, 1552.0, 1554.0, 1556.0], 0.98, 0.2)
        plant = SimulatedPlant(root=fb, thermal=therm, attenuation=1e-4,
                               osa=OsaConfig(0.1, 0.01, noise),
                               rng=np.random.default_rng(seed + 100))
        plant.set_drive(bias)
        return plant

    def test_fg_resonances_at_bias(self):
        plant = self.make_plant()
        assistant = SpectrumAssistant(plant, ("fb", "thru"),
                                      (1545.0, 1560.0), n_chan=4)
        feats = assistant.resonances(avg_count=4, bg_type="smoothed")
        for f, c in zip(feats, [1550.0, 1552.0, 1554.0, 1556.0]):
            assert abs(f.lam - c) < 0.02

    def test_attenuation_estimate(self):
        plant = self.make_plant()
        assistant = SpectrumAssistant(plant, ("fb", "thru"),
                                      (1545.0, 1560.0), n_chan=4)
        base = assistant.raw_spect(avg_count=3)
        plant.set_drive({ch: plant.thermal.heat_bias[ch] + 0.6 / 120.0
                         for ch in plant.thermal.channels})
        displaced = assistant.raw_spect(avg_count=3)
        assistant.set_bg_tuned(base, displaced)
        est = assistant.attenuation_estimate()
        assert abs(est - 1e-4) / 1e-4 < 0.04

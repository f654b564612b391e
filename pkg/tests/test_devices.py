"""Simulated device graph and OSA layer."""

import numpy as np
import pytest

from ringsim.devices import (
    Cascade,
    FilterBank,
    OsaConfig,
    SimulatedPlant,
    Spectrum,
    Splitter,
    dbm2lin,
    lin2dbm,
    pink_noise,
)
from ringsim.thermal import DriveUnit, ThermalGroup


def quiet_osa():
    return OsaConfig(pump_power=0.1, spacing=0.01, noise_amplitude=0.0)


def four_ring_plant(noise=0.0, seed=0):
    channels = [5, 3, 6, 4]
    K = np.abs(0.1 * np.random.default_rng(seed).standard_normal((4, 4))
               + 0.1 + 0.5 * np.eye(4)) * 200.0
    bias = {5: 0.0625, 3: 0.04, 6: 0.0225, 4: 0.01}
    therm = ThermalGroup(channels=channels, K=K, heat_bias=bias,
                         heater_resistance=100000.0)
    fb = FilterBank("fb", therm, channels, mode="dendrite")
    fb.set_bias_params([1550.0, 1552.0, 1554.0, 1556.0], 0.98, 0.2)
    plant = SimulatedPlant(
        root=fb, thermal=therm, attenuation=1e-4,
        osa=OsaConfig(0.1, 0.01, noise),
        rng=np.random.default_rng(seed + 1))
    return plant, therm, fb


class TestSpectrum:
    def test_grid_validation(self):
        with pytest.raises(ValueError):
            Spectrum(np.array([1.0, 0.5, 2.0]), np.zeros(3))
        with pytest.raises(ValueError):
            Spectrum(np.array([1.0, 2.0]), np.array([0.0, np.inf]))

    def test_shift_crop_roundtrip(self):
        s = Spectrum(1550.0 + 0.01 * np.arange(200), np.zeros(200))
        shifted = s.shift(-1550.5)
        cropped = shifted.crop((-0.2, 0.2))
        assert cropped.wavelengths[0] >= -0.2
        assert cropped.wavelengths[-1] <= 0.2
        assert cropped.resolution == pytest.approx(0.01)

    def test_dbm_conversions(self):
        assert dbm2lin(0.0) == pytest.approx(1.0)
        assert dbm2lin(-10.0) == pytest.approx(0.1)
        assert lin2dbm(0.1) == pytest.approx(-10.0)

    def test_csv(self):
        s = Spectrum(np.array([1550.0, 1550.01]), np.array([-40.0, -41.0]))
        lines = s.to_csv().strip().splitlines()
        assert lines[0] == "nm,dbm"
        assert lines[1].startswith("1550.000000,")


class TestPinkNoise:
    def test_zero_amplitude(self):
        assert np.all(pink_noise(256, 0.0, np.random.default_rng(0)) == 0.0)

    def test_determinism(self):
        a = pink_noise(1024, 0.2, np.random.default_rng(42))
        b = pink_noise(1024, 0.2, np.random.default_rng(42))
        assert np.array_equal(a, b)

    def test_zero_mean_and_rms(self):
        x = pink_noise(4096, 0.2, np.random.default_rng(7))
        assert abs(np.mean(x)) < 0.2 / np.sqrt(4096) * 3
        assert np.sqrt(np.mean(x**2)) == pytest.approx(0.2, rel=1e-9)

    def test_psd_slope(self):
        # Welch periodogram over the central decade should fall like 1/f
        from scipy.signal import welch

        slopes = []
        for seed in range(5):
            x = pink_noise(4096, 1.0, np.random.default_rng(seed))
            f, p = welch(x, nperseg=1024)
            sel = (f > 0.01) & (f < 0.1)
            slope = np.polyfit(np.log10(f[sel]), np.log10(p[sel]), 1)[0]
            slopes.append(slope)
        assert -1.3 < np.mean(slopes) < -0.7


class TestFilterBank:
    def test_troughs_at_bias(self):
        plant, therm, fb = four_ring_plant()
        plant.set_drive(therm.heat_bias)
        s = plant.spectrum((1545.0, 1560.0), ("fb", "thru"))
        lin = dbm2lin(s.power)
        baseline = 0.1 * 1e-4
        for wl in (1550.0, 1552.0, 1554.0, 1556.0):
            idx = np.argmin(np.abs(s.wavelengths - wl))
            # ~17 dB trough relative to the pump*attenuation baseline
            depth_db = 10 * np.log10(baseline / lin[idx])
            assert 15.0 < depth_db < 18.5

    def test_flat_when_detuned(self):
        plant, therm, fb = four_ring_plant()
        plant.set_drive({ch: 5.0 for ch in therm.channels})  # far red
        s = plant.spectrum((1545.0, 1560.0), ("fb", "thru"))
        lin = dbm2lin(s.power)
        assert np.max(np.abs(lin / (0.1 * 1e-4) - 1.0)) < 1e-6

    def test_thru_plus_drop_conserved(self):
        plant, therm, fb = four_ring_plant()
        plant.set_drive(therm.heat_bias)
        lam = np.linspace(1549.0, 1557.0, 500)
        thru = plant.transmission(("fb", "thru"), lam)
        drop = plant.transmission(("fb", "drop"), lam)
        assert np.allclose(thru + drop, 1e-4, atol=1e-15)

    def test_blue_position_at_zero_drive(self):
        plant, therm, fb = four_ring_plant()
        # all troughs blue-shifted by K @ bias relative to the channels
        shifts = therm.K @ therm.bias_vector()
        rings = fb.shifted_rings(plant.drive())
        for j, ring in enumerate(rings):
            expected = [1550.0, 1552.0, 1554.0, 1556.0][j] - shifts[j]
            assert ring.lam0 == pytest.approx(expected, abs=1e-12)

    def test_axon_mode_has_no_drop_tap(self):
        plant, therm, _ = four_ring_plant()
        axon = FilterBank("ax", therm, therm.channels, mode="axon")
        axon.set_bias_params([1550.0, 1552.0, 1554.0, 1556.0], 0.98, 0.2)
        plant2 = SimulatedPlant(root=axon, thermal=therm, attenuation=1.0,
                                osa=quiet_osa())
        with pytest.raises(KeyError):
            plant2.transmission(("ax", "drop"), np.array([1550.0, 1551.0]))


class TestComposition:
    def test_cascade_multiplies(self):
        _, therm, _ = four_ring_plant()
        a = FilterBank("a", therm, [5, 3], mode="axon")
        a.set_bias_params([1550.0, 1552.0], 0.98, 0.2)
        b = FilterBank("b", therm, [6, 4], mode="dendrite")
        b.set_bias_params([1550.0, 1552.0], 0.98, 0.2)
        plant = SimulatedPlant(root=Cascade(a, b), thermal=therm,
                               attenuation=1.0, osa=quiet_osa())
        plant.set_drive(therm.heat_bias)
        lam = np.linspace(1549.0, 1553.0, 200)
        ta = plant.transmission(("a", "thru"), lam)
        tb = plant.transmission(("b", "thru"), lam)
        powers = plant.drive()
        expected = a.thru_transmission(lam, powers) * \
            b.thru_transmission(lam, powers)
        assert np.allclose(tb, expected, atol=1e-15)
        assert np.all(tb <= ta + 1e-15)

    def test_splitter_divides_equally(self):
        _, therm, _ = four_ring_plant()
        banks = []
        for i, name in enumerate(("d0", "d1", "d2")):
            fb = FilterBank(name, therm, [therm.channels[0]], mode="dendrite")
            fb.set_bias_params([1550.0], 0.98, 0.2)
            banks.append(fb)
        plant = SimulatedPlant(root=Splitter(*banks), thermal=therm,
                               attenuation=1.0, osa=quiet_osa())
        plant.set_drive(therm.heat_bias)
        lam = np.array([1549.0, 1550.0, 1551.0])
        per_branch = [plant.transmission((n, "thru"), lam)
                      for n in ("d0", "d1", "d2")]
        assert np.allclose(per_branch[0], per_branch[1])
        thru_plus_drop = plant.transmission(("d0", "thru"), lam) + \
            plant.transmission(("d0", "drop"), lam)
        assert np.allclose(thru_plus_drop, 1.0 / 3.0, atol=1e-15)


class TestDeterminism:
    def test_noiseless_repeatability(self):
        plant, therm, _ = four_ring_plant(noise=0.0)
        a = plant.spectrum((1549.0, 1551.0), ("fb", "thru"))
        b = plant.spectrum((1549.0, 1551.0), ("fb", "thru"))
        assert np.array_equal(a.power, b.power)

    def test_seeded_noise_repeatability(self):
        a = four_ring_plant(noise=0.2, seed=3)[0].spectrum(
            (1549.0, 1551.0), ("fb", "thru"))
        b = four_ring_plant(noise=0.2, seed=3)[0].spectrum(
            (1549.0, 1551.0), ("fb", "thru"))
        assert np.array_equal(a.power, b.power)

    def test_channel_powers_noiseless(self):
        plant, therm, _ = four_ring_plant(noise=0.2)
        p1 = plant.channel_powers(("fb", "thru"), [1550.0, 1552.0])
        p2 = plant.channel_powers(("fb", "thru"), [1550.0, 1552.0])
        assert np.array_equal(p1, p2)

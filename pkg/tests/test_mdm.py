"""Interferometer analysis and intermodal-mixing compensation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringsim.devices import Spectrum
from ringsim.mdm import (
    InterferometerModel,
    ModeMixing,
    SinusoidFitError,
    alpha_from_extinction,
    compensate_mixing,
    coupling_report,
    coupling_report_csv,
    extinction_ratio,
    interferometer_transmission,
    make_interferometer_spectrum,
    read_sweep_dir,
)

DL = 5e5    # nm; ~6 oscillation periods across the default window


class TestInterferometerModel:
    @pytest.mark.parametrize("kwargs", [
        {"alpha": -0.1, "dl": 1.0}, {"alpha": 1.1, "dl": 1.0},
        {"alpha": 0.5, "dl": 0.0},
    ])
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(ValueError):
            InterferometerModel(**kwargs)

    def test_no_coupling_is_transparent(self):
        m = InterferometerModel(alpha=0.0, dl=DL)
        lam = np.linspace(1530, 1560, 50)
        np.testing.assert_allclose(interferometer_transmission(m, lam), 1.0)

    def test_half_coupling_full_swing(self):
        m = InterferometerModel(alpha=0.5, dl=DL)
        # wavelengths hitting cos = +1 and -1 exactly
        lam_min = m.dl / round(m.dl / 1550.0)
        lam_max = m.dl / (round(m.dl / 1550.0) + 0.5)
        assert interferometer_transmission(m, lam_min) == pytest.approx(0.0)
        assert interferometer_transmission(m, lam_max) == pytest.approx(1.0)

    def test_alpha_02_swing(self):
        m = InterferometerModel(alpha=0.2, dl=DL)
        lam = np.arange(1530.0, 1560.0, 0.001)
        t = interferometer_transmission(m, lam)
        assert t.min() == pytest.approx(0.36, abs=1e-4)
        assert t.max() == pytest.approx(1.0, abs=1e-4)

    def test_rejects_nonpositive_wavelength(self):
        m = InterferometerModel(alpha=0.2, dl=DL)
        with pytest.raises(ValueError):
            interferometer_transmission(m, [-1.0])

    def test_periodic_in_inverse_wavelength(self):
        # one full period in dL/lam leaves the transmission unchanged
        m = InterferometerModel(alpha=0.3, dl=DL)
        k0 = m.dl / 1550.0
        lam_a = m.dl / k0
        lam_b = m.dl / (k0 + 1.0)
        assert interferometer_transmission(m, lam_a) == pytest.approx(
            float(interferometer_transmission(m, lam_b)), abs=1e-12)


class TestExtinctionRatio:
    def test_known_swing(self):
        sp = make_interferometer_spectrum(InterferometerModel(0.2, DL))
        er = extinction_ratio(sp)
        assert er == pytest.approx(10 * np.log10(1 / 0.36), abs=0.01)

    def test_full_extinction_clamped_floor(self):
        sp = make_interferometer_spectrum(InterferometerModel(0.5, DL))
        assert extinction_ratio(sp) >= 30.0

    def test_flat_spectrum_zero(self):
        lam = np.arange(1530.0, 1560.0, 0.01)
        assert extinction_ratio(Spectrum(lam, -20.0 * np.ones(len(lam)))) \
            == 0.0

    def test_non_sinusoid_rejected(self):
        lam = np.arange(1530.0, 1560.0, 0.01)
        ramp = Spectrum(lam, np.linspace(-30.0, -10.0, len(lam)))
        with pytest.raises(SinusoidFitError):
            extinction_ratio(ramp)

    def test_symmetric_in_alpha(self):
        for a in (0.1, 0.25, 0.4):
            er_a = extinction_ratio(
                make_interferometer_spectrum(InterferometerModel(a, DL)))
            er_b = extinction_ratio(
                make_interferometer_spectrum(InterferometerModel(1 - a, DL)))
            assert er_a == pytest.approx(er_b, rel=1e-3)

    def test_maximized_at_half_on_grid(self):
        alphas = np.linspace(0.0, 1.0, 101)
        ers = []
        for a in alphas:
            sp = make_interferometer_spectrum(InterferometerModel(a, DL))
            try:
                ers.append(extinction_ratio(sp))
            except SinusoidFitError:
                ers.append(0.0)     # alpha 0 or 1: no oscillation
        ers = np.array(ers)
        assert alphas[int(np.argmax(ers))] == pytest.approx(0.5)
        assert ers[0] == pytest.approx(0.0, abs=1e-6)
        assert ers[-1] == pytest.approx(0.0, abs=1e-6)

    def test_noise_robust_alpha_recovery(self):
        errs = []
        for seed in range(50):
            sp = make_interferometer_spectrum(
                InterferometerModel(0.3, DL), noise_amplitude=0.2,
                rng=np.random.default_rng(seed))
            lo, hi = alpha_from_extinction(extinction_ratio(sp))
            errs.append(min(abs(lo - 0.3), abs(hi - 0.3)))
        assert max(errs) < 0.05


class TestAlphaInversion:
    def test_branch_pair_symmetry(self):
        lo, hi = alpha_from_extinction(4.437)
        assert lo == pytest.approx(0.2, abs=1e-3)
        assert hi == pytest.approx(1.0 - lo)

    def test_zero_swing(self):
        lo, hi = alpha_from_extinction(0.0)
        assert lo == pytest.approx(0.0) and hi == pytest.approx(1.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            alpha_from_extinction(-1.0)


class TestCouplingReport:
    def test_ranks_half_coupling_first(self):
        sweep = [(0.4, 10.0 + i,
                  make_interferometer_spectrum(InterferometerModel(a, DL)))
                 for i, a in enumerate((0.1, 0.5, 0.9))]
        rows = coupling_report(sweep)
        assert rows[0]["length"] == 11.0
        assert abs(rows[0]["alpha_lo"] - 0.5) < 0.02

    def test_single_row(self):
        sweep = [(0.45, 12.0,
                  make_interferometer_spectrum(InterferometerModel(0.2, DL)))]
        rows = coupling_report(sweep)
        assert len(rows) == 1
        assert rows[0]["alpha_lo"] == pytest.approx(0.2, abs=1e-3)

    def test_fit_failures_reported_not_fatal(self):
        lam = np.arange(1530.0, 1560.0, 0.01)
        ramp = Spectrum(lam, np.linspace(-30.0, -10.0, len(lam)))
        sweep = [
            (0.4, 10.0,
             make_interferometer_spectrum(InterferometerModel(0.3, DL))),
            (0.4, 11.0, ramp),
        ]
        rows = coupling_report(sweep)
        assert len(rows) == 2
        assert rows[0]["er_db"] is not None
        assert rows[1]["error"]

    def test_csv_emission(self):
        sweep = [(0.4, 10.0,
                  make_interferometer_spectrum(InterferometerModel(0.3, DL)))]
        text = coupling_report_csv(coupling_report(sweep))
        lines = text.strip().split("\n")
        assert lines[0] == "width,length,alpha_lo,alpha_hi,er_db,error"
        fields = lines[1].split(",")
        assert fields[:2] == ["0.4", "10.0"]
        assert float(fields[2]) == pytest.approx(0.3, abs=1e-3)

    def test_directory_ingestion(self, tmp_path):
        for a, name in ((0.2, "0.40_10.0.csv"), (0.5, "0.45_12.5.csv")):
            sp = make_interferometer_spectrum(InterferometerModel(a, DL))
            (tmp_path / name).write_text(sp.to_csv())
        sweep = read_sweep_dir(tmp_path)
        assert [(w, l) for w, l, _ in sweep] == [(0.40, 10.0), (0.45, 12.5)]
        rows = coupling_report(sweep)
        assert rows[0]["width"] == 0.45     # alpha 0.5 ranks first

    def test_directory_rejects_bad_name(self, tmp_path):
        (tmp_path / "widths.csv").write_text("nm,dbm\n1.0,2.0\n")
        with pytest.raises(ValueError):
            read_sweep_dir(tmp_path)

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            read_sweep_dir(tmp_path)


def random_unitary(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


class TestModeMixing:
    def test_rejects_non_unitary(self):
        with pytest.raises(ValueError):
            ModeMixing(np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            ModeMixing(np.ones((2, 3)))

    def test_identity_passthrough(self):
        w = np.array([0.2, -0.5, 0.8])
        np.testing.assert_allclose(
            compensate_mixing(ModeMixing(np.eye(3)), w), w)

    def test_rotation_inverse(self):
        th = 0.7
        rot = np.array([[np.cos(th), -np.sin(th)],
                        [np.sin(th), np.cos(th)]])
        w = np.array([1.0, 2.0])
        pre = compensate_mixing(ModeMixing(rot), w)
        np.testing.assert_allclose(pre, rot.T @ w)
        np.testing.assert_allclose(rot @ pre, w, atol=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            compensate_mixing(ModeMixing(np.eye(2)), np.ones(3))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(2, 5))
    def test_roundtrip_and_norm_preservation(self, seed, n):
        m = ModeMixing(random_unitary(n, seed))
        rng = np.random.default_rng(seed + 1)
        w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        pre = compensate_mixing(m, w)
        assert np.max(np.abs(m.M @ pre - w)) < 1e-9
        assert np.linalg.norm(pre) == pytest.approx(np.linalg.norm(w),
                                                    rel=1e-12)

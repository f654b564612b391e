"""Calibration engine for thermally tuned ring filter banks.

Learns a CalibrationModel from a hidden plant through its measurement
interface only: ascription (which heater owns which trough), tuned
background removal, proportional-feedback bias tracking, filter-shape
extraction and crosstalk-matrix estimation. A cascaded variant handles
axon+dendrite banks whose trough pairs must be merged onto shared
channel wavelengths. The inverse map (requested transmissions and
detunes to heater drive) closes the loop.

Drive bookkeeping: the plant accepts absolute per-channel dissipated
power (mW); the learned heat bias is the absolute power that parks each
trough on its channel wavelength. DriveState deltas ride on top of it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .analysis import SpectrumAssistant, TroughCountError, extract_filter_shape
from .devices import Cascade, FilterBank, OsaConfig, SimulatedPlant
from .thermal import (
    DriveState,
    DriveUnit,
    ThermalGroup,
    random_cascade_k,
    random_crosstalk_k,
)

# Reference single-bank (4 dendrite rings) configuration
BASIC_WL_CHANNELS = (1550.0, 1552.0, 1554.0, 1556.0)
BASIC_WINDOW = (1530.0, 1559.0)
BASIC_CURRENT_CHANNELS = (5, 3, 6, 4)
BASIC_HEAT_BIAS_V = (2.5, 2.0, 1.5, 1.0)

# Reference cascaded (3 axon + 3 dendrite rings) configuration
CASCADE_WL_CHANNELS = (1550.0, 1552.0, 1554.0)
CASCADE_WINDOW = (1545.0, 1560.0)
CASCADE_AXON_CHANNELS = (0, 1, 2)
CASCADE_DENDRITE_CHANNELS = (3, 4, 5)
CASCADE_MIN_SEPARATION = 0.12

# Heater resistances convert the volt-denominated biases to dissipated
# power. The basic bank uses a higher resistance so its zero-drive blue
# offsets (K @ bias) stay well inside the 2 nm channel spacing; the
# cascaded bank needs more bias power so each axon/dendrite trough pair
# starts visibly separated.
BASIC_HEATER_RESISTANCE = 600000.0
CASCADE_HEATER_RESISTANCE = 100000.0
REFERENCE_ATTENUATION = 1e-4

MODEL_SCHEMA_VERSION = 1


class AscriptionError(RuntimeError):
    """Two heater channels moved the same trough the most."""


class ConvergenceError(RuntimeError):
    """A feedback controller did not reach its threshold in max_iter."""


@dataclass(frozen=True)
class ControllerConfig:
    """Proportional-feedback controller settings.

    Parameters
    ----------
    kp : float
        Proportional gain (0.5 for tracking, 0.1 for merging).
    precision : float
        Convergence threshold on the wavelength error, nm.
    max_iter : int
        Iteration budget before ConvergenceError.
    avg_count : int
        Spectrum averages per measurement.
    """

    kp: float = 0.5
    precision: float = 0.005
    max_iter: int = 100
    avg_count: int = 4

    def __post_init__(self):
        if self.kp <= 0 or self.precision <= 0:
            raise ValueError("kp and precision must be positive")
        if self.max_iter < 1 or self.avg_count < 1:
            raise ValueError("max_iter and avg_count must be >= 1")


@dataclass
class CalibrationModel:
    """Learned mirror of a hidden filter-bank device.

    Parameters
    ----------
    channel_order : list of int
        Heater channel of each ring, ascending in ring (trough) order;
        for cascaded banks the three axon channels then the three
        dendrite channels.
    heat_bias : dict
        Channel -> absolute bias power (mW) parking the troughs on the
        channel wavelengths.
    lam_bias : list of float
        Resonance wavelengths at bias, ascending (one per trough; one
        per merged pair for cascaded banks).
    K_est : ndarray
        Estimated crosstalk matrix (nm/mW), rings x channels in
        channel_order.
    filter_shapes : dict
        Channel -> (rel_nm, linear transmission) curve around the
        trough at bias.
    attenuation_est : float
        Linear baseline power factor of the whole path.
    fwhm_est : dict
        Channel -> trough FWHM (nm) at bias.
    """

    channel_order: list[int]
    heat_bias: dict[int, float]
    lam_bias: list[float]
    K_est: NDArray[np.float64]
    filter_shapes: dict[int, tuple[NDArray[np.float64], NDArray[np.float64]]]
    attenuation_est: float
    fwhm_est: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.channel_order)
        self.K_est = np.asarray(self.K_est, dtype=float)
        if self.K_est.shape != (n, n):
            raise ValueError("K_est must be square over channel_order")
        if set(self.heat_bias) != set(self.channel_order):
            raise ValueError("heat_bias must cover exactly channel_order")
        if list(self.lam_bias) != sorted(self.lam_bias):
            raise ValueError("lam_bias must be ascending")
        if len(self.lam_bias) not in (n, n // 2):
            raise ValueError("lam_bias length inconsistent with channels")

    def to_json(self) -> str:
        doc = {
            "schema_version": MODEL_SCHEMA_VERSION,
            "channel_order": list(self.channel_order),
            "heat_bias": {str(c): v for c, v in self.heat_bias.items()},
            "lam_bias": list(map(float, self.lam_bias)),
            "K_est": self.K_est.tolist(),
            "filter_shapes": {
                str(c): [list(map(float, rel)), list(map(float, lin))]
                for c, (rel, lin) in self.filter_shapes.items()
            },
            "attenuation_est": self.attenuation_est,
            "fwhm_est": {str(c): v for c, v in self.fwhm_est.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationModel":
        doc = json.loads(text)
        if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise ValueError("unsupported calibration schema version")
        return cls(
            channel_order=list(doc["channel_order"]),
            heat_bias={int(c): float(v) for c, v in doc["heat_bias"].items()},
            lam_bias=[float(v) for v in doc["lam_bias"]],
            K_est=np.array(doc["K_est"], dtype=float),
            filter_shapes={
                int(c): (np.array(rel, dtype=float), np.array(lin, dtype=float))
                for c, (rel, lin) in doc["filter_shapes"].items()
            },
            attenuation_est=float(doc["attenuation_est"]),
            fwhm_est={int(c): float(v) for c, v in doc["fwhm_est"].items()},
        )


# ---------------------------------------------------------------------------
# Hidden-plant factories (simulated ground truth for calibration to learn)
# ---------------------------------------------------------------------------

def _split_rng(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def make_basic_hidden_plant(seed: int, noise_amplitude: float = 0.2,
                            fwhm: float = 0.2, atten: float = 0.98,
                            ) -> SimulatedPlant:
    """Four-ring dendrite bank with scrambled channel wiring, random
    crosstalk and volt-denominated heat biases."""
    k_rng, noise_rng = _split_rng(seed, 2)
    channels = list(BASIC_CURRENT_CHANNELS)
    therm = ThermalGroup(channels=channels,
                         K=random_crosstalk_k(len(channels), len(channels), k_rng),
                         heater_resistance=BASIC_HEATER_RESISTANCE)
    therm.set_heat_bias(dict(zip(channels, BASIC_HEAT_BIAS_V)), DriveUnit.V)
    bank = FilterBank("bank", therm, channels, mode="dendrite")
    bank.set_bias_params(BASIC_WL_CHANNELS, atten, fwhm)
    return SimulatedPlant(root=bank, thermal=therm,
                          attenuation=REFERENCE_ATTENUATION,
                          osa=OsaConfig(0.1, 0.01, noise_amplitude),
                          rng=noise_rng)


def make_cascaded_hidden_plant(seed: int, noise_amplitude: float = 0.2,
                               fwhm: float = 0.1, atten: float = 0.98,
                               ) -> SimulatedPlant:
    """Three-channel axon bank cascaded into a dendrite bank. Channel
    wiring is rotated so ascription has work to do; axon and dendrite
    biases differ so the trough pairs start separated."""
    k_rng, noise_rng = _split_rng(seed, 2)
    axon_mixed = [1, 2, 0]
    dendrite_mixed = [4, 5, 3]
    channels = axon_mixed + dendrite_mixed
    therm = ThermalGroup(channels=channels,
                         K=random_cascade_k(len(channels), k_rng),
                         heater_resistance=CASCADE_HEATER_RESISTANCE)
    therm.set_heat_bias({**{c: 2.0 for c in axon_mixed},
                         **{c: 1.5 for c in dendrite_mixed}}, DriveUnit.V)
    axon = FilterBank("axon", therm, axon_mixed, mode="axon")
    axon.set_bias_params(CASCADE_WL_CHANNELS, atten, fwhm)
    dendrite = FilterBank("dendrite", therm, dendrite_mixed, mode="dendrite")
    dendrite.set_bias_params(CASCADE_WL_CHANNELS, atten, fwhm)
    return SimulatedPlant(root=Cascade(axon, dendrite), thermal=therm,
                          attenuation=REFERENCE_ATTENUATION,
                          osa=OsaConfig(0.1, 0.01, noise_amplitude),
                          rng=noise_rng)


# ---------------------------------------------------------------------------
# Calibration steps
# ---------------------------------------------------------------------------

def _set_drive(plant: SimulatedPlant, drive: dict[int, float]) -> None:
    plant.set_drive({ch: max(0.0, p) for ch, p in drive.items()})


def ascribe(plant: SimulatedPlant, assistant: SpectrumAssistant,
            channels: list[int], base_drive: dict[int, float],
            tune_by: float = 0.01, avg_count: int = 2,
            ) -> tuple[list[int], dict[int, float]]:
    """Discover which heater channel owns which trough.

    Tunes each channel up by ``tune_by`` mW in turn and watches which
    trough moves the most.

    Returns
    -------
    (channel_order, k_diag)
        Channel of each trough in ascending-wavelength trough order,
        and the per-channel primary sensitivity estimate
        max shift / tune_by (nm/mW).

    Raises
    ------
    AscriptionError
        If two channels claim the same trough even after retrying with
        a halved poke (a large poke can push a trough within the
        resolvability limit of its neighbor and corrupt the claims).
    """
    _set_drive(plant, base_drive)
    base = np.array([f.lam for f in assistant.resonances(
        avg_count=avg_count, bg_type="smoothed")])
    for poke in (tune_by, tune_by / 2.0):
        owner_trough: dict[int, int] = {}
        k_diag: dict[int, float] = {}
        for ch in channels:
            poked = dict(base_drive)
            poked[ch] = poked.get(ch, 0.0) + poke
            _set_drive(plant, poked)
            moved = np.array([f.lam for f in assistant.resonances(
                avg_count=avg_count, bg_type="smoothed")])
            shifts = moved - base
            owner_trough[ch] = int(np.argmax(shifts))
            k_diag[ch] = float(np.max(shifts) / poke)
        _set_drive(plant, base_drive)
        troughs = list(owner_trough.values())
        if len(set(troughs)) == len(troughs):
            order = [ch for ch, _ in
                     sorted(owner_trough.items(), key=lambda kv: kv[1])]
            return order, k_diag
    raise AscriptionError("multiple channels ascribed to one trough")


def set_tuned_background(plant: SimulatedPlant, assistant: SpectrumAssistant,
                         channel_order: list[int], k_diag: dict[int, float],
                         base_drive: dict[int, float], avg_count: int = 3,
                         detune_by_fwhms: float = 3.0) -> None:
    """Build and install the trough-free background: displace every
    trough by a few linewidths, take the upper envelope of the base and
    displaced raw spectra."""
    feats = assistant.resonances(avg_count=avg_count, bg_type="smoothed")
    base_raw = assistant.raw_spect(avg_count)
    displaced = dict(base_drive)
    for j, f in enumerate(feats):
        ch = channel_order[j]
        displaced[ch] = displaced.get(ch, 0.0) + detune_by_fwhms * f.fwhm / k_diag[ch]
    _set_drive(plant, displaced)
    displaced_raw = assistant.raw_spect(avg_count)
    _set_drive(plant, base_drive)
    assistant.set_bg_tuned(base_raw, displaced_raw)


def track_to_bias(plant: SimulatedPlant, assistant: SpectrumAssistant,
                  targets: ArrayLike, channel_order: list[int],
                  k_diag: dict[int, float], cfg: ControllerConfig,
                  start_drive: dict[int, float],
                  ) -> tuple[dict[int, float], list[float], list[float]]:
    """Proportional feedback driving every trough onto its target.

    Per iteration: measure troughs, recenter the acquisition window on
    the span of troughs and targets (doubled), and nudge each channel
    by kp * err / K_diag.

    Returns (converged drive, final trough wavelengths, max-error
    trajectory). Raises ConvergenceError when the budget runs out.
    """
    targets = np.sort(np.asarray(targets, dtype=float))
    drive = dict(start_drive)
    _set_drive(plant, drive)
    trajectory: list[float] = []
    for _ in range(cfg.max_iter):
        feats = assistant.resonances(avg_count=cfg.avg_count)
        peaks = np.array([f.lam for f in feats])
        errs = targets - peaks
        trajectory.append(float(np.max(np.abs(errs))))
        if trajectory[-1] < cfg.precision:
            return drive, [float(p) for p in peaks], trajectory
        tight = (min(peaks.min(), targets.min()),
                 max(peaks.max(), targets.max()))
        half = tight[1] - tight[0]
        center = 0.5 * (tight[0] + tight[1])
        assistant.window = (center - half, center + half)
        for j, ch in enumerate(channel_order):
            drive[ch] = max(0.0, drive.get(ch, 0.0) + cfg.kp * errs[j] / k_diag[ch])
        _set_drive(plant, drive)
    raise ConvergenceError(
        f"tracking stalled at max error {trajectory[-1]:.4f} nm")


def pull_filter_shapes(assistant: SpectrumAssistant, channel_order: list[int],
                       window_fwhms: float = 7.0, avg_count: int = 5,
                       ) -> tuple[dict[int, tuple], dict[int, float]]:
    """Extract the per-ring transmission curve around each trough."""
    spect = assistant.fg_spect(avg_count=avg_count, bg_type="tuned")
    feats = assistant.resonances(spect)
    shapes: dict[int, tuple] = {}
    fwhms: dict[int, float] = {}
    for ch, f in zip(channel_order, feats):
        shapes[ch] = extract_filter_shape(spect, f, window_fwhms)
        fwhms[ch] = f.fwhm
    return shapes, fwhms


def estimate_K(plant: SimulatedPlant, assistant: SpectrumAssistant,
               channel_order: list[int], k_diag: dict[int, float],
               bias_drive: dict[int, float], bias_lams: ArrayLike,
               span_nm: float = 1.0, n_pts: int = 11, avg_count: int = 5,
               ) -> NDArray[np.float64]:
    """Sweep each channel around bias and fit every trough's shift.

    The sweep spans +- span_nm worth of primary shift (span / K_diag in
    power); each trough's least-squares slope against swept power fills
    one column. Negative slopes clamp to 0.
    """
    bias_lams = np.asarray(bias_lams, dtype=float)
    n = len(channel_order)
    K = np.zeros((n, n))
    for i, ch in enumerate(channel_order):
        d_power = span_nm / k_diag[ch]
        lo = max(0.0, bias_drive[ch] - d_power)
        x = np.linspace(lo, bias_drive[ch] + d_power, n_pts)
        ys = np.zeros((n, n_pts))
        for ipt, pt in enumerate(x):
            drive = dict(bias_drive)
            drive[ch] = float(pt)
            _set_drive(plant, drive)
            feats = assistant.resonances(avg_count=avg_count)
            ys[:, ipt] = [f.lam for f in feats] - bias_lams
        _set_drive(plant, bias_drive)
        for r in range(n):
            K[r, i] = max(float(np.polyfit(x, ys[r], 1)[0]), 0.0)
    return K


def calibrate_basic(plant: SimulatedPlant,
                    wl_channels: ArrayLike = BASIC_WL_CHANNELS,
                    window: tuple[float, float] = BASIC_WINDOW,
                    cfg: ControllerConfig | None = None,
                    tune_by: float = 0.01,
                    ) -> tuple[CalibrationModel, dict]:
    """Full single-bank calibration pipeline.

    Ascription, tuned background, bias tracking onto the channel
    wavelengths, filter-shape extraction and K-matrix fill.
    """
    cfg = cfg or ControllerConfig()
    channels = sorted(plant.thermal.channels)
    zero = {ch: 0.0 for ch in channels}
    assistant = SpectrumAssistant(plant, _thru_tap(plant), window,
                                  n_chan=len(channels), min_separation=0.5)
    order, k_diag = ascribe(plant, assistant, channels, zero, tune_by)
    set_tuned_background(plant, assistant, order, k_diag, zero)
    attenuation_est = assistant.attenuation_estimate()
    heat_bias, lam_bias, trajectory = track_to_bias(
        plant, assistant, wl_channels, order, k_diag, cfg, zero)
    shapes, fwhms = pull_filter_shapes(assistant, order)
    K_est = estimate_K(plant, assistant, order, k_diag, heat_bias, lam_bias)
    model = CalibrationModel(channel_order=order, heat_bias=heat_bias,
                             lam_bias=lam_bias, K_est=K_est,
                             filter_shapes=shapes,
                             attenuation_est=attenuation_est,
                             fwhm_est=fwhms)
    report = {
        "k_diag_ascription": k_diag,
        "tracking_iterations": len(trajectory),
        "tracking_errors": trajectory,
    }
    return model, report


# ---------------------------------------------------------------------------
# Cascaded (axon + dendrite) calibration
# ---------------------------------------------------------------------------

def merge_troughs(plant: SimulatedPlant, assistant: SpectrumAssistant,
                  target_nm: float, pair: tuple[int, int],
                  k_diag: dict[int, float], max_fwhm: float,
                  cfg: ControllerConfig, drive: dict[int, float],
                  skip_start: bool = False) -> dict[int, float]:
    """Drive a straddling axon/dendrite trough pair into one combined
    trough centered on the target.

    Phase 1 tracks both troughs toward the target until they become
    indistinguishable (count drop or width blow-up). Phase 2 watches
    the combined trough and shrinks its width: the left channel gets
    +kp*(err_fwhm - err_center)/K, the right channel the opposite. If
    the width grows, the last step is reverted and the roles swap once
    (crossover guard); a second growth ends the loop at the best state.
    """
    left, right = pair
    kp_coarse, kp_fine = 0.1, 0.11
    save_window, save_n = assistant.window, assistant.n_chan
    assistant.window = (target_nm - 2.0 * max_fwhm, target_nm + 2.0 * max_fwhm)
    try:
        if not skip_start:
            for _ in range(cfg.max_iter):
                try:
                    feats = assistant.resonances(avg_count=cfg.avg_count,
                                                 n_chan=2)
                except TroughCountError:
                    break
                if max(f.fwhm for f in feats) > 2.0 * max_fwhm:
                    break
                errs = [target_nm - f.lam for f in feats]
                if max(abs(e) for e in errs) < cfg.precision:
                    break
                drive[left] = max(0.0, drive[left]
                                  + kp_coarse * errs[0] / k_diag[left])
                drive[right] = max(0.0, drive[right]
                                   + kp_coarse * errs[1] / k_diag[right])
                _set_drive(plant, drive)

        def identify_blue(feats) -> tuple[int, int]:
            """Map two resolved troughs to heaters with a probe poke on
            the first channel of the pair; returns (blue, red)."""
            probe = dict(drive)
            probe[pair[0]] += 0.05 / k_diag[pair[0]]
            _set_drive(plant, probe)
            try:
                moved = assistant.resonances(avg_count=cfg.avg_count,
                                             n_chan=2)
            except TroughCountError:
                moved = None
            _set_drive(plant, drive)
            if moved is None:
                # the red poke merged the pair: it held the blue trough
                return pair
            shifts = [moved[k].lam - feats[k].lam for k in range(2)]
            return pair if shifts[0] > shifts[1] else (pair[1], pair[0])

        kp_pull = 0.5
        prev_err = np.inf
        prev_drive = dict(drive)
        strike = False
        for _ in range(cfg.max_iter):
            try:
                two = assistant.resonances(avg_count=cfg.avg_count, n_chan=2)
            except TroughCountError:
                two = None
            if two is not None and min(f.depth for f in two) > 5.0:
                # the rings drifted apart again; a lone ring would read
                # as a credibly narrow "merged" trough, so pull both
                # back to the target before resuming width control
                left, right = identify_blue(two)
                drive[left] = max(0.0, drive[left] + kp_pull
                                  * (target_nm - two[0].lam) / k_diag[left])
                drive[right] = max(0.0, drive[right] + kp_pull
                                   * (target_nm - two[1].lam) / k_diag[right])
                _set_drive(plant, drive)
                prev_err, prev_drive, strike = np.inf, dict(drive), False
                continue
            f = assistant.resonances(avg_count=cfg.avg_count, n_chan=1)[0]
            err_fwhm = f.fwhm - max_fwhm
            err_center = f.mid - target_nm
            if err_fwhm > prev_err:
                drive = dict(prev_drive)
                _set_drive(plant, drive)
                if strike:
                    break
                strike = True
                left, right = right, left
                continue
            if abs(err_fwhm) < cfg.precision:
                break
            prev_err = err_fwhm
            prev_drive = dict(drive)
            step = kp_fine * (err_fwhm - err_center)
            drive[left] = max(0.0, drive[left] + step / k_diag[left])
            drive[right] = max(0.0, drive[right] - step / k_diag[right])
            _set_drive(plant, drive)

        # recenter the combined trough: move both heaters together so
        # the width the loop above settled on is preserved
        for _ in range(cfg.max_iter):
            f = assistant.resonances(avg_count=max(cfg.avg_count, 8),
                                     n_chan=1)[0]
            err_center = f.mid - target_nm
            if abs(err_center) < cfg.precision / 2.0:
                break
            for ch in (left, right):
                drive[ch] = max(0.0, drive[ch]
                                - kp_fine * err_center / k_diag[ch])
            _set_drive(plant, drive)
    finally:
        assistant.window, assistant.n_chan = save_window, save_n
    return drive


def estimate_K_cascaded(plant: SimulatedPlant, assistant: SpectrumAssistant,
                        wl_channels: ArrayLike, axon_order: list[int],
                        dendrite_order: list[int], k_diag: dict[int, float],
                        bias_drive: dict[int, float], avg_count: int = 5,
                        ) -> NDArray[np.float64]:
    """Crosstalk matrix of a cascaded bank with merged trough pairs.

    Per wavelength channel, the pair's own two heaters are swept first:
    the combined trough splits and the larger signed shift belongs to
    the swept ring (sorted-diff disambiguation with a sign catch). The
    pair is then left deliberately separated so the remaining heaters'
    small crosstalk shifts can be read off two resolved troughs.

    Rows and columns are ordered axons-then-dendrites.
    """
    wl_channels = np.asarray(wl_channels, dtype=float)
    all_channels = list(axon_order) + list(dendrite_order)
    col = {ch: i for i, ch in enumerate(all_channels)}
    n_pairs = len(wl_channels)
    K = np.zeros((2 * n_pairs, 2 * n_pairs))
    save_window, save_n = assistant.window, assistant.n_chan

    def slope(xs, ys):
        return max(float(np.polyfit(xs, ys, 1)[0]), 0.0)

    try:
        for i, wl in enumerate(wl_channels):
            a, d = axon_order[i], dendrite_order[i]
            row_of = {a: i, d: n_pairs + i}
            assistant.window = (wl - 1.0, wl + 1.0)
            # own-heater sweeps: split the merged pair
            last_point = {}
            for ch in (a, d):
                d_power = 0.75 / k_diag[ch]
                # symmetric in shift space so center-pull errors cancel;
                # infeasible (negative-power) points simply drop out
                x = bias_drive[ch] + np.linspace(-d_power, d_power, 7)
                xs, own, other = [], [], []
                for pt in x:
                    if pt < 0.0:
                        continue
                    if abs(pt - bias_drive[ch]) < 1e-12:
                        continue  # pair coincides at bias, unresolvable
                    drive = dict(bias_drive)
                    drive[ch] = float(pt)
                    _set_drive(plant, drive)
                    try:
                        feats = assistant.resonances(avg_count=avg_count,
                                                     n_chan=2)
                    except TroughCountError:
                        continue
                    diff = np.sort([f.lam for f in feats] - np.array([wl, wl]))
                    if abs(diff[1]) < abs(diff[0]):
                        diff = diff[::-1]  # sign catch for blue sweeps
                    xs.append(float(pt))
                    own.append(float(diff[1]))
                    other.append(float(diff[0]))
                if len(xs) < 2:
                    raise ConvergenceError(
                        f"channel {ch}: pair never split during sweep")
                K[row_of[ch], col[ch]] = slope(xs, own)
                partner = d if ch == a else a
                K[row_of[partner], col[ch]] = slope(xs, other)
                last_point[ch] = x[-1]
            # park the pair separated to resolve crosstalk sweeps
            rebias = dict(bias_drive)
            rebias[d] = float(last_point[d])
            _set_drive(plant, rebias)
            ref = np.array([f.lam for f in assistant.resonances(
                avg_count=avg_count, n_chan=2)])
            for ch in all_channels:
                if ch in (a, d):
                    continue
                # span kept short so neighboring channels' own troughs
                # cannot wander into this pair's window mid-sweep
                d_power = 0.6 / k_diag[ch]
                x = rebias[ch] + np.linspace(-d_power, d_power, 13)
                xs, y_left, y_right = [], [], []
                for pt in x:
                    if pt < 0.0:
                        continue
                    drive = dict(rebias)
                    drive[ch] = float(pt)
                    _set_drive(plant, drive)
                    try:
                        feats = assistant.resonances(avg_count=avg_count,
                                                     n_chan=2)
                    except TroughCountError:
                        continue
                    diff = np.array([f.lam for f in feats]) - ref
                    xs.append(float(pt))
                    y_left.append(float(diff[0]))
                    y_right.append(float(diff[1]))
                if len(xs) < 2:
                    continue  # crosstalk column stays 0
                # left trough is the axon ring (dendrite parked red)
                K[i, col[ch]] = slope(xs, y_left)
                K[n_pairs + i, col[ch]] = slope(xs, y_right)
            _set_drive(plant, bias_drive)
    finally:
        assistant.window, assistant.n_chan = save_window, save_n
    return K


def calibrate_cascaded(plant: SimulatedPlant,
                       wl_channels: ArrayLike = CASCADE_WL_CHANNELS,
                       axon_channels: ArrayLike = CASCADE_AXON_CHANNELS,
                       dendrite_channels: ArrayLike = CASCADE_DENDRITE_CHANNELS,
                       window: tuple[float, float] = CASCADE_WINDOW,
                       cfg: ControllerConfig | None = None,
                       tune_by: float = 0.005,
                       ) -> tuple[CalibrationModel, dict]:
    """Full cascaded calibration: ascription over six troughs, tuned
    background, straddle staging at channel +- FWHM, two merge passes
    per channel and the cascaded K fill."""
    cfg = cfg or ControllerConfig()
    axon_channels = [int(c) for c in axon_channels]
    dendrite_channels = [int(c) for c in dendrite_channels]
    channels = axon_channels + dendrite_channels
    wl_channels = np.sort(np.asarray(wl_channels, dtype=float))
    zero = {ch: 0.0 for ch in channels}
    assistant = SpectrumAssistant(plant, _thru_tap(plant), window,
                                  n_chan=len(channels),
                                  min_separation=CASCADE_MIN_SEPARATION)
    order, k_diag = ascribe(plant, assistant, channels, zero, tune_by)
    axon_order = [ch for ch in order if ch in axon_channels]
    dendrite_order = [ch for ch in order if ch in dendrite_channels]
    if len(axon_order) != len(wl_channels) or \
            len(dendrite_order) != len(wl_channels):
        raise AscriptionError("trough pairs are not axon/dendrite interleaved")
    set_tuned_background(plant, assistant, order, k_diag, zero)
    attenuation_est = assistant.attenuation_estimate()
    shapes, fwhms = pull_filter_shapes(assistant, order, window_fwhms=8.0)
    max_fwhm = max(fwhms.values())

    # stage each pair straddling its channel at +- FWHM
    targets = []
    for wl in wl_channels:
        targets += [wl - max_fwhm, wl + max_fwhm]
    drive, _, trajectory = track_to_bias(
        plant, assistant, targets, order, k_diag, cfg, zero)
    assistant.window = window

    passes = 0
    for skip_start in (False, True):
        passes += 1
        for i, wl in enumerate(wl_channels):
            drive = merge_troughs(plant, assistant, float(wl),
                                  (axon_order[i], dendrite_order[i]),
                                  k_diag, max_fwhm, cfg, drive,
                                  skip_start=skip_start)
    _set_drive(plant, drive)

    lam_bias = []
    save_window, save_n = assistant.window, assistant.n_chan
    for wl in wl_channels:
        assistant.window = (wl - 2.0 * max_fwhm, wl + 2.0 * max_fwhm)
        lam_bias.append(float(assistant.resonances(
            avg_count=max(cfg.avg_count, 10), n_chan=1)[0].mid))
    assistant.window, assistant.n_chan = save_window, save_n

    K_est = estimate_K_cascaded(plant, assistant, wl_channels, axon_order,
                                dendrite_order, k_diag, drive)
    model = CalibrationModel(channel_order=axon_order + dendrite_order,
                             heat_bias=drive, lam_bias=lam_bias,
                             K_est=K_est, filter_shapes=shapes,
                             attenuation_est=attenuation_est,
                             fwhm_est=fwhms)
    report = {
        "k_diag_ascription": k_diag,
        "tracking_iterations": len(trajectory),
        "merge_passes": passes,
    }
    return model, report


# ---------------------------------------------------------------------------
# Inverse map and validation
# ---------------------------------------------------------------------------

def invert_filter_shape(model: CalibrationModel, channel: int,
                        transmission: float) -> float:
    """Red-side detune (nm) realizing a thru transmission target.

    Heating only shifts resonances red, so the inversion always uses
    the long-wavelength branch of the stored shape. Targets above the
    curve's reach (weight ~ +1) cap at 5 FWHM, fully off resonance.
    """
    if not 0.0 <= transmission <= 1.0:
        raise ValueError("transmission target must be in [0, 1]")
    rel, lin = model.filter_shapes[channel]
    red = rel >= 0.0
    x = rel[red]
    y = np.maximum.accumulate(lin[red])  # enforce monotone branch
    fwhm = model.fwhm_est.get(channel, float(x[-1]) / 3.5)
    if transmission < y[0] - 0.02:
        raise ValueError(
            f"channel {channel}: transmission {transmission} below the "
            f"trough floor {y[0]:.3f}")
    if transmission >= y[-1]:
        return 5.0 * fwhm
    return float(np.interp(transmission, y, x))


def weights_to_drive(model: CalibrationModel,
                     transmissions: dict[int, float],
                     detunes: dict[int, float] | None = None,
                     diagonal_only: bool = False) -> DriveState:
    """Delta drive (mW above bias) realizing per-channel transmission
    targets and explicit detunes; unnamed channels hold their bias.

    Solves K_est * dP = shift with the full matrix, or its diagonal
    when ``diagonal_only`` (for quantifying the crosstalk benefit).
    """
    detunes = detunes or {}
    overlap = set(transmissions) & set(detunes)
    if overlap:
        raise ValueError(f"channels given twice: {sorted(overlap)}")
    n = len(model.channel_order)
    shift = np.zeros(n)
    for j, ch in enumerate(model.channel_order):
        if ch in transmissions:
            shift[j] = invert_filter_shape(model, ch, transmissions[ch])
        elif ch in detunes:
            shift[j] = detunes[ch]
    K = np.diag(np.diag(model.K_est)) if diagonal_only else model.K_est
    dp = np.linalg.solve(K, shift)
    for j, ch in enumerate(model.channel_order):
        if model.heat_bias[ch] + dp[j] < 0:
            raise ValueError(f"channel {ch}: drive would need negative power")
    return DriveState({ch: float(dp[j])
                       for j, ch in enumerate(model.channel_order)})


def refine_drive(plant: SimulatedPlant, model: CalibrationModel,
                 transmissions: dict[int, float],
                 detunes: dict[int, float],
                 wl_channels: ArrayLike = CASCADE_WL_CHANNELS,
                 cfg: ControllerConfig | None = None,
                 n_iter: int = 12) -> dict[int, float]:
    """Closed-loop realization of transmission and detune targets.

    Starts from the open-loop weights_to_drive solution, then runs
    proportional feedback on averaged noisy spectra: detuned channels
    are steered by their measured trough-center error, transmission
    channels by their measured level error converted to a wavelength
    error through the stored filter-shape slope. K_est inaccuracy only
    slows convergence instead of leaving a residual, which matters for
    large moves whose open-loop error is dominated by off-diagonal
    estimation error.

    Transmission is measured relative to the in-window spectrum maximum
    so the attenuation estimate drops out of the loop.

    Returns the absolute drive (mW per channel) that was applied.
    """
    cfg = cfg or ControllerConfig()
    order = model.channel_order
    wl = np.sort(np.asarray(wl_channels, dtype=float))
    by_index = {ch: i for i, ch in enumerate(order)}
    if set(transmissions) | set(detunes) != set(order) or \
            set(transmissions) & set(detunes):
        raise ValueError("every channel needs exactly one target")
    # channel wavelengths repeat across the banks of a cascade
    chan_wl = {ch: wl[by_index[ch] % len(wl)] for ch in order}
    tap = _thru_tap(plant)
    window = (float(wl[0]) - 1.5, float(wl[-1]) + 1.5)

    state = weights_to_drive(model, transmissions, detunes=detunes)
    drive = {ch: model.heat_bias[ch] + state.values[ch] for ch in order}
    _set_drive(plant, drive)

    # dT/dnm of the stored red branch at each operating point
    slopes = {}
    for ch, t_target in transmissions.items():
        delta = invert_filter_shape(model, ch, t_target)
        rel, lin = model.filter_shapes[ch]
        red = rel >= 0.0
        x = rel[red]
        y = np.maximum.accumulate(lin[red])
        slopes[ch] = float(np.gradient(y, x)[np.argmin(np.abs(x - delta))])

    step = plant.osa.spacing
    for _ in range(n_iter):
        spectra = [plant.spectrum(window, tap) for _ in range(cfg.avg_count)]
        p = np.mean([s.linear() for s in spectra], axis=0)
        lam_grid = spectra[0].wavelengths
        p_max = float(np.max(p))
        err = np.zeros(len(order))
        for i, ch in enumerate(order):
            if ch in detunes:
                target = chan_wl[ch] + detunes[ch]
                near = (lam_grid > target - 0.2) & (lam_grid < target + 0.2)
                sub, sub_lam = p[near], lam_grid[near]
                j = int(np.argmin(sub[1:-1])) + 1
                y0, y1, y2 = sub[j - 1], sub[j], sub[j + 1]
                denom = y0 - 2.0 * y1 + y2
                frac = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
                meas = sub_lam[j] + float(np.clip(frac, -0.5, 0.5)) * step
                err[i] = target - meas
            else:
                level = float(np.interp(chan_wl[ch], lam_grid, p)) / p_max
                err[i] = (transmissions[ch] - level) / slopes[ch]
        if float(np.max(np.abs(err))) < cfg.precision / 2.0:
            break
        dp = cfg.kp * np.linalg.solve(model.K_est, err)
        for i, ch in enumerate(order):
            drive[ch] = max(0.0, drive[ch] + dp[i])
        _set_drive(plant, drive)
    return drive


def apply_drive(plant: SimulatedPlant, model: CalibrationModel,
                state: DriveState) -> None:
    """Apply a delta DriveState on top of the learned bias."""
    deltas = state.to_mw(plant.thermal.heater_resistance)
    _set_drive(plant, {ch: model.heat_bias[ch] + deltas.get(ch, 0.0)
                       for ch in model.channel_order})


def trough_centers_noiseless(plant: SimulatedPlant, tap: tuple[str, str],
                             approx_lams: ArrayLike, half_window: float = 1.0,
                             ) -> NDArray[np.float64]:
    """Sub-grid trough centers from the noiseless transmission, one per
    approximate location (oracle-grade readout for experiments)."""
    centers = []
    for lam in np.asarray(approx_lams, dtype=float):
        grid = np.arange(lam - half_window, lam + half_window, 0.002)
        t = plant.transmission(tap, grid)
        i = int(np.argmin(t[1:-1])) + 1
        y0, y1, y2 = t[i - 1], t[i], t[i + 1]
        denom = y0 - 2.0 * y1 + y2
        frac = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
        centers.append(grid[i] + float(np.clip(frac, -0.5, 0.5)) * 0.002)
    return np.array(centers)


def _thru_tap(plant: SimulatedPlant) -> tuple[str, str]:
    """Tap at the end of the bus: the last bank's thru port."""
    node = plant.root
    while isinstance(node, Cascade):
        node = node.children[-1]
    if not isinstance(node, FilterBank):
        raise ValueError("plant root does not end in a filter bank")
    return (node.name, "thru")


def basic_validation_report(model: CalibrationModel, plant: SimulatedPlant,
                            wl_channels: ArrayLike = BASIC_WL_CHANNELS,
                            ) -> dict:
    """The four single-bank gates, judged against the hidden truth."""
    hidden = plant.thermal
    ascription_ok = list(model.channel_order) == list(hidden.channels)
    bias_err = max(abs(model.heat_bias[ch] - hidden.heat_bias[ch])
                   for ch in model.channel_order)
    lam_err = float(np.max(np.abs(
        np.asarray(model.lam_bias) - np.sort(np.asarray(wl_channels, float)))))
    perm = [list(hidden.channels).index(ch) for ch in model.channel_order]
    K_true = hidden.K[:, perm] if ascription_ok else hidden.K[np.ix_(perm, perm)]
    significant = K_true >= 10.0
    k_rel_err = float(np.max(
        100.0 * np.abs(model.K_est - K_true)[significant] / K_true[significant]))
    report = {
        "ascription_ok": ascription_ok,
        "bias_err_mw": float(bias_err),
        "lam_err_nm": lam_err,
        "k_rel_err_pct": k_rel_err,
    }
    report["passed"] = (ascription_ok and bias_err <= 0.01
                        and lam_err <= 0.01 and k_rel_err <= 10.0)
    return report


def cascaded_validation_report(model: CalibrationModel, plant: SimulatedPlant,
                               wl_channels: ArrayLike = CASCADE_WL_CHANNELS,
                               ) -> dict:
    """Cascaded gates: merged bias/wavelength accuracy, attenuation
    estimate and K-matrix errors, judged against the hidden truth."""
    hidden = plant.thermal
    learned = np.sort([model.heat_bias[ch] for ch in model.channel_order])
    truth = np.sort([hidden.heat_bias[ch] for ch in hidden.channels])
    bias_err = float(np.max(np.abs(learned - truth)))
    lam_err = float(np.max(np.abs(
        np.asarray(model.lam_bias) - np.sort(np.asarray(wl_channels, float)))))
    atten_err = abs(model.attenuation_est - plant.attenuation) / plant.attenuation
    perm = [list(hidden.channels).index(ch) for ch in model.channel_order]
    K_true = hidden.K[np.ix_(perm, perm)]
    err = np.abs(model.K_est - K_true)
    diag_err = float(np.max(np.diag(err)))
    off = err[~np.eye(len(err), dtype=bool)]
    offdiag_err = float(np.max(off))
    report = {
        "bias_err_mw": bias_err,
        "lam_err_nm": lam_err,
        "attenuation_err_frac": float(atten_err),
        "k_diag_abs_err": diag_err,
        "k_offdiag_abs_err": offdiag_err,
    }
    report["passed"] = (bias_err <= 0.01 and lam_err <= 0.01
                        and atten_err <= 0.04 and diag_err <= 0.1
                        and offdiag_err <= 1.2)
    return report

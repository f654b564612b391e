"""Heater drive to resonance-wavelength mapping with thermal crosstalk.

Dissipated heat shifts each ring's resonance red. Linearizing around a
bias operating point gives

    dlam_j = sum_k K_jk dP_k

where dP_k is the delta dissipated power (mW) above the channel-k bias
and K (nm/mW) carries the crosstalk on its off-diagonals. The canonical
drive unit is dissipated power in mW; volts and milliamps are boundary
conversions through the heater resistance:

    P(mW) = V^2 / R * 1000        I(mA) = V / R * 1000
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray


class DriveUnit(Enum):
    MW = "mW"
    MA = "mA"
    V = "V"


def convert_drive(value: float, from_unit: DriveUnit, to_unit: DriveUnit,
                  resistance: float) -> float:
    """Convert a heater drive value between mW, mA and V.

    Parameters
    ----------
    value : float
        Drive magnitude in ``from_unit``. Power values must be >= 0.
    from_unit, to_unit : DriveUnit
    resistance : float
        Heater resistance in ohms, > 0.
    """
    if resistance <= 0:
        raise ValueError("heater resistance must be positive")
    if from_unit is DriveUnit.MW and value < 0:
        raise ValueError("dissipated power cannot be negative")
    # normalize to volts
    if from_unit is DriveUnit.V:
        volts = value
    elif from_unit is DriveUnit.MA:
        volts = value * resistance / 1000.0
    else:
        volts = float(np.sqrt(value * resistance / 1000.0))
    if to_unit is DriveUnit.V:
        return volts
    if to_unit is DriveUnit.MA:
        return volts / resistance * 1000.0
    return volts**2 / resistance * 1000.0


@dataclass(frozen=True)
class DriveState:
    """Per-channel heater drive, delta above the group bias.

    Parameters
    ----------
    values : dict
        Channel id -> drive value in ``unit``.
    unit : DriveUnit
        Unit tag; mW is canonical.
    """

    values: dict[int, float]
    unit: DriveUnit = DriveUnit.MW

    def to_mw(self, resistance: float) -> dict[int, float]:
        """Per-channel delta dissipated power in mW."""
        if self.unit is DriveUnit.MW:
            return dict(self.values)
        return {
            ch: convert_drive(v, self.unit, DriveUnit.MW, resistance)
            for ch, v in self.values.items()
        }


@dataclass
class ThermalGroup:
    """Heater-channel to resonance mapping for one bank of rings.

    Parameters
    ----------
    channels : list of int
        Heater channel ids; row/column j of K belongs to channels[j].
    K : ndarray
        (rings x channels) sensitivity matrix in nm/mW, entries >= 0,
        diagonal strictly dominant per row.
    heat_bias : dict
        Channel id -> bias dissipated power in mW, >= 0.
    heater_resistance : float
        Ohms, used for unit conversions. Defaults to 1000.
    """

    channels: list[int]
    K: NDArray[np.float64] | None = None
    heat_bias: dict[int, float] = field(default_factory=dict)
    heater_resistance: float = 1000.0

    def __post_init__(self):
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("duplicate channel ids")
        if self.K is not None:
            self.set_k(self.K)
        if self.heat_bias:
            self.set_heat_bias(self.heat_bias)

    def set_k(self, K: ArrayLike) -> None:
        K = np.asarray(K, dtype=float)
        if K.ndim != 2 or K.shape[1] != len(self.channels):
            raise ValueError("K must be rings x channels")
        if np.any(K < 0):
            raise ValueError("K entries must be nonnegative")
        n = min(K.shape)
        for j in range(n):
            row = K[j]
            others = np.delete(row, j)
            if others.size and row[j] <= np.max(others):
                raise ValueError(f"row {j}: primary heater does not dominate")
        self.K = K

    def set_heat_bias(self, bias: dict[int, float],
                      unit: DriveUnit = DriveUnit.MW) -> None:
        mw = {
            ch: convert_drive(v, unit, DriveUnit.MW, self.heater_resistance)
            for ch, v in bias.items()
        }
        unknown = set(mw) - set(self.channels)
        if unknown:
            raise KeyError(f"unknown channels {sorted(unknown)}")
        if any(v < 0 for v in mw.values()):
            raise ValueError("bias power must be nonnegative")
        self.heat_bias = mw

    def bias_vector(self) -> NDArray[np.float64]:
        """Bias powers (mW) in channel order; missing channels are 0."""
        return np.array([self.heat_bias.get(ch, 0.0) for ch in self.channels])

    def wavelength_shifts(self, drive: DriveState) -> NDArray[np.float64]:
        """Per-ring resonance shift (nm) for a delta-power drive.

        Unknown channel ids raise; channels absent from the drive
        contribute zero delta. A drive pulling any channel's total power
        below zero raises.
        """
        if self.K is None:
            raise ValueError("K matrix not set")
        deltas = drive.to_mw(self.heater_resistance)
        unknown = set(deltas) - set(self.channels)
        if unknown:
            raise KeyError(f"unknown channels {sorted(unknown)}")
        dp = np.zeros(len(self.channels))
        for j, ch in enumerate(self.channels):
            dp[j] = deltas.get(ch, 0.0)
            if self.heat_bias.get(ch, 0.0) + dp[j] < -1e-12:
                raise ValueError(f"channel {ch}: total power would be negative")
        return self.K @ dp

    def drive_for_shifts(self, target: ArrayLike) -> DriveState:
        """Solve K dP = dlam for the delta-power drive (mW).

        Raises if K is singular or if any channel's total power would go
        negative, naming the offending channel.
        """
        if self.K is None:
            raise ValueError("K matrix not set")
        K = self.K
        if K.shape[0] != K.shape[1]:
            raise ValueError("K must be square to invert")
        target = np.asarray(target, dtype=float)
        try:
            dp = np.linalg.solve(K, target)
        except np.linalg.LinAlgError as err:
            raise ValueError("K matrix is singular") from err
        for j, ch in enumerate(self.channels):
            if self.heat_bias.get(ch, 0.0) + dp[j] < -1e-12:
                raise ValueError(
                    f"channel {ch}: target requires negative total power"
                )
        return DriveState({ch: float(dp[j]) for j, ch in enumerate(self.channels)})


def random_crosstalk_k(n_rings: int, n_channels: int,
                       rng: np.random.Generator) -> NDArray[np.float64]:
    """Random K with extra weight on the diagonal marking each ring's
    primary filament: |0.1 N(0,1) + 0.1 + 0.5 I| * 200, in nm/mW.
    """
    base = 0.1 * rng.standard_normal((n_rings, n_channels)) + 0.1
    return np.abs(base + 0.5 * np.eye(n_rings, n_channels)) * 200.0


def random_cascade_k(n_rings: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Random square K for a cascaded bank: |N(0,1) + 20 I|, nm/mW."""
    return np.abs(rng.standard_normal((n_rings, n_rings)) + 20.0 * np.eye(n_rings))

"""Balanced-photodiode readout and transimpedance amplifier chain.

A weight bank's thru and drop ports land on a balanced photodiode pair;
the net photocurrent is

    c = resp * (thru_power - drop_power)        [mA, thru positive]

and the transimpedance stage plus source resistor and bias produce the
axon drive current

    c_out = (rt * c + bv) / rs + bc             [mA]

with rt in kOhm (so rt * c is volts), rs in kOhm, bv in volts and bc in
mA. Responsivity is wavelength-flat.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray


@dataclass(frozen=True)
class ReadoutParams:
    """Electrical constants of one readout chain.

    Parameters
    ----------
    resp : float
        Photodiode responsivity in mA/mW, > 0.
    rt : float
        Transimpedance gain in kOhm, > 0.
    rs : float
        Source resistance in kOhm, > 0.
    bv : float
        Voltage offset in V.
    bc : float
        Output bias current in mA.
    """

    resp: float
    rt: float
    rs: float
    bv: float = 0.0
    bc: float = 0.0

    def __post_init__(self):
        if self.resp <= 0 or self.rt <= 0 or self.rs <= 0:
            raise ValueError("resp, rt and rs must be positive")


@dataclass(frozen=True)
class WeightBankReadout:
    """Total optical power on the two ports of one weight bank (mW)."""

    thru_power: float
    drop_power: float

    def __post_init__(self):
        if self.thru_power < 0 or self.drop_power < 0:
            raise ValueError("optical powers must be nonnegative")


def balanced_current(readout: WeightBankReadout, resp: float) -> float:
    """Net balanced photocurrent resp * (thru - drop) in mA."""
    return resp * (readout.thru_power - readout.drop_power)


def amplifier_chain(c: ArrayLike, params: ReadoutParams) -> NDArray[np.float64]:
    """Drive current (rt * c + bv) / rs + bc in mA."""
    c = np.asarray(c, dtype=float)
    return (params.rt * c + params.bv) / params.rs + params.bc

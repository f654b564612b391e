"""2-3-1 feed-forward network with the photonic ring activation.

The hidden nonlinearity is the composition f(x) = h(g(x)): a drive
current detunes an axon ring quadratically, g(x) = thk (x^2 + 2 ib x) /
scale (nm), and the ring's thru shape h maps detune to transmission.
Training runs plain per-sample stochastic gradient descent with the
four squared-error update rules; trained virtual parameters convert to
physical ring weights, axon bias currents and an output bias, and the
full simulated 2-3-1 device sweep reproduces the classification
surface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import RegularGridInterpolator

from .devices import Cascade, FilterBank, OsaConfig, SimulatedPlant, Splitter
from .electronics import ReadoutParams
from .thermal import DriveUnit, ThermalGroup, convert_drive


class TrainingDivergence(RuntimeError):
    """Mean cost stayed above 10x its initial value for 50 epochs."""


@dataclass(frozen=True)
class Activation:
    """Lorentzian-of-quadratic axon transfer function.

    Parameters
    ----------
    gamma : float
        Lorentzian half-width in nm.
    atten : float
        Peak drop fraction a; f(0) = 1 - a.
    thk : float
        Thermal detune coefficient (nm per mA^2 / scale).
    ib : float
        Axon bias current in mA; total current x + ib must stay >= 0.
    scale : float
        Current^2-to-detune divisor bridging mA^2 to nm.
    shape : tuple of ndarray, optional
        (rel_nm, linear transmission) table replacing the analytic
        Lorentzian thru shape, e.g. a calibration-extracted curve.
    """

    gamma: float = 0.1
    atten: float = 0.98
    thk: float = 20.0
    ib: float = 6.0
    scale: float = 1000.0
    shape: tuple[NDArray[np.float64], NDArray[np.float64]] | None = None

    def __post_init__(self):
        if self.gamma <= 0 or self.scale <= 0:
            raise ValueError("gamma and scale must be positive")
        if not 0.0 <= self.atten <= 1.0:
            raise ValueError("atten must be in [0, 1]")
        if self.ib < 0:
            raise ValueError("ib must be nonnegative")

    def detune(self, x: ArrayLike) -> NDArray[np.float64]:
        """g(x) = thk (x^2 + 2 ib x) / scale, nm."""
        x = np.asarray(x, dtype=float)
        return self.thk * (x**2 + 2.0 * self.ib * x) / self.scale

    def thru(self, delta_nm: ArrayLike) -> NDArray[np.float64]:
        """h(delta): thru transmission at a detune from resonance."""
        d = np.asarray(delta_nm, dtype=float)
        if self.shape is not None:
            rel, lin = self.shape
            return np.interp(d, rel, lin)
        return 1.0 - self.atten * self.gamma**2 / (self.gamma**2 + d**2)

    def thru_slope(self, delta_nm: ArrayLike) -> NDArray[np.float64]:
        """dh/ddelta at a detune."""
        d = np.asarray(delta_nm, dtype=float)
        if self.shape is not None:
            rel, lin = self.shape
            return np.interp(d, rel, np.gradient(lin, rel))
        return 2.0 * self.atten * self.gamma**2 * d / \
            (self.gamma**2 + d**2) ** 2


def activation_f(act: Activation, x: ArrayLike) -> NDArray[np.float64]:
    """f(x) = h(g(x)): transmission in [0, 1] for a drive current (mA).

    Raises below x = -ib, where the total heater current would be
    negative.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < -act.ib):
        raise ValueError(f"drive below -ib = {-act.ib} mA")
    return act.thru(act.detune(x))


def activation_df(act: Activation, x: ArrayLike) -> NDArray[np.float64]:
    """df/dx = dh(g(x)) dg(x), per mA."""
    x = np.asarray(x, dtype=float)
    if np.any(x < -act.ib):
        raise ValueError(f"drive below -ib = {-act.ib} mA")
    dg = act.thk * (2.0 * x + 2.0 * act.ib) / act.scale
    return act.thru_slope(act.detune(x)) * dg


@dataclass
class VirtualParams:
    """Circuit-constant-absorbed network parameters.

    Parameters
    ----------
    w0 : ndarray
        3 x 2 hidden weights.
    b0 : ndarray
        Hidden biases, length 3.
    w1 : ndarray
        Output weights, length 3.
    b1 : float
        Output bias.
    """

    w0: NDArray[np.float64]
    b0: NDArray[np.float64]
    w1: NDArray[np.float64]
    b1: float

    def __post_init__(self):
        self.w0 = np.asarray(self.w0, dtype=float)
        self.b0 = np.asarray(self.b0, dtype=float)
        self.w1 = np.asarray(self.w1, dtype=float)
        self.b1 = float(self.b1)
        if self.w0.shape != (3, 2) or self.b0.shape != (3,) or \
                self.w1.shape != (3,):
            raise ValueError("parameters must fit the 2-3-1 topology")
        if not (np.all(np.isfinite(self.w0)) and np.all(np.isfinite(self.b0))
                and np.all(np.isfinite(self.w1)) and np.isfinite(self.b1)):
            raise ValueError("parameters must be finite")

    def to_json(self) -> str:
        return json.dumps({
            "w0": self.w0.tolist(), "b0": self.b0.tolist(),
            "w1": self.w1.tolist(), "b1": self.b1,
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VirtualParams":
        doc = json.loads(text)
        return cls(w0=np.array(doc["w0"]), b0=np.array(doc["b0"]),
                   w1=np.array(doc["w1"]), b1=doc["b1"])


# Trained parameters of the reference 2-3-1 XOR network (the single
# reported output logit of the two-logit softmax classifier)
TRAINED_XOR_PARAMS = VirtualParams(
    w0=np.array([[1.30109513, 0.90975827],
                 [-0.79916418, -0.85981083],
                 [0.9742766, -1.02000749]]),
    b0=np.array([1.0609535, 0.65707952, 0.01618425]),
    w1=np.array([-4.16287088, 11.24845219, -9.0137167]),
    b1=2.17837,
)

# As-deployed parameters: the output layer is scaled by 0.1 so the ring
# weights land inside [-1, 1] (|w31| would reach 8.3 otherwise; sign(y)
# is scale-invariant) and the output offset is the measured deployment
# value, which also recenters the single-logit decision threshold. The
# third hidden bias carries the deployment sign.
DEPLOYED_XOR_PARAMS = VirtualParams(
    w0=TRAINED_XOR_PARAMS.w0,
    b0=np.array([1.0609535, 0.65707952, -0.01618425]),
    w1=TRAINED_XOR_PARAMS.w1 * 0.1,
    b1=0.4359157047300002,
)


@dataclass(frozen=True)
class TrainingConfig:
    """SGD settings.

    Parameters
    ----------
    eta : float
        Learning rate, > 0.
    epochs : int
    seed : int
        Parameter-init and sample-order stream.
    cost : str
        'squared-error' (per-sample rules) or 'cross-entropy'
        (logistic error signal on one logit).
    target_error : float, optional
        Stop as soon as an epoch's classification error reaches this
        value; plain SGD can drift off a good solution afterwards.
    """

    eta: float = 0.01
    epochs: int = 1000
    seed: int = 0
    cost: str = "squared-error"
    target_error: float | None = None

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.cost not in ("squared-error", "cross-entropy"):
            raise ValueError(f"unknown cost {self.cost!r}")
        if self.target_error is not None and not 0 <= self.target_error < 1:
            raise ValueError("target_error must be in [0, 1)")


def generate_xor(seed: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """400-point XOR set: four 100-point clusters, uniform +-0.2 around
    (0.2, 0.2) and (0.6, 0.6) [label +1] and (0.2, 0.6), (0.6, 0.2)
    [label -1], clipped to [0, 0.8]."""
    rng = np.random.default_rng(seed)
    data = rng.uniform(-1.0, 1.0, (400, 2))
    data[0:100] = data[0:100] * 0.2 + 0.2
    data[100:200] = data[100:200] * 0.2 + 0.6
    data[200:300, 0] = data[200:300, 0] * 0.2 + 0.2
    data[200:300, 1] = data[200:300, 1] * 0.2 + 0.6
    data[300:400, 0] = data[300:400, 0] * 0.2 + 0.6
    data[300:400, 1] = data[300:400, 1] * 0.2 + 0.2
    data = np.clip(data, 0.0, 0.8)
    labels = np.ones(400)
    labels[200:] = -1.0
    return data, labels


def forward(vp: VirtualParams, act: Activation,
            x: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Hidden activations and scalar output for inputs of shape
    (..., 2); hidden_k = f(w0 x + b0)_k, y = w1 . hidden + b1."""
    x = np.asarray(x, dtype=float)
    pre = x @ vp.w0.T + vp.b0
    hidden = activation_f(act, pre)
    y = hidden @ vp.w1 + vp.b1
    return hidden, y


def classification_accuracy(vp: VirtualParams, act: Activation,
                            data: ArrayLike, labels: ArrayLike) -> float:
    """Fraction of points whose sign(y) matches the +-1 label."""
    _, y = forward(vp, act, data)
    return float(np.mean(np.sign(y) == np.asarray(labels, dtype=float)))


def update_directions(vp: VirtualParams, act: Activation, x: ArrayLike,
                      d: float, eta: float = 1.0, cost: str = "squared-error",
                      ) -> tuple[NDArray[np.float64], NDArray[np.float64],
                                 NDArray[np.float64], float]:
    """Per-sample SGD deltas (dW0, dB0, dW1, dB1) for one (x, d) pair.

    The error signal is (d - y) for squared error, or the logistic
    residual (t - sigmoid(y)) with t = (d + 1)/2 for cross entropy;
    both are the negative cost gradient through the output.
    """
    x = np.asarray(x, dtype=float)
    pre = vp.w0 @ x + vp.b0
    hidden = activation_f(act, pre)
    y = float(vp.w1 @ hidden + vp.b1)
    if cost == "squared-error":
        err = d - y
    elif cost == "cross-entropy":
        err = (d + 1.0) / 2.0 - 1.0 / (1.0 + np.exp(-y))
    else:
        raise ValueError(f"unknown cost {cost!r}")
    back = err * vp.w1 * activation_df(act, pre)
    return (eta * np.outer(back, x), eta * back,
            eta * err * hidden, eta * err)


def train(data: ArrayLike, labels: ArrayLike, cfg: TrainingConfig,
          act: Activation) -> tuple[VirtualParams, list[dict]]:
    """Per-sample SGD on the 2-3-1 network.

    The error signal is (d - y) for squared error or (t - sigmoid(y))
    with t = (d + 1)/2 for the cross-entropy mode; both feed the same
    four update rules. Returns the trained parameters and a per-epoch
    learning curve of mean cost and classification error.

    Raises
    ------
    TrainingDivergence
        If the mean cost exceeds 10x its initial value for 50
        consecutive epochs.
    """
    data = np.asarray(data, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or len(data) == 0:
        raise ValueError("data must be a nonempty (n, 2) array")
    rng = np.random.default_rng(cfg.seed)
    w0 = rng.standard_normal((3, 2))
    b0 = rng.standard_normal(3)
    w1 = rng.standard_normal(3)
    b1 = float(rng.standard_normal())

    def mean_cost(y: NDArray[np.float64]) -> float:
        if cfg.cost == "squared-error":
            return float(np.mean(0.5 * (labels - y) ** 2))
        t = (labels + 1.0) / 2.0
        return float(np.mean(np.logaddexp(0.0, y) - t * y))

    curve: list[dict] = []
    initial_cost = None
    over_budget = 0
    for epoch in range(cfg.epochs):
        for idx in rng.permutation(len(data)):
            vp = VirtualParams(w0=w0, b0=b0, w1=w1, b1=b1)
            try:
                dw0, db0, dw1, db1 = update_directions(
                    vp, act, data[idx], labels[idx], cfg.eta, cfg.cost)
            except ValueError as exc:
                # runaway weights drove a hidden current below -Ib
                raise TrainingDivergence(str(exc)) from exc
            w0, b0 = w0 + dw0, b0 + db0
            w1, b1 = w1 + dw1, b1 + db1

        vp = VirtualParams(w0=w0, b0=b0, w1=w1, b1=b1)
        _, y_all = forward(vp, act, data)
        cost = mean_cost(y_all)
        class_err = float(np.mean(np.sign(y_all) != labels))
        curve.append({"epoch": epoch, "mean_cost": cost,
                      "class_error": class_err})
        if cfg.target_error is not None and class_err <= cfg.target_error:
            return VirtualParams(w0=w0, b0=b0, w1=w1, b1=b1), curve
        if initial_cost is None:
            initial_cost = cost
        over_budget = over_budget + 1 if cost > 10.0 * initial_cost else 0
        if over_budget >= 50:
            raise TrainingDivergence(
                f"cost {cost:.3g} stayed above 10x initial for 50 epochs")
    return VirtualParams(w0=w0, b0=b0, w1=w1, b1=b1), curve


# ---------------------------------------------------------------------------
# Virtual-to-physical conversion and the full simulated network sweep
# ---------------------------------------------------------------------------

# Electrical constants of the reference 2-3-1 device
BRANCH1_READOUT = ReadoutParams(resp=0.9, rt=15000.0, rs=1.0, bv=4.0)
BRANCH2_READOUT = ReadoutParams(resp=0.9, rt=3000.0, rs=1.0, bv=0.0)
NETWORK_WL_CHANNELS = (1550.0, 1552.0, 1554.0)
NETWORK_PUMP_MW = 0.1
NETWORK_ATTENUATION = 0.01
NETWORK_HEATER_RESISTANCE = 250.0
NETWORK_RING_ATTEN = 0.99
NETWORK_RING_FWHM = 0.1

# branch-1 splitter (3 dendrite banks) on top of the 2-way input split
BRANCH1_SPLIT = 6.0
BRANCH2_SPLIT = 2.0


@dataclass
class PhysicalParams:
    """Realizable network parameters.

    Parameters
    ----------
    w23 : ndarray
        3 x 2 ring weights in [-1, 1] (branch-1 dendrite banks).
    w31 : ndarray
        Output ring weights in [-1, 1], length 3.
    axon_bias : ndarray
        Additive hidden-drive offsets in mA, length 3.
    out_bias : float
        Output-stage offset in V.
    """

    w23: NDArray[np.float64]
    w31: NDArray[np.float64]
    axon_bias: NDArray[np.float64]
    out_bias: float


def virtual_to_physical(vp: VirtualParams,
                        branch1: ReadoutParams = BRANCH1_READOUT,
                        branch2: ReadoutParams = BRANCH2_READOUT,
                        pump_mw: float = NETWORK_PUMP_MW,
                        attenuation: float = NETWORK_ATTENUATION,
                        out_bias: float | None = None) -> PhysicalParams:
    """Invert the circuit constants out of virtual parameters.

    w = virt * rs * split / (rt * resp * p) with p the per-channel
    power reaching a bank and split the power division factor (6 for
    branch 1, 2 for branch 2); the hidden bias shifts by the constant
    third channel's photocurrent and the amplifier offset.

    Raises if any physical weight leaves [-1, 1] (the thru-port
    transmission t = (w+1)/2 would be unrealizable).
    """
    p = pump_mw * attenuation
    w23 = vp.w0 * branch1.rs * BRANCH1_SPLIT / (branch1.rt * branch1.resp * p)
    w31 = vp.w1 * BRANCH2_SPLIT / (branch2.rt * branch2.resp * p)
    too_big = max(np.max(np.abs(w23)), np.max(np.abs(w31)))
    if too_big > 1.0:
        raise ValueError(f"physical weight {too_big:.3f} outside [-1, 1]")
    axon_bias = vp.b0 - (branch1.rt * branch1.resp * p / BRANCH1_SPLIT
                         + branch1.bv / branch1.rs)
    return PhysicalParams(w23=w23, w31=w31, axon_bias=axon_bias,
                          out_bias=vp.b1 if out_bias is None else out_bias)


def make_network_plant(noise_amplitude: float = 0.0) -> SimulatedPlant:
    """The 2-3-1 reference device: 14 heater channels, two branches.

    Branch 1: a 2-ring input axon bank feeding three 2-ring dendrite
    banks; branch 2: a 3-ring hidden axon bank feeding one 3-ring
    output dendrite bank. K is diagonal; biases rise 0.2 V per channel.
    """
    channels = list(range(14))
    # diagonal sensitivity realizing detune = thk (I^2 - Ib^2) / scale
    # through the mW-canonical thermal layer
    k_diag = 20.0 / NETWORK_HEATER_RESISTANCE * 1000.0 / 1000.0
    therm = ThermalGroup(channels=channels, K=k_diag * np.eye(14),
                         heater_resistance=NETWORK_HEATER_RESISTANCE)
    therm.set_heat_bias({c: c * 0.2 + 1.0 for c in channels}, DriveUnit.V)
    wl = list(NETWORK_WL_CHANNELS)

    axon1 = FilterBank("axon1", therm, [0, 1], mode="axon")
    axon1.set_bias_params(wl[:2], NETWORK_RING_ATTEN, NETWORK_RING_FWHM)
    axon2 = FilterBank("axon2", therm, [2, 3, 4], mode="axon")
    axon2.set_bias_params(wl, NETWORK_RING_ATTEN, NETWORK_RING_FWHM)
    dendrites1 = []
    for b in range(3):
        fb = FilterBank(f"dend{b}", therm, [5 + 2 * b, 6 + 2 * b],
                        mode="dendrite")
        fb.set_bias_params(wl[:2], NETWORK_RING_ATTEN, NETWORK_RING_FWHM)
        dendrites1.append(fb)
    dendrite_out = FilterBank("dendout", therm, [11, 12, 13], mode="dendrite")
    dendrite_out.set_bias_params(wl, NETWORK_RING_ATTEN, NETWORK_RING_FWHM)

    root = Splitter(Cascade(axon1, Splitter(*dendrites1)),
                    Cascade(axon2, dendrite_out))
    return SimulatedPlant(root=root, thermal=therm,
                          attenuation=NETWORK_ATTENUATION,
                          osa=OsaConfig(NETWORK_PUMP_MW, 0.01,
                                        noise_amplitude),
                          rng=np.random.default_rng(0))


def _weight_detune(t_target: float, atten: float, gamma: float) -> float:
    """Red detune (nm) giving thru transmission t on a Lorentzian ring."""
    if t_target < 1.0 - atten:
        raise ValueError(f"transmission {t_target:.3f} below the trough "
                         f"floor {1.0 - atten:.3f}")
    if t_target >= 1.0:
        return 50.0 * gamma
    return gamma * float(np.sqrt(atten / (1.0 - t_target) - 1.0))


def weight_drive(plant: SimulatedPlant, phys: PhysicalParams,
                 ) -> dict[int, float]:
    """Absolute heater powers (mW) parking every dendrite ring at the
    detune realizing its thru-port weight t = (w+1)/2."""
    therm = plant.thermal
    drive = dict(therm.heat_bias)
    targets: dict[int, float] = {}
    for b in range(3):
        for j in range(2):
            targets[5 + 2 * b + j] = (phys.w23[b, j] + 1.0) / 2.0
    for k in range(3):
        targets[11 + k] = (phys.w31[k] + 1.0) / 2.0
    for ch, t in targets.items():
        row = therm.channels.index(ch)
        detune = _weight_detune(t, NETWORK_RING_ATTEN,
                                NETWORK_RING_FWHM / 2.0)
        drive[ch] = therm.heat_bias[ch] + detune / therm.K[row, row]
    return drive


def _axon_power(therm: ThermalGroup, channel: int, delta_ma: float) -> float:
    """Absolute heater power (mW) at bias current + delta (mA)."""
    bias_ma = convert_drive(therm.heat_bias[channel], DriveUnit.MW,
                            DriveUnit.MA, therm.heater_resistance)
    return convert_drive(bias_ma + delta_ma, DriveUnit.MA, DriveUnit.MW,
                         therm.heater_resistance)


def network_forward(plant: SimulatedPlant, phys: PhysicalParams,
                    drive_v: ArrayLike,
                    branch1: ReadoutParams = BRANCH1_READOUT,
                    branch2: ReadoutParams = BRANCH2_READOUT,
                    weight_base: dict[int, float] | None = None,
                    ) -> tuple[NDArray[np.float64], NDArray[np.float64],
                               float]:
    """One pass of the simulated 2-3-1 chain.

    Parameters
    ----------
    drive_v : 2-vector
        Input knob in V above the input-axon biases (the instrument's
        native unit; 0.1 V is 0.4 mA through the 250-ohm heater).

    Returns (normalized inputs x0, hidden currents mA, output y).
    """
    therm = plant.thermal
    wl = np.asarray(NETWORK_WL_CHANNELS)
    drive = dict(weight_base or weight_drive(plant, phys))
    v_in = np.asarray(drive_v, dtype=float)
    ma_per_v = 1000.0 / therm.heater_resistance
    for i, ch in enumerate((0, 1)):
        drive[ch] = _axon_power(therm, ch, float(v_in[i]) * ma_per_v)
    plant.set_drive(drive)

    # normalized inputs: branch-1 axon transmission at the two input
    # channels (the 2-way input split is not part of the weight chain)
    share = plant.attenuation / 2.0
    x0 = np.clip(plant.transmission(("axon1", "thru"), wl[:2]) / share,
                 0.0, 1.0)

    # hidden currents: balanced thru-minus-drop summed over channels,
    # amplified, plus the converted axon bias offsets
    c_hidden = np.zeros(3)
    for b in range(3):
        thru = float(np.sum(plant.channel_powers((f"dend{b}", "thru"), wl)))
        drop = float(np.sum(plant.channel_powers((f"dend{b}", "drop"), wl)))
        c = branch1.resp * (thru - drop)
        c_hidden[b] = (branch1.rt * c + branch1.bv) / branch1.rs \
            + phys.axon_bias[b]

    # hidden currents drive the branch-2 axon heaters
    for i, ch in enumerate((2, 3, 4)):
        drive[ch] = _axon_power(therm, ch, float(c_hidden[i]))
    plant.set_drive(drive)

    thru = float(np.sum(plant.channel_powers(("dendout", "thru"), wl)))
    drop = float(np.sum(plant.channel_powers(("dendout", "drop"), wl)))
    y = branch2.rt * branch2.resp * (thru - drop) + phys.out_bias
    return x0, c_hidden, float(y)


def sweep_network(plant: SimulatedPlant, phys: PhysicalParams,
                  grid_n: int = 10,
                  branch1: ReadoutParams = BRANCH1_READOUT,
                  branch2: ReadoutParams = BRANCH2_READOUT,
                  ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Classification surface of the simulated network.

    Sweeps both input knobs over [0, 0.15] V on a grid_n x grid_n grid,
    reads the continuous output, and interpolates onto the uniform
    normalized-input grid arange(0, 0.8, 0.025) using the measured mean
    normalized inputs as coordinates.

    Returns (grid, surface) with surface[i, j] the output at
    (x = grid[i], y = grid[j]).
    """
    c_list = np.linspace(0.0, 0.15, grid_n)
    z = np.zeros((grid_n, grid_n))
    x_mean = np.zeros(grid_n)
    y_mean = np.zeros(grid_n)
    base = weight_drive(plant, phys)
    for i, c1 in enumerate(c_list):
        for j, c2 in enumerate(c_list):
            x0, _, out = network_forward(plant, phys, [c1, c2],
                                         branch1, branch2, weight_base=base)
            x_mean[i] += x0[0]
            y_mean[j] += x0[1]
            z[i, j] = out
    x_mean /= grid_n
    y_mean /= grid_n
    interp = RegularGridInterpolator((x_mean, y_mean), z, method="cubic",
                                     bounds_error=False, fill_value=None)
    grid = np.arange(0.0, 0.8, 0.025)
    gx, gy = np.meshgrid(grid, grid, indexing="ij")
    surface = interp(np.stack([gx.ravel(), gy.ravel()], axis=-1))
    return grid, surface.reshape(gx.shape)


def learning_curve_csv(curve: list[dict]) -> str:
    """Three-column CSV text (epoch, mean_cost, class_error)."""
    lines = ["epoch,mean_cost,class_error"]
    lines += [f"{c['epoch']},{c['mean_cost']:.9f},{c['class_error']:.6f}"
              for c in curve]
    return "\n".join(lines) + "\n"


def surface_csv(grid: NDArray[np.float64],
                surface: NDArray[np.float64]) -> str:
    """Grid CSV with a header row of x coordinates; row i holds the
    outputs at y = grid[i] across all x."""
    header = "y\\x," + ",".join(f"{g:.6f}" for g in grid)
    lines = [header]
    for j, gy in enumerate(grid):
        row = ",".join(f"{surface[i, j]:.9f}" for i in range(len(grid)))
        lines.append(f"{gy:.6f},{row}")
    return "\n".join(lines) + "\n"

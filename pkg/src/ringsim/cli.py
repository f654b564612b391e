"""Command-line surface: the five canonical runs and their artifacts.

Every command loads an ExperimentConfig (TOML or JSON, defaults when no
--config is given), derives all randomness from one root seed through
named substreams, writes its artifacts plus a manifest of content
hashes, and exits with:

- 0: success
- 2: config error (nothing is written)
- 3: a validation gate failed (artifacts and manifest are written)
- 4: non-convergence (artifacts produced so far and manifest written)
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .calibration import (
    AscriptionError,
    BASIC_WINDOW,
    CASCADE_WINDOW,
    ConvergenceError,
    _thru_tap,
    basic_validation_report,
    calibrate_basic,
    calibrate_cascaded,
    cascaded_validation_report,
    make_basic_hidden_plant,
    make_cascaded_hidden_plant,
)
from .config import ConfigError, ExperimentConfig, load_config
from .mdm import coupling_report, coupling_report_csv, read_sweep_dir
from .training import (
    Activation,
    DEPLOYED_XOR_PARAMS,
    TrainingDivergence,
    VirtualParams,
    classification_accuracy,
    forward,
    generate_xor,
    learning_curve_csv,
    make_network_plant,
    network_forward,
    surface_csv,
    sweep_network,
    train,
    virtual_to_physical,
)

MANIFEST_SCHEMA_VERSION = 1


class GateFailure(RuntimeError):
    """A validation gate did not pass; artifacts are still emitted."""


class ArtifactSink:
    """Collects artifacts under one directory and hashes their bytes."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.records: dict[str, str] = {}

    def write(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        path = self.out_dir / name
        path.write_bytes(data)
        self.records[name] = hashlib.sha256(data).hexdigest()
        return path

    def write_json(self, name: str, doc: dict) -> Path:
        return self.write(name, json.dumps(doc, indent=2, sort_keys=True)
                          + "\n")

    def manifest(self, command: str, seed: int, config_path: str | None,
                 fmt: str, exit_code: int) -> None:
        self.write_json("manifest.json", {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "command": command,
            "seed": seed,
            "config": config_path or "defaults",
            "format": fmt,
            "exit_code": exit_code,
            "artifacts": {k: v for k, v in sorted(self.records.items())},
        })


# ---------------------------------------------------------------------------
# Static SVG rendering (line charts and heatmaps, no interactivity)
# ---------------------------------------------------------------------------

_SVG_W, _SVG_H, _SVG_PAD = 640, 400, 50
_SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _scale(v: np.ndarray, lo: float, hi: float, out_lo: float,
           out_hi: float) -> np.ndarray:
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(v, float) - lo) / span * (out_hi - out_lo)


def svg_line_chart(x: np.ndarray, series: dict[str, np.ndarray],
                   title: str, x_label: str, y_label: str) -> str:
    """Fixed-size line chart with one polyline per named series."""
    x = np.asarray(x, float)
    ys = np.concatenate([np.asarray(v, float) for v in series.values()])
    x_lo, x_hi = float(np.min(x)), float(np.max(x))
    y_lo, y_hi = float(np.min(ys)), float(np.max(ys))
    px = _scale(x, x_lo, x_hi, _SVG_PAD, _SVG_W - _SVG_PAD)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" '
        f'height="{_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W // 2}" y="20" text-anchor="middle" '
        f'font-size="14">{title}</text>',
        f'<text x="{_SVG_W // 2}" y="{_SVG_H - 10}" text-anchor="middle" '
        f'font-size="12">{x_label}</text>',
        f'<text x="15" y="{_SVG_H // 2}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 15 {_SVG_H // 2})">'
        f'{y_label}</text>',
        f'<rect x="{_SVG_PAD}" y="{_SVG_PAD}" '
        f'width="{_SVG_W - 2 * _SVG_PAD}" height="{_SVG_H - 2 * _SVG_PAD}" '
        f'fill="none" stroke="black"/>',
    ]
    for k, (name, y) in enumerate(series.items()):
        py = _scale(np.asarray(y, float), y_lo, y_hi,
                    _SVG_H - _SVG_PAD, _SVG_PAD)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        color = _SERIES_COLORS[k % len(_SERIES_COLORS)]
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_SVG_W - _SVG_PAD + 5}" '
                     f'y="{_SVG_PAD + 15 * (k + 1)}" font-size="11" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_heatmap(grid: np.ndarray, surface: np.ndarray, title: str) -> str:
    """Fixed-size heatmap; blue for negative cells, red for positive,
    intensity by magnitude."""
    grid = np.asarray(grid, float)
    surface = np.asarray(surface, float)
    n = len(grid)
    side = _SVG_H - 2 * _SVG_PAD
    cell = side / n
    vmax = float(np.max(np.abs(surface))) or 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" '
        f'height="{_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W // 2}" y="20" text-anchor="middle" '
        f'font-size="14">{title}</text>',
    ]
    for i in range(n):
        for j in range(n):
            v = surface[i, j] / vmax
            shade = int(round(255 * (1.0 - min(abs(v), 1.0))))
            color = (f"rgb(255,{shade},{shade})" if v >= 0
                     else f"rgb({shade},{shade},255)")
            # row j (y) grows upward from the bottom edge
            x0 = _SVG_PAD + i * cell
            y0 = _SVG_H - _SVG_PAD - (j + 1) * cell
            parts.append(f'<rect x="{x0:.2f}" y="{y0:.2f}" '
                         f'width="{cell:.2f}" height="{cell:.2f}" '
                         f'fill="{color}"/>')
    parts.append(f'<rect x="{_SVG_PAD}" y="{_SVG_PAD}" width="{side:.2f}" '
                 f'height="{side:.2f}" fill="none" stroke="black"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Command plumbing
# ---------------------------------------------------------------------------

def common_options(fn):
    fn = click.option("--config", "config_path", default=None,
                      type=click.Path(), help="TOML or JSON config file.")(fn)
    fn = click.option("--out", "out_dir", default="artifacts",
                      type=click.Path(), show_default=True,
                      help="Artifact directory.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      envvar="RINGSIM_SEED",
                      help="Root seed override (env RINGSIM_SEED).")(fn)
    fn = click.option("--format", "fmt", default="csv",
                      type=click.Choice(["csv", "svg"]), show_default=True,
                      help="svg additionally renders static charts.")(fn)
    fn = click.option("--quiet", is_flag=True, help="Suppress progress "
                      "output.")(fn)
    return fn


def _execute(command: str, config_path: str | None, out_dir: str,
             seed: int | None, fmt: str, quiet: bool, body) -> None:
    def echo(msg: str) -> None:
        if not quiet:
            click.echo(msg)

    try:
        cfg = load_config(config_path)
        if seed is not None:
            if seed < 0:
                raise ConfigError("seed must be a nonnegative integer")
            cfg = replace(cfg, seed=seed)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)

    sink = ArtifactSink(Path(out_dir))
    code = 0
    try:
        body(cfg, sink, fmt, echo)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except GateFailure as exc:
        click.echo(f"validation gate failed: {exc}", err=True)
        code = 3
    except (AscriptionError, ConvergenceError, TrainingDivergence) as exc:
        click.echo(f"did not converge: {exc}", err=True)
        code = 4
    sink.manifest(command, cfg.seed, config_path, fmt, code)
    sys.exit(code)


@click.group()
def main():
    """Microring photonic neural network simulator."""


# ---------------------------------------------------------------------------
# calibrate-basic / calibrate-cascaded
# ---------------------------------------------------------------------------

def _emit_calibration(plant, model, telemetry, report, window, sink, fmt,
                      echo) -> None:
    sink.write("calibration_model.json", model.to_json())
    sink.write_json("validation_report.json", {**report, **telemetry})
    plant.set_drive(model.heat_bias)
    spectrum = plant.spectrum(window, _thru_tap(plant))
    sink.write("bias_spectrum.csv", spectrum.to_csv())
    if fmt == "svg":
        sink.write("bias_spectrum.svg", svg_line_chart(
            spectrum.wavelengths, {"power": spectrum.power},
            "Spectrum at calibrated biases", "wavelength (nm)",
            "power (dBm)"))
    for gate, value in report.items():
        echo(f"{gate}: {value}")
    if not report["passed"]:
        raise GateFailure("see validation_report.json")


@main.command("calibrate-basic")
@common_options
def calibrate_basic_cmd(config_path, out_dir, seed, fmt, quiet):
    """Calibrate a hidden four-ring dendrite bank and validate it."""

    def body(cfg: ExperimentConfig, sink, fmt, echo):
        plant = make_basic_hidden_plant(
            cfg.stream_seed("device-gen"),
            noise_amplitude=cfg.osa.noise_amplitude)
        plant.osa = cfg.osa
        plant.rng = np.random.default_rng(cfg.stream_seed("noise"))
        model, telemetry = calibrate_basic(plant, cfg=cfg.controller)
        errors = telemetry.pop("tracking_errors")
        sink.write("tracking.csv", "iteration,error\n" + "".join(
            f"{i},{e:.9f}\n" for i, e in enumerate(errors)))
        if fmt == "svg":
            sink.write("tracking.svg", svg_line_chart(
                np.arange(len(errors)), {"error": np.asarray(errors)},
                "Bias tracking", "iteration", "wavelength error (nm)"))
        telemetry.pop("k_diag_ascription")
        report = basic_validation_report(model, plant)
        _emit_calibration(plant, model, telemetry, report, BASIC_WINDOW,
                          sink, fmt, echo)

    _execute("calibrate-basic", config_path, out_dir, seed, fmt, quiet, body)


@main.command("calibrate-cascaded")
@common_options
def calibrate_cascaded_cmd(config_path, out_dir, seed, fmt, quiet):
    """Calibrate a hidden cascaded axon + dendrite device."""

    def body(cfg: ExperimentConfig, sink, fmt, echo):
        plant = make_cascaded_hidden_plant(
            cfg.stream_seed("device-gen"),
            noise_amplitude=cfg.osa.noise_amplitude)
        plant.osa = cfg.osa
        plant.rng = np.random.default_rng(cfg.stream_seed("noise"))
        model, telemetry = calibrate_cascaded(plant, cfg=cfg.controller)
        telemetry.pop("k_diag_ascription")
        report = cascaded_validation_report(model, plant)
        _emit_calibration(plant, model, telemetry, report, CASCADE_WINDOW,
                          sink, fmt, echo)

    _execute("calibrate-cascaded", config_path, out_dir, seed, fmt, quiet,
             body)


# ---------------------------------------------------------------------------
# train-xor
# ---------------------------------------------------------------------------

@main.command("train-xor")
@common_options
def train_xor_cmd(config_path, out_dir, seed, fmt, quiet):
    """Train the 2-3-1 virtual network on the XOR set with SGD."""

    def body(cfg: ExperimentConfig, sink, fmt, echo):
        act = Activation()
        data, labels = generate_xor(cfg.stream_seed("data-gen"))
        tcfg = replace(cfg.training, seed=cfg.stream_seed("training-init"))
        vp, curve = train(data, labels, tcfg, act)
        acc = classification_accuracy(vp, act, data, labels)
        sink.write("trained_params.json", vp.to_json())
        sink.write("learning_curve.csv", learning_curve_csv(curve))
        grid = np.arange(0.0, 0.8, 0.025)
        gx, gy = np.meshgrid(grid, grid, indexing="ij")
        _, surface = forward(vp, act, np.stack([gx, gy], axis=-1))
        sink.write("virtual_surface.csv", surface_csv(grid, surface))
        if fmt == "svg":
            epochs = np.array([c["epoch"] for c in curve])
            sink.write("learning_curve.svg", svg_line_chart(
                epochs,
                {"mean_cost": np.array([c["mean_cost"] for c in curve]),
                 "class_error": np.array([c["class_error"] for c in curve])},
                "XOR training", "epoch", ""))
            sink.write("virtual_surface.svg", svg_heatmap(
                grid, surface, "Virtual classification surface"))
        echo(f"epochs run: {len(curve)}")
        echo(f"final accuracy: {acc:.4f}")

    _execute("train-xor", config_path, out_dir, seed, fmt, quiet, body)


# ---------------------------------------------------------------------------
# sweep-231
# ---------------------------------------------------------------------------

@main.command("sweep-231")
@common_options
def sweep_231_cmd(config_path, out_dir, seed, fmt, quiet):
    """Sweep the simulated physical 2-3-1 network over its input knobs."""

    def body(cfg: ExperimentConfig, sink, fmt, echo):
        if cfg.sweep.params_file:
            path = Path(cfg.sweep.params_file)
            if not path.is_file():
                raise ConfigError(f"params file not found: {path}")
            try:
                vp = VirtualParams.from_json(path.read_text())
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"bad params file {path}: {exc}") from exc
        else:
            vp = DEPLOYED_XOR_PARAMS
        try:
            phys = virtual_to_physical(vp)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        plant = make_network_plant(noise_amplitude=cfg.osa.noise_amplitude)
        plant.rng = np.random.default_rng(cfg.stream_seed("noise"))
        grid, surface = sweep_network(plant, phys, grid_n=cfg.sweep.grid_n)
        sink.write("surface.csv", surface_csv(grid, surface))
        if fmt == "svg":
            sink.write("surface.svg", svg_heatmap(
                grid, surface, "Simulated classification surface"))
        x0, c_hidden, y = network_forward(plant, phys, [0.1, 0.1])
        sink.write_json("network_report.json", {
            "x0": [round(float(v), 9) for v in x0],
            "hidden_ma": [round(float(v), 9) for v in c_hidden],
            "y": round(float(y), 9),
        })
        echo(f"normalized inputs at 0.1 V: {x0[0]:.4f}, {x0[1]:.4f}")
        echo(f"hidden currents (mA): "
             + ", ".join(f"{c:.4f}" for c in c_hidden))
        echo(f"output at 0.1 V: {y:.4f}")

    _execute("sweep-231", config_path, out_dir, seed, fmt, quiet, body)


# ---------------------------------------------------------------------------
# mdm-report
# ---------------------------------------------------------------------------

@main.command("mdm-report")
@common_options
def mdm_report_cmd(config_path, out_dir, seed, fmt, quiet):
    """Rank interferometer geometries by coupling from a sweep directory."""

    def body(cfg: ExperimentConfig, sink, fmt, echo):
        if not cfg.mdm.sweep_dir:
            raise ConfigError("set [mdm] sweep_dir to the spectra directory")
        try:
            sweep = read_sweep_dir(cfg.mdm.sweep_dir)
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from exc
        rows = coupling_report(sweep)
        sink.write("coupling_report.csv", coupling_report_csv(rows))
        good = [r for r in rows if not r.get("error")]
        if not good:
            raise ConvergenceError("no spectrum passed the sinusoid fit")
        best = good[0]
        echo(f"best geometry: width {best['width']}, length "
             f"{best['length']} (alpha {best['alpha_lo']:.3f} or "
             f"{best['alpha_hi']:.3f}, ER {best['er_db']:.2f} dB)")

    _execute("mdm-report", config_path, out_dir, seed, fmt, quiet, body)


if __name__ == "__main__":
    main()

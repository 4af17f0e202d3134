"""Command-line entry point: ``slipgait run | stability | fit-gait``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis.gait_fit import GaitTargets, fit_nominal_gait, nominal_speed
from .analysis.poincare import (
    PoincareContext,
    find_fixed_point,
    linearize_poincare,
    nominal_section_point,
)
from .analysis.summary import summarize
from .control import Controller, Gains
from .dynamics import BipedModel, ModelParams
from .errors import InfeasibleTargets, NoConvergence, ParseError, SlipGaitError, ValidationError
from .gait import GaitSpec
from .hybrid import IMPACT_MODES, RunLog, on_gait_state, run_steps
from .slip import SlipLaw, SlipSchedule

logger = logging.getLogger("slipgait")

EXIT_OK = 0
EXIT_IO = 1
EXIT_GAIT_FAILURE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_UNSTABLE = 4

RUN_MODES = ("controlled", "open-loop", "both")
_CONTROLLER_MODE = {"controlled": "combined", "open-loop": "open_loop"}
_STEP_FILES = {"controlled": "steps_controlled.csv", "open-loop": "steps_openloop.csv"}
_DENSE_FILES = {"controlled": "dense_controlled.csv", "open-loop": "dense_openloop.csv"}
_KEYS = {"model", "gait", "slip", "gains", "mode", "n_steps", "outputs", "dense_logging",
         "seed", "impact_mode"}


@dataclass
class ExperimentConfig:
    model: ModelParams = field(default_factory=ModelParams)
    gait: GaitSpec | None = None
    slip: SlipSchedule = field(default_factory=SlipSchedule)
    gains: Gains = field(default_factory=Gains)
    mode: str = "both"
    n_steps: int = 50
    outputs: Path = Path("out")
    dense_logging: bool = False
    seed: int = 0
    impact_mode: str = "plastic"

    def to_dict(self):
        return {
            "model": self.model.to_dict(),
            "gait": self.gait.to_dict(),
            "slip": self.slip.to_dict(),
            "gains": self.gains.to_dict(),
            "mode": self.mode,
            "n_steps": self.n_steps,
            "outputs": str(self.outputs),
            "dense_logging": self.dense_logging,
            "seed": self.seed,
            "impact_mode": self.impact_mode,
        }


def _read_json(path: Path, what="config"):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {what} {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _resolve(entry, base: Path, what):
    """Inline dict, or a path (relative to the config file) to a JSON document."""
    if isinstance(entry, dict):
        return entry
    if isinstance(entry, str):
        return _read_json((base / entry).resolve(), what)
    raise ValidationError(f"{what} must be an object or a file path")


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment configuration.

    Raises OSError when a file is missing, ParseError on malformed JSON and
    ValidationError when any embedded object violates its invariants.
    """
    path = Path(path)
    raw = _read_json(path)
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    unknown = set(raw) - _KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    base = path.parent
    try:
        model_raw = raw.get("model", "default")
        model = ModelParams() if model_raw == "default" else ModelParams.from_dict(
            _resolve(model_raw, base, "model"))
        if "gait" not in raw:
            raise ValidationError("gait is required")
        gait = GaitSpec.from_dict(_resolve(raw["gait"], base, "gait"))
        slip = SlipSchedule.from_dict(_resolve(raw.get("slip", {}), base, "slip"))
        gains = Gains.from_dict(_resolve(raw.get("gains", {}), base, "gains"))
    except (ValidationError, ParseError):
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ValidationError(str(exc)) from exc
    mode = raw.get("mode", "both")
    if mode not in RUN_MODES:
        raise ValidationError(f"mode must be one of {RUN_MODES}")
    n_steps = raw.get("n_steps", 50)
    if not isinstance(n_steps, int) or isinstance(n_steps, bool) or n_steps < 0:
        raise ValidationError("n_steps must be a non-negative integer")
    impact_mode = raw.get("impact_mode", "plastic")
    if impact_mode not in IMPACT_MODES:
        raise ValidationError(f"impact_mode must be one of {IMPACT_MODES}")
    dense = raw.get("dense_logging", False)
    if not isinstance(dense, bool):
        raise ValidationError("dense_logging must be true or false")
    outputs = Path(raw.get("outputs", "out"))
    if not outputs.is_absolute():
        outputs = base / outputs
    return ExperimentConfig(model=model, gait=gait, slip=slip, gains=gains, mode=mode,
                            n_steps=n_steps, outputs=outputs, dense_logging=dense,
                            seed=int(raw.get("seed", 0)), impact_mode=impact_mode)


def simulate(cfg: ExperimentConfig, mode: str, dense=True) -> RunLog:
    model = BipedModel(cfg.model)
    controller = Controller(model, cfg.gait, cfg.gains, _CONTROLLER_MODE[mode])
    x0 = on_gait_state(cfg.gait, cfg.slip)
    return run_steps(x0, controller, cfg.slip, cfg.n_steps, dense=dense,
                     impact_mode=cfg.impact_mode, config_echo=cfg.to_dict())


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def figure_variableslip(cfg: ExperimentConfig, logs: dict):
    """Per step: slip level, pre-impact forward speed per mode, controlled mean |eta_s|."""
    def col(mode, attr):
        log = logs.get(mode)
        vals = {}
        if log is not None:
            vals = {s.step_index: getattr(s, attr) for s in log.steps if s.success}
        return vals

    v_o, v_c = col("open-loop", "pre_impact_vx"), col("controlled", "pre_impact_vx")
    e_c = col("controlled", "mean_abs_eta_s")
    rows = []
    for k in range(1, cfg.n_steps + 1):
        rows.append([str(k), _fmt(cfg.slip.level(k)), _fmt(v_o.get(k)), _fmt(v_c.get(k)),
                     _fmt(e_c.get(k))])
    return _csv_text(("step", "slip_level", "speed_open_loop", "speed_controlled",
                      "abs_eta_s_controlled"), rows)


def figure_hippath(logs: dict):
    rows = []
    for mode in ("open-loop", "controlled"):
        log = logs.get(mode)
        if log is None or log.dense is None:
            continue
        d = log.dense.arrays()
        for t, (x, y) in zip(d["t"], d["hip_world"]):
            rows.append([mode, _fmt(t), _fmt(x), _fmt(y)])
    return _csv_text(("mode", "t", "hip_x", "hip_y"), rows)


def _write(path: Path, text):
    path.write_text(text, encoding="utf-8", newline="")


def cmd_run(cfg: ExperimentConfig):
    modes = ["open-loop", "controlled"] if cfg.mode == "both" else [cfg.mode]
    logs = {m: simulate(cfg, m) for m in modes}
    out = cfg.outputs
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config_resolved.json", json.dumps(cfg.to_dict(), indent=2) + "\n")
    for m, log in logs.items():
        log.write_steps_csv(out / _STEP_FILES[m])
        if cfg.dense_logging:
            log.write_dense_csv(out / _DENSE_FILES[m])
    summary = summarize(logs.get("controlled"), logs.get("open-loop"))
    _write(out / "summary.csv", summary.to_csv())
    _write(out / "summary.txt", summary.to_text())
    _write(out / "fig_variableslip.csv", figure_variableslip(cfg, logs))
    _write(out / "fig_hippath.csv", figure_hippath(logs))
    print(summary.to_text(), end="")
    for m, log in logs.items():
        if not log.completed:
            print(f"{m}: stopped after {log.n_success} steps ({log.failure})")
    # the open-loop case is a baseline expected to fail; only a failure of the
    # run the user asked to walk on its own counts as a gait failure
    primary = "controlled" if "controlled" in logs else modes[0]
    return EXIT_OK if logs[primary].completed else EXIT_GAIT_FAILURE


def cmd_stability(cfg: ExperimentConfig, chart="full"):
    model = BipedModel(cfg.model)
    controller = Controller(model, cfg.gait, cfg.gains, "combined")
    law = SlipLaw(cfg.slip.A, cfg.slip.v_nom)
    ctx = PoincareContext(controller, law, chart=chart, impact_mode=cfg.impact_mode)
    out = cfg.outputs
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = find_fixed_point(nominal_section_point(ctx), ctx)
        res = linearize_poincare(res.chart_point, ctx, result=res)
    except NoConvergence as exc:
        cause = f" ({type(exc.cause).__name__}: {exc.cause})" if exc.cause else ""
        print(f"no fixed point: {exc}{cause}", file=sys.stderr)
        _write(out / "poincare.json", json.dumps(
            {"residual": _finite(exc.residual), "eigenvalues": [], "spectral_radius": None,
             "stable": False}, indent=2) + "\n")
        return EXIT_NO_CONVERGENCE
    res.to_json(out / "poincare.json")
    print(f"fixed point residual {res.residual_norm:.3e}, spectral radius "
          f"{res.spectral_radius:.6g}, stable={res.stable}")
    return EXIT_OK if res.stable else EXIT_UNSTABLE


def _finite(v):
    return float(v) if v is not None and np.isfinite(v) else None


def cmd_fit_gait(args):
    targets = GaitTargets(step_length=args.step_length, duration=args.duration,
                          clearance=args.clearance, hip_height=args.hip_height)
    spec = fit_nominal_gait(targets, degree=args.degree)
    spec.to_json(args.out)
    v = nominal_speed(spec, SlipSchedule().A, args.duration)
    print(f"wrote {args.out}; slip reference for the target duration: v_nom = {v:.6g}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="slipgait", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate the walking experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--mode", choices=RUN_MODES)
    r.add_argument("--steps", type=int)
    r.add_argument("--dense", action="store_true")
    r.add_argument("--out")

    s = sub.add_parser("stability", help="fixed point and return-map spectrum at zero slip")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--chart", choices=("full", "reduced"), default="full")

    f = sub.add_parser("fit-gait", help="fit the nominal gait polynomials")
    f.add_argument("--step-length", type=float, default=0.35)
    f.add_argument("--duration", type=float, default=0.5)
    f.add_argument("--clearance", type=float, default=0.05)
    f.add_argument("--hip-height", type=float, default=0.77)
    f.add_argument("--degree", type=int, default=5)
    f.add_argument("--out", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit-gait":
            return cmd_fit_gait(args)
        cfg = load_config(args.config)
        if args.out:
            cfg.outputs = Path(args.out)
        if args.command == "run":
            if args.mode:
                cfg.mode = args.mode
            if args.steps is not None:
                if args.steps < 0:
                    raise ValidationError("--steps must be non-negative")
                cfg.n_steps = args.steps
            cfg.dense_logging = cfg.dense_logging or args.dense
            return cmd_run(cfg)
        return cmd_stability(cfg, chart=args.chart)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParseError, ValidationError, InfeasibleTargets) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SlipGaitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_GAIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: ``ffqcrl [--threads N] [--verify] <command> ...``.

Physics parameters live in a TOML config file; flags choose the command,
paths, seeds and the evaluator. Exit codes: 0 ok, 2 config error, 3 missing
artifact, 4 numerical failure (including a failed ``--verify`` comparison).
"""
from __future__ import annotations

import argparse
import dataclasses
import filecmp
import hashlib
import json
import logging
import math
import sys
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np
from threadpoolctl import threadpool_limits

from .filterfn import FrequencyGrid, filter_function
from .montecarlo import run_sweep, slopes_to_json, strength_levels
from .noise import default_psd, omega0
from .optimize import ControlProblem, CostWeights, NumericalFailure, initialize, sine_pulse
from .pulse import PulseParams, evaluate_pulse
from .quantum import SystemModel, TimeGrid, propagate_control
from .ripv import FamilyRecord, RipvAborted, RipvConfig, generate_family
from .surrogate import SurrogateDataset, SurrogateEvaluator, TrainConfig, VqcModel, ablation, sample_dataset, train

logger = logging.getLogger("ffqcrl")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class MissingArtifact(FileNotFoundError):
    pass


# --------------------------------------------------------------------- config

def _check(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class SystemBlock:
    duration: float = 50.0
    n_steps: int = 1000
    n_harmonics: int = 3
    theta0: float = math.pi

    def validate(self):
        _check(self.duration > 0, "system.duration must be positive")
        _check(self.n_steps >= 2, "system.n_steps must be >= 2")
        _check(0 <= self.n_harmonics <= 16, "system.n_harmonics must be in [0, 16]")


@dataclass(frozen=True)
class PsdBlock:
    kind: str = "default"

    def validate(self):
        _check(self.kind == "default", "psd.kind must be 'default'")


@dataclass(frozen=True)
class WeightsBlock:
    fidelity: float = 1.0
    robust: float = 0.03
    amp: float = 1e-4
    smooth: float = 1e-4

    def validate(self):
        for f in fields(self):
            _check(getattr(self, f.name) >= 0, f"weights.{f.name} must be nonnegative")


@dataclass(frozen=True)
class OptimizerBlock:
    lr: float = 1e-2
    max_iter: int = 2000

    def validate(self):
        _check(self.lr > 0, "optimizer.lr must be positive")
        _check(self.max_iter >= 1, "optimizer.max_iter must be >= 1")


@dataclass(frozen=True)
class RipvBlock:
    dtheta: float = 0.002
    theta_end: float = 2 * math.pi
    recorrection_period: int = 0

    def validate(self):
        _check(0 < self.dtheta <= 0.1, "ripv.dtheta must be in (0, 0.1]")
        _check(self.recorrection_period >= 0, "ripv.recorrection_period must be >= 0")


@dataclass(frozen=True)
class McBlock:
    levels: tuple = tuple(float(x) for x in strength_levels())
    samples: int = 500
    seed: int = 0
    angles: int = 11

    def validate(self):
        _check(len(self.levels) >= 1 and all(x >= 0 for x in self.levels), "mc.levels must be nonnegative")
        _check(self.samples >= 1, "mc.samples must be >= 1")
        _check(self.angles >= 1, "mc.angles must be >= 1")


@dataclass(frozen=True)
class SurrogateBlock:
    dataset_cap: int = 512
    n_train: int = 409
    n_val: int = 51
    n_test: int = 52
    lr: float = 0.01
    batch_size: int = 8
    grad_clip: float = 1.0
    patience: int = 4
    max_epochs: int = 200
    hidden: int = 0
    sigma_frac: float = 0.1
    seed: int = 0
    theta_target: float = 1.5 * math.pi
    n_random: int = 8

    def validate(self):
        _check(self.n_train + self.n_val + self.n_test == self.dataset_cap,
               "surrogate split sizes must sum to dataset_cap")
        _check(self.lr > 0 and self.batch_size >= 1 and self.grad_clip > 0, "surrogate optimizer settings invalid")
        _check(self.sigma_frac > 0, "surrogate.sigma_frac must be positive")
        _check(self.n_random >= 1, "surrogate.n_random must be >= 1")

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.dataset_cap, self.n_train, self.n_val, self.n_test, self.lr, (0.9, 0.999),
                           self.batch_size, self.grad_clip, self.patience, self.max_epochs, self.hidden)


BLOCKS = {
    "system": SystemBlock,
    "psd": PsdBlock,
    "weights": WeightsBlock,
    "optimizer": OptimizerBlock,
    "ripv": RipvBlock,
    "mc": McBlock,
    "surrogate": SurrogateBlock,
}


@dataclass(frozen=True)
class RunConfig:
    system: SystemBlock = field(default_factory=SystemBlock)
    psd: PsdBlock = field(default_factory=PsdBlock)
    weights: WeightsBlock = field(default_factory=WeightsBlock)
    optimizer: OptimizerBlock = field(default_factory=OptimizerBlock)
    ripv: RipvBlock = field(default_factory=RipvBlock)
    mc: McBlock = field(default_factory=McBlock)
    surrogate: SurrogateBlock = field(default_factory=SurrogateBlock)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - set(BLOCKS)
        _check(not unknown, f"unknown config section(s): {sorted(unknown)}")
        blocks = {}
        for name, block_cls in BLOCKS.items():
            raw = data.get(name, {})
            _check(isinstance(raw, dict), f"[{name}] must be a table")
            known = {f.name: f for f in fields(block_cls)}
            bad = set(raw) - set(known)
            _check(not bad, f"unknown key(s) in [{name}]: {sorted(bad)}")
            values = {}
            for key, val in raw.items():
                default = getattr(block_cls(), key)
                values[key] = _coerce(f"{name}.{key}", val, default)
            block = block_cls(**values)
            block.validate()
            blocks[name] = block
        return cls(**blocks)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(data)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self, seed: int | None = None) -> str:
        payload = json.dumps({"config": self.as_dict(), "seed": seed}, sort_keys=True, default=list)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    # derived objects
    def grid(self) -> TimeGrid:
        return TimeGrid(self.system.duration, self.system.n_steps)

    def problem(self, theta: float | None = None) -> ControlProblem:
        s = self.system
        w = self.weights
        return ControlProblem(self.grid(), default_psd(s.duration), FrequencyGrid.default(s.duration),
                              s.theta0 if theta is None else theta, CostWeights(w.fidelity, w.robust, w.amp, w.smooth))


def _coerce(key: str, val, default):
    if isinstance(default, bool):
        _check(isinstance(val, bool), f"{key} must be a boolean")
        return val
    if isinstance(default, int):
        _check(isinstance(val, int) and not isinstance(val, bool), f"{key} must be an integer")
        return val
    if isinstance(default, float):
        _check(isinstance(val, (int, float)) and not isinstance(val, bool), f"{key} must be a number")
        _check(math.isfinite(val), f"{key} must be finite")
        return float(val)
    if isinstance(default, tuple):
        _check(isinstance(val, list) and all(isinstance(v, (int, float)) for v in val), f"{key} must be a number list")
        return tuple(float(v) for v in val)
    _check(isinstance(val, type(default)), f"{key} has the wrong type")
    return val


# --------------------------------------------------------------------- helpers

def _load_pulse(path) -> PulseParams:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"pulse file not found: {path}")
    return PulseParams.from_json(path.read_text())


def _load_family(path) -> FamilyRecord:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"family file not found: {path}")
    return FamilyRecord.from_json(path.read_text())


def _plot_omegas(duration: float) -> np.ndarray:
    w0 = omega0(duration)
    return np.geomspace(1e-2 * w0, 10 * w0, 400)


def _write_filter_csv(path, model, params: PulseParams, grid: TimeGrid, comment: str):
    prop = propagate_control(model, evaluate_pulse(params, grid), grid)
    filter_function(model, prop, grid, _plot_omegas(grid.duration)).to_csv(path, header_comment=comment)


# --------------------------------------------------------------------- commands

def cmd_init(cfg: RunConfig, out: Path, seed: int):
    tag = f"config_hash={cfg.digest(seed)}"
    problem = cfg.problem()
    grid = problem.grid
    opt = dict(lr=cfg.optimizer.lr, max_iter=cfg.optimizer.max_iter)
    sine = sine_pulse(problem.theta_target, grid, cfg.system.n_harmonics)
    baseline, ff = initialize(problem, sine, **opt)
    out.mkdir(parents=True, exist_ok=True)
    for label, report in (("ff-qcrl", ff), ("static-baseline", baseline)):
        (out / f"{label}.json").write_text(report.params.to_json())
        (out / f"{label}_report.json").write_text(report.to_json())
        report.trace_to_csv(out / f"{label}_trace.csv", tag)
        _write_filter_csv(out / f"filter_{label}.csv", problem.model, report.params, grid, tag)
    (out / "sine.json").write_text(sine.to_json())
    _write_filter_csv(out / "filter_sine.csv", problem.model, sine, grid, tag)
    omegas = _plot_omegas(grid.duration)
    with open(out / "psd.csv", "w") as fh:
        fh.write(f"# {tag}\nomega_rad_per_ns,S\n")
        for w, s in zip(omegas, problem.psd(omegas)):
            fh.write(f"{w!r},{float(s)!r}\n")
    logger.info("init: wrote %s", out)


def cmd_generate(cfg: RunConfig, out: Path, seed: int, init_path, evaluator: str, checkpoint):
    if evaluator == "surrogate":
        if checkpoint is None or not Path(checkpoint).is_file():
            raise MissingArtifact(f"--evaluator surrogate needs an existing --checkpoint (got {checkpoint})")
        ev = SurrogateEvaluator(VqcModel.from_json(Path(checkpoint).read_text()))
    else:
        ev = None
    init = _load_pulse(init_path)
    problem = cfg.problem()
    rc = RipvConfig(cfg.ripv.dtheta, cfg.ripv.theta_end, "project", cfg.ripv.recorrection_period or None, seed=seed)
    record = generate_family(init, problem, rc, ev)
    out.mkdir(parents=True, exist_ok=True)
    record.to_csv(out / "family.csv", f"config_hash={cfg.digest(seed)}")
    (out / "family.json").write_text(record.to_json())


def cmd_mc(cfg: RunConfig, out: Path, seed: int, family_path, pulse_paths):
    grid = cfg.grid()
    model = SystemModel.detuned_qubit()
    pulses = {}
    if family_path is not None:
        record = _load_family(family_path)
        lo, hi = record.initial.theta, record.all_entries()[-1].theta
        for theta in np.linspace(lo, hi, cfg.mc.angles):
            e = record.nearest(theta)
            pulses[f"theta={e.theta:.4f}"] = (record.pulse(e), e.theta)
    for item in pulse_paths or ():
        label, _, path = item.partition("=")
        if not path:
            label, path = Path(item).stem, item
        p = _load_pulse(path)
        theta = float(evaluate_pulse(p, grid).sum() * grid.dt)
        pulses[label] = (p, theta)
    if not pulses:
        raise ConfigError("mc needs --family and/or --pulse inputs")
    result = run_sweep(pulses, default_psd(cfg.system.duration), cfg.mc.levels, cfg.mc.samples, seed, grid, model)
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / "mc.csv", f"config_hash={cfg.digest(seed)}")
    if len(cfg.mc.levels) >= 2:
        (out / "slopes.json").write_text(slopes_to_json(result))


def cmd_surrogate_dataset(cfg: RunConfig, out: Path, seed: int, family_path):
    record = _load_family(family_path)
    sc = cfg.surrogate
    ds = sample_dataset(record, cfg.problem(), sc.dataset_cap, sc.sigma_frac, seed).with_split(sc.train_config(), seed)
    out.mkdir(parents=True, exist_ok=True)
    ds.to_csv(out / "dataset.csv", f"config_hash={cfg.digest(seed)}")


def cmd_surrogate_train(cfg: RunConfig, out: Path, seed: int, dataset_path):
    path = Path(dataset_path)
    if not path.is_file():
        raise MissingArtifact(f"dataset file not found: {path}")
    tc = cfg.surrogate.train_config()
    model, report = train(SurrogateDataset.from_csv(path), tc, seed)
    logger.info("surrogate training stopped after %d epochs (best epoch %d)", report.epochs, report.best_epoch)
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoint.json").write_text(model.to_json(cfg.digest(seed)))
    (out / "train_report.json").write_text(report.to_json())
    with open(out / "training_curve.csv", "w") as fh:
        fh.write(f"# config_hash={cfg.digest(seed)}\nepoch,train_mse,val_mse\n")
        for i, (a, b) in enumerate(zip(report.train_mse, report.val_mse), 1):
            fh.write(f"{i},{a!r},{b!r}\n")


def cmd_surrogate_ablate(cfg: RunConfig, out: Path, seed: int, init_path, checkpoint):
    if checkpoint is None or not Path(checkpoint).is_file():
        raise MissingArtifact(f"checkpoint not found: {checkpoint}")
    model = VqcModel.from_json(Path(checkpoint).read_text())
    init = _load_pulse(init_path)
    sc = cfg.surrogate
    result = ablation(init, cfg.problem(), model, default_psd(cfg.system.duration), cfg.mc.levels, sc.theta_target,
                      cfg.mc.samples, seed, cfg.ripv.dtheta, sc.n_random)
    out.mkdir(parents=True, exist_ok=True)
    tag = f"config_hash={cfg.digest(seed)}"
    result.to_csv(out / "ablation_long.csv", tag)
    strategies = list(dict.fromkeys(r[0] for r in result.rows))
    with open(out / "ablation.csv", "w") as fh:
        fh.write(f"# {tag}\n")
        fh.write(",".join(["strategy", *[f"F@{lv:.4f}" for lv in cfg.mc.levels]]) + "\n")
        for s in strategies:
            fh.write(",".join([s, *[repr(r[3]) for r in result.rows if r[0] == s]]) + "\n")


# --------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ffqcrl", description="Robust control pulse pipeline: init, generate, mc, surrogate.")
    p.add_argument("--threads", type=int, default=None, help="cap on BLAS/OpenMP worker threads")
    p.add_argument("--verify", action="store_true", help="re-run into a scratch directory and byte-compare outputs")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="TOML run configuration")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")

    common(sub.add_parser("init", help="optimize the initial pulse and its quasi-static baseline"))
    g = sub.add_parser("generate", help="sweep a pulse family from an initial pulse")
    common(g)
    g.add_argument("--init", required=True, help="initial pulse JSON")
    g.add_argument("--evaluator", choices=("exact", "surrogate"), default="exact")
    g.add_argument("--checkpoint", default=None)
    m = sub.add_parser("mc", help="Monte Carlo fidelity sweep")
    common(m)
    m.add_argument("--family", default=None, help="family JSON; samples mc.angles uniformly spaced members")
    m.add_argument("--pulse", action="append", default=[], help="LABEL=PATH pulse JSON (repeatable)")
    s = sub.add_parser("surrogate", help="surrogate dataset, training and ablation")
    ssub = s.add_subparsers(dest="action", required=True)
    d = ssub.add_parser("dataset")
    common(d)
    d.add_argument("--family", required=True)
    t = ssub.add_parser("train")
    common(t)
    t.add_argument("--dataset", required=True)
    a = ssub.add_parser("ablate")
    common(a)
    a.add_argument("--init", required=True)
    a.add_argument("--checkpoint", required=True)
    return p


def _dispatch(args, cfg: RunConfig, out: Path):
    if args.command == "init":
        seed = cfg.mc.seed if args.seed is None else args.seed
        cmd_init(cfg, out, seed)
    elif args.command == "generate":
        seed = 0 if args.seed is None else args.seed
        cmd_generate(cfg, out, seed, args.init, args.evaluator, args.checkpoint)
    elif args.command == "mc":
        seed = cfg.mc.seed if args.seed is None else args.seed
        cmd_mc(cfg, out, seed, args.family, args.pulse)
    else:
        seed = cfg.surrogate.seed if args.seed is None else args.seed
        if args.action == "dataset":
            cmd_surrogate_dataset(cfg, out, seed, args.family)
        elif args.action == "train":
            cmd_surrogate_train(cfg, out, seed, args.dataset)
        else:
            cmd_surrogate_ablate(cfg, out, seed, args.init, args.checkpoint)


def _same_tree(a: Path, b: Path) -> list:
    names = sorted(p.name for p in a.iterdir() if p.is_file())
    return [n for n in names if not (b / n).is_file() or not filecmp.cmp(a / n, b / n, shallow=False)]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        out = Path(args.out)
        with threadpool_limits(limits=args.threads):
            _dispatch(args, cfg, out)
            if args.verify:
                with tempfile.TemporaryDirectory() as tmp:
                    _dispatch(args, cfg, Path(tmp))
                    diff = _same_tree(out, Path(tmp))
                if diff:
                    print(f"verify: outputs differ between runs: {diff}", file=sys.stderr)
                    return EXIT_NUMERIC
                print("verify: outputs identical", file=sys.stderr)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifact, FileNotFoundError) as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (NumericalFailure, RipvAborted, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

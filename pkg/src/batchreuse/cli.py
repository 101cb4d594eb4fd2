"""Command line front end tying the engines together.

An experiment is described by a flat config with three sections:

``[run]``
    target      name or grammar string for the teacher link function
    engines     comma list drawn from sim, dmft, one_pass_theory, hardness
    schedules   comma list of batch schedules (sim engine only); sized
                kinds accept symbolic sizes in the dataset size n, e.g.
                ``sequential(n/5)`` or ``cycle_epochs(5)``
    directions  comma list: ``teacher`` (axis directions e1..ek), ``C1``,
                ``C1_perp``, or ``custom:c1,c2,...`` (normalised)
    out         output directory

``[train]``
    d, alpha, p, eta, lambda, steps, runs, seed, activation,
    second_layer, grad_normalization.  ``steps`` accepts the same
    symbolic-n grammar as schedule sizes.

``[theory]``
    n_samples, kernel_mode, formulation, cost_ceiling for the effective
    process integrators.

Files may be INI (sections as above) or JSON (an object with the same
three keys); a manifest written by a previous run is also accepted and
reproduces that run.  Presets fill in the whole config for the shipped
experiment panels at desk scale (d=2000, 16 runs, 1e5 replicas);
``--paper-scale`` switches to the full-size setting (d=5000, 32 runs,
1e6 replicas).  Engines run one after another in a single process; the
heavy lifting inside each is vectorised, so orchestration stays
single threaded.

Exit codes: 0 success, 2 config error (with file/field diagnostics),
3 numerical abort (divergence or a conditioning failure).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import re
import subprocess
import sys
import time
from pathlib import Path
from typing import Any, Callable, Mapping

from .dmft import (
    ConditioningError,
    DmftConfig,
    DmftTrace,
    dmft_integrate,
    one_pass_effective,
)
from .gdsim import (
    BatchSchedule,
    DivergenceError,
    OverlapTrace,
    TrainConfig,
    c1_direction,
    c1_perp_direction,
    dataset_size,
    train,
)
from .hardness import DEFAULT_K_MAX, Direction, classify_direction
from .targets import TargetFunction, get_scalar, make_teacher, named_target

ENGINES = ("sim", "dmft", "one_pass_theory", "hardness")

_DESK_SCALE = {"d": 2000, "runs": 16, "n_samples": 100_000}
_PAPER_SCALE = {"d": 5000, "runs": 32, "n_samples": 1_000_000}


class ConfigError(ValueError):
    """Bad experiment description; the message names the offending field."""


# Field tables: config key -> coercion.  "lambda" is spelled out in files
# and flags but lands on TrainConfig.lam.
_RUN_FIELDS = ("target", "engines", "schedules", "directions", "out")
_TRAIN_FIELDS: dict[str, Callable[[str], Any]] = {
    "d": int,
    "alpha": float,
    "p": int,
    "eta": float,
    "lambda": float,
    "steps": str,
    "runs": int,
    "seed": int,
    "activation": str,
    "second_layer": str,
    "grad_normalization": str,
}
_THEORY_FIELDS: dict[str, Callable[[str], Any]] = {
    "n_samples": int,
    "kernel_mode": str,
    "formulation": str,
    "cost_ceiling": int,
}

_DEFAULTS: dict[str, dict[str, Any]] = {
    "run": {
        "engines": ["sim"],
        "schedules": ["full_batch_reuse"],
        "directions": ["teacher"],
        "out": "results/run",
    },
    "train": {
        "d": _DESK_SCALE["d"],
        "alpha": 3.0,
        "p": 1,
        "eta": 0.1,
        "lambda": 0.0,
        "steps": "6",
        "runs": _DESK_SCALE["runs"],
        "seed": 0,
        "activation": "relu",
        "second_layer": "plus_minus",
        "grad_normalization": "sum",
    },
    "theory": {
        "n_samples": _DESK_SCALE["n_samples"],
        "kernel_mode": "finite_difference",
        "formulation": "single_process",
        "cost_ceiling": 32,
    },
}


def _preset(description: str, run: dict, train: dict, theory: dict | None = None) -> dict:
    return {
        "description": description,
        "run": run,
        "train": train,
        "theory": theory or {},
    }


def _single_index_panel(target: str, description: str) -> dict:
    return _preset(
        description,
        run={
            "target": target,
            "engines": ["sim", "dmft", "one_pass_theory"],
            "schedules": ["full_batch_reuse", "fresh_one_pass"],
            "directions": ["teacher"],
        },
        train={"alpha": 3.0, "p": 1, "eta": 0.1, "steps": "6"},
    )


def _staircase_panel() -> dict:
    return _preset(
        "degree-3 staircase over 3 directions, reused batch vs theory",
        run={
            "target": "staircase3",
            "engines": ["sim", "dmft", "one_pass_theory"],
            "schedules": ["full_batch_reuse"],
            "directions": ["teacher"],
        },
        train={"alpha": 3.0, "p": 2, "eta": 0.1, "steps": "4"},
    )


def _multi_pass_panel(schedule: str, steps: str, description: str) -> dict:
    return _preset(
        description,
        run={
            "target": "product123_plus_he3",
            "engines": ["sim"],
            "schedules": [schedule],
            "directions": ["teacher"],
        },
        train={"alpha": 5.0, "p": 4, "eta": 0.2, "steps": steps},
    )


PRESETS: dict[str, dict] = {
    "fig1_left": _single_index_panel(
        "tanh", "odd single-index teacher, reused batch vs fresh draws"
    ),
    "fig1_center": _single_index_panel(
        "he3", "pure degree-3 single-index teacher, reused vs fresh"
    ),
    "fig1_right": _single_index_panel(
        "he4", "pure degree-4 single-index teacher, reused vs fresh"
    ),
    "fig2_left": _preset(
        "two-direction staircase, overlap with the easy and hard axes",
        run={
            "target": "staircase2",
            "engines": ["sim"],
            "schedules": ["full_batch_reuse", "fresh_one_pass"],
            "directions": ["C1", "C1_perp"],
        },
        train={"alpha": 3.0, "p": 8, "eta": 0.1, "steps": "6"},
    ),
    "fig2_center": _preset(
        "linear-plus-cubic two-index teacher, easy and hard axes vs theory",
        run={
            "target": "linear_plus_he3",
            "engines": ["sim", "dmft", "one_pass_theory"],
            "schedules": ["full_batch_reuse", "fresh_one_pass"],
            "directions": ["C1", "C1_perp"],
        },
        train={"alpha": 3.0, "p": 2, "eta": 0.1, "steps": "6"},
    ),
    "fig2_right": _preset(
        "two-neuron relu committee, mean axis and antisymmetric axis",
        run={
            "target": "committee_relu2",
            "engines": ["sim"],
            "schedules": ["full_batch_reuse", "fresh_one_pass"],
            "directions": ["C1", "custom:-1,1"],
        },
        train={"alpha": 3.0, "p": 2, "eta": 0.1, "steps": "6"},
    ),
    "fig3": _multi_pass_panel(
        "full_batch_reuse",
        "12",
        "4-direction product staircase learned by repeated full-batch steps",
    ),
    "fig4_sequential": _multi_pass_panel(
        "sequential(n/5)",
        "12",
        "product staircase on disjoint fifths of the data, cycled in order",
    ),
    "fig4_replacement": _multi_pass_panel(
        "with_replacement(n/5)",
        "12",
        "product staircase on fifth-size batches drawn with replacement",
    ),
    "fig5_minibatch1": _multi_pass_panel(
        "sequential(1)",
        "2*n",
        "product staircase at batch size one, two passes over the data",
    ),
    "staircase": _staircase_panel(),
}


def _fail(field: str, problem: str) -> ConfigError:
    return ConfigError(f"{field}: {problem}")


def _split_list(value: Any) -> list[str]:
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",")]
    elif isinstance(value, (list, tuple)):
        parts = [str(p).strip() for p in value]
    else:
        raise _fail("run", f"expected a name list, got {value!r}")
    out = [p for p in parts if p]
    if not out:
        raise _fail("run", "empty name list")
    return out


def _coerce(section: str, key: str, value: Any, kind: Callable[[str], Any]) -> Any:
    try:
        return kind(value) if isinstance(value, str) else kind(str(value))
    except ValueError as exc:
        raise _fail(f"{section}.{key}", f"cannot read {value!r}: {exc}") from None


def _merge_section(
    merged: dict, section: str, data: Mapping[str, Any], fields: Mapping[str, Callable] | None
) -> None:
    for key, value in data.items():
        if section == "run":
            if key == "description":
                continue
            if key not in _RUN_FIELDS:
                raise _fail(f"run.{key}", "unknown field")
            if key in ("engines", "schedules", "directions"):
                merged[section][key] = _split_list(value)
            else:
                merged[section][key] = str(value)
        else:
            assert fields is not None
            if key not in fields:
                raise _fail(f"{section}.{key}", "unknown field")
            merged[section][key] = _coerce(section, key, value, fields[key])


def merge_config(*layers: Mapping[str, Any]) -> dict:
    """Stack partial configs over the desk-scale defaults, last wins."""
    merged: dict[str, dict[str, Any]] = {
        "run": dict(_DEFAULTS["run"]),
        "train": dict(_DEFAULTS["train"]),
        "theory": dict(_DEFAULTS["theory"]),
    }
    for layer in layers:
        for section in layer:
            if section == "description":
                continue
            if section not in merged:
                raise _fail(section, "unknown config section")
        if "run" in layer:
            _merge_section(merged, "run", layer["run"], None)
        if "train" in layer:
            _merge_section(merged, "train", layer["train"], _TRAIN_FIELDS)
        if "theory" in layer:
            _merge_section(merged, "theory", layer["theory"], _THEORY_FIELDS)
    return merged


def load_config(path: str | Path) -> dict:
    """Read an INI or JSON experiment description (or a past manifest)."""
    p = Path(path)
    if not p.exists():
        raise _fail(str(path), "no such config file")
    text = p.read_text()
    if p.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise _fail(f"{path}:{exc.lineno}", exc.msg) from None
        if not isinstance(data, dict):
            raise _fail(str(path), "top level must be an object")
        if "config" in data:
            data = data["config"]  # a manifest embeds the resolved config
        return data
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise _fail(str(path), exc.message.replace("\n", " ")) from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _resolve_symbolic(field: str, text: str, n: int) -> int:
    """Sizes and step counts: INT, ``n``, ``n/INT``, or ``INT*n``."""
    s = text.strip().replace(" ", "")
    try:
        if s == "n":
            return n
        if s.startswith("n/"):
            return max(1, n // int(s[2:]))
        if s.endswith("*n"):
            return int(s[:-2]) * n
        return int(s)
    except ValueError:
        raise _fail(field, f"cannot read size {text!r}") from None


def _parse_schedule(spec: str, n: int) -> BatchSchedule:
    s = spec.strip()
    if s in ("full_batch_reuse", "fresh_one_pass"):
        return BatchSchedule(s)
    m = re.fullmatch(r"(cycle_epochs|sequential|with_replacement)\((.+)\)", s)
    if not m:
        raise _fail("run.schedules", f"unknown schedule {spec!r}")
    size = _resolve_symbolic("run.schedules", m.group(2), n)
    try:
        return BatchSchedule(m.group(1), size)
    except ValueError as exc:
        raise _fail("run.schedules", str(exc)) from None


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """A fully merged experiment description, validated field by field."""

    target: str
    engines: tuple[str, ...]
    schedules: tuple[str, ...]
    directions: tuple[str, ...]
    out: str
    train: dict[str, Any]
    theory: dict[str, Any]

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        merged = merge_config(data)
        run = merged["run"]
        if "target" not in run:
            raise _fail("run.target", "required")
        engines = tuple(run["engines"])
        for e in engines:
            if e not in ENGINES:
                raise _fail("run.engines", f"unknown engine {e!r}")
        cfg = cls(
            target=run["target"],
            engines=engines,
            schedules=tuple(run["schedules"]),
            directions=tuple(run["directions"]),
            out=run["out"],
            train=merged["train"],
            theory=merged["theory"],
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        target = self.resolve_target()
        tc = self.train_config(self.schedules[0])
        for spec in self.schedules[1:]:
            self.train_config(spec)
        self.resolve_directions(target)
        theory = {"dmft", "one_pass_theory"} & set(self.engines)
        if theory:
            if self.train["second_layer"] != "plus_minus":
                raise _fail(
                    "train.second_layer",
                    f"{sorted(theory)} assume the paired sign layer",
                )
            if self.train["grad_normalization"] != "sum":
                raise _fail(
                    "train.grad_normalization",
                    f"{sorted(theory)} assume summed batch gradients",
                )
            self.dmft_config(steps=tc.steps)

    def resolve_target(self) -> TargetFunction:
        try:
            return named_target(self.target)
        except (ValueError, KeyError) as exc:
            raise _fail("run.target", str(exc)) from None

    def _n(self) -> int:
        return int(round(self.train["alpha"] * self.train["d"]))

    def train_config(self, schedule_spec: str) -> TrainConfig:
        t = self.train
        n = self._n()
        try:
            return TrainConfig(
                d=t["d"],
                alpha=t["alpha"],
                p=t["p"],
                eta=t["eta"],
                lam=t["lambda"],
                steps=_resolve_symbolic("train.steps", t["steps"], n),
                schedule=_parse_schedule(schedule_spec, n),
                seed=t["seed"],
                runs=t["runs"],
                activation=t["activation"],
                second_layer=t["second_layer"],
                grad_normalization=t["grad_normalization"],
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise _fail("train", str(exc)) from None

    def dmft_config(self, steps: int | None = None) -> DmftConfig:
        t, th = self.train, self.theory
        k = self.resolve_target().k
        if steps is None:
            steps = _resolve_symbolic("train.steps", t["steps"], self._n())
        try:
            return DmftConfig(
                alpha=t["alpha"],
                eta=t["eta"],
                lam=t["lambda"],
                p=t["p"],
                k=k,
                steps=steps,
                n_samples=th["n_samples"],
                seed=t["seed"],
                kernel_mode=th["kernel_mode"],
                formulation=th["formulation"],
                cost_ceiling=th["cost_ceiling"],
            )
        except ValueError as exc:
            raise _fail("theory", str(exc)) from None

    def resolve_directions(self, target: TargetFunction) -> list[Direction]:
        out: list[Direction] = []
        for spec in self.directions:
            if spec == "teacher":
                out.extend(Direction.axis(target.k, i) for i in range(1, target.k + 1))
            elif spec in ("C1", "C1_perp"):
                maker = c1_direction if spec == "C1" else c1_perp_direction
                try:
                    out.append(maker(target))
                except ValueError as exc:
                    raise _fail("run.directions", f"{spec}: {exc}") from None
            elif spec.startswith("custom:"):
                try:
                    coeffs = [float(c) for c in spec[len("custom:"):].split(",")]
                except ValueError:
                    raise _fail("run.directions", f"bad coefficients in {spec!r}") from None
                if len(coeffs) != target.k:
                    raise _fail(
                        "run.directions",
                        f"{spec!r} has {len(coeffs)} coefficients, target has k={target.k}",
                    )
                out.append(Direction.unit(coeffs, name=spec))
            else:
                raise _fail("run.directions", f"unknown direction {spec!r}")
        return out

    def as_mapping(self) -> dict:
        return {
            "run": {
                "target": self.target,
                "engines": list(self.engines),
                "schedules": list(self.schedules),
                "directions": list(self.directions),
                "out": self.out,
            },
            "train": dict(self.train),
            "theory": dict(self.theory),
        }


def _version() -> str:
    try:
        proc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=10,
        )
        if proc.returncode == 0:
            return proc.stdout.strip()
    except OSError:
        pass
    return "unknown"


def _file_label(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")


def _run_sim(cfg: ExperimentConfig, target, outdir: Path) -> tuple[list[str], dict[str, float]]:
    teacher = make_teacher(cfg.train["d"], target.k, seed=cfg.train["seed"])
    directions = cfg.resolve_directions(target)
    files, walls = [], {}
    for spec in cfg.schedules:
        tc = cfg.train_config(spec)
        started = time.perf_counter()
        trace = train(tc, teacher, target, directions)
        walls[f"sim:{spec}"] = time.perf_counter() - started
        name = f"sim_{_file_label(trace.schedule)}.csv"
        trace.write_csv(outdir / name)
        files.append(name)
    return files, walls


def _run_theory(
    cfg: ExperimentConfig, target, outdir: Path, engine: str
) -> tuple[list[str], dict[str, float]]:
    sigma = get_scalar(cfg.train["activation"])
    dc = cfg.dmft_config()
    directions = cfg.resolve_directions(target)
    started = time.perf_counter()
    if engine == "dmft":
        trace = dmft_integrate(dc, target, sigma)
    else:
        trace = one_pass_effective(dc, target, sigma)
    wall = {engine: time.perf_counter() - started}
    files = [f"{engine}.csv"]
    trace.write_csv(outdir / files[0], directions)
    if engine == "dmft":
        files.append("dmft_kernels.json")
        (outdir / files[1]).write_text(trace.kernels_json())
    return files, wall


def _run_hardness(cfg: ExperimentConfig, target, outdir: Path) -> tuple[list[str], dict[str, float]]:
    directions = cfg.resolve_directions(target)
    started = time.perf_counter()
    report = {
        direction.name: json.loads(
            classify_direction(target, direction, seed=cfg.train["seed"]).to_json()
        )
        for direction in directions
    }
    wall = {"hardness": time.perf_counter() - started}
    (outdir / "hardness.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return ["hardness.json"], wall


def execute(cfg: ExperimentConfig) -> dict:
    """Run every requested engine and write artifacts plus a manifest."""
    target = cfg.resolve_target()
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    files: list[str] = []
    walls: dict[str, float] = {}
    for engine in cfg.engines:
        if engine == "sim":
            f, w = _run_sim(cfg, target, outdir)
        elif engine in ("dmft", "one_pass_theory"):
            f, w = _run_theory(cfg, target, outdir, engine)
        else:
            f, w = _run_hardness(cfg, target, outdir)
        files.extend(f)
        walls.update(w)
    manifest = {
        "config": cfg.as_mapping(),
        "engines": list(cfg.engines),
        "outputs": files,
        "seeds": {"base": cfg.train["seed"]},
        "version": _version(),
        "wall_times_s": {k: round(v, 3) for k, v in walls.items()},
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def run(
    source: str | Path | None = None,
    *,
    preset: str | None = None,
    paper_scale: bool = False,
    overrides: Mapping[str, Mapping[str, Any]] | None = None,
    stderr=None,
) -> int:
    """Resolve a config source, run it, and return a process exit code."""
    err = stderr if stderr is not None else sys.stderr
    try:
        layers: list[Mapping[str, Any]] = []
        if preset is not None:
            if preset not in PRESETS:
                known = ", ".join(sorted(PRESETS))
                raise _fail("--preset", f"unknown preset {preset!r}; known: {known}")
            layers.append(PRESETS[preset])
            if "out" not in PRESETS[preset]["run"]:
                layers.append({"run": {"out": f"results/{preset}"}})
        if source is not None:
            layers.append(load_config(source))
        if not layers:
            raise _fail("run", "need a config file or --preset")
        if paper_scale:
            layers.append(
                {
                    "train": {"d": _PAPER_SCALE["d"], "runs": _PAPER_SCALE["runs"]},
                    "theory": {"n_samples": _PAPER_SCALE["n_samples"]},
                }
            )
        if overrides:
            layers.append(overrides)
        cfg = ExperimentConfig.from_mapping(merge_config(*layers))
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return 2
    try:
        execute(cfg)
    except (DivergenceError, ConditioningError) as exc:
        print(f"numerical abort: {exc}", file=err)
        return 3
    return 0


def list_presets() -> str:
    """One line per preset: name, target, schedules, and what it shows."""
    rows = []
    for name, p in PRESETS.items():
        rows.append(
            (name, p["run"]["target"], ",".join(p["run"]["schedules"]), p["description"])
        )
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = [
        f"{name:<{widths[0]}}  {target:<{widths[1]}}  {sched:<{widths[2]}}  {desc}"
        for name, target, sched, desc in rows
    ]
    return "\n".join(lines)


def hardness_report(
    target_spec: str,
    k_max: int = DEFAULT_K_MAX,
    *,
    customs: tuple[str, ...] = (),
    seed: int = 0,
) -> dict:
    """Classify the teacher axes (and any custom directions) of a target."""
    try:
        target = named_target(target_spec)
    except (ValueError, KeyError) as exc:
        raise _fail("target", str(exc)) from None
    specs = ["teacher", *customs]
    cfg = ExperimentConfig.from_mapping(
        {"run": {"target": target_spec, "directions": specs}}
    )
    directions = cfg.resolve_directions(target)
    return {
        direction.name: json.loads(
            classify_direction(target, direction, k_max=k_max, seed=seed).to_json()
        )
        for direction in directions
    }


_FLAG_DESTS = {
    "d": ("train", "d"),
    "alpha": ("train", "alpha"),
    "eta": ("train", "eta"),
    "lambda_": ("train", "lambda"),
    "p": ("train", "p"),
    "T": ("train", "steps"),
    "runs": ("train", "runs"),
    "samples": ("theory", "n_samples"),
    "seed": ("train", "seed"),
}


def _overrides_from_args(args: argparse.Namespace) -> dict:
    out: dict[str, dict[str, Any]] = {}
    for attr, (section, key) in _FLAG_DESTS.items():
        value = getattr(args, attr)
        if value is not None:
            out.setdefault(section, {})[key] = value
    if args.engines is not None:
        out.setdefault("run", {})["engines"] = args.engines
    if args.schedule is not None:
        out.setdefault("run", {})["schedules"] = args.schedule
    if args.out is not None:
        out.setdefault("run", {})["out"] = args.out
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="batchreuse", description="train, integrate, and classify batch-reuse experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run an experiment from a config file or preset")
    runp.add_argument("config", nargs="?", help="INI or JSON config, or a past manifest.json")
    runp.add_argument("--preset", help="start from a named preset")
    runp.add_argument("--paper-scale", action="store_true", help="full-size d, runs, replicas")
    runp.add_argument("--d", type=int)
    runp.add_argument("--alpha", type=float)
    runp.add_argument("--eta", type=float)
    runp.add_argument("--lambda", dest="lambda_", type=float)
    runp.add_argument("--p", type=int)
    runp.add_argument("--T", type=str, help="number of gradient steps (accepts n-expressions)")
    runp.add_argument("--runs", type=int)
    runp.add_argument("--samples", type=int, help="theory replica count")
    runp.add_argument("--seed", type=int)
    runp.add_argument("--engines", help="comma list: sim,dmft,one_pass_theory,hardness")
    runp.add_argument("--schedule", help="comma list of batch schedules")
    runp.add_argument("--out", help="output directory")

    sub.add_parser("list-presets", help="table of shipped experiment panels")

    hard = sub.add_parser("hardness-report", help="direction-by-direction learnability verdicts")
    hard.add_argument("target", help="target name or grammar string")
    hard.add_argument("--k-max", type=int, default=DEFAULT_K_MAX)
    hard.add_argument("--direction", action="append", default=[],
                      help="extra custom:c1,c2,... direction (repeatable)")
    hard.add_argument("--seed", type=int, default=0)
    hard.add_argument("--out", help="write the JSON report here instead of stdout")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return run(
            args.config,
            preset=args.preset,
            paper_scale=args.paper_scale,
            overrides=_overrides_from_args(args),
        )
    if args.command == "list-presets":
        print(list_presets())
        return 0
    try:
        report = hardness_report(
            args.target,
            args.k_max,
            customs=tuple(args.direction),
            seed=args.seed,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())

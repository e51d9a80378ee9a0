"""Command-line front end: toy demos, the training protocol, the
heatmap sweep, and the invariant checks, emitting plot-ready text files.

Exit codes: 0 success, 1 failed verification, 2 usage error, 3
divergence.  Config files are flat ``key=value`` lines (blank lines and
``#`` comments skipped); command-line flags override file values, and
``SOFTAD_OUTDIR`` overrides the default output directory when no
``--outdir`` flag is given.  All output is deterministic: the same
subcommand with the same config and seed writes byte-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from .datasets import (
    SyntheticSpec,
    demo_points,
    quadratic_demo_trajectories,
    two_d_mean_candidates,
    two_d_mean_config,
    two_d_mean_directions,
)
from .harness import (
    run_protocol,
    sweep_heatmap,
    write_heatmap_csv,
    write_summary,
    write_trial_csv,
)
from .objectives import KINDS, ObjectiveSpec
from .verify import report_lines, run_checks

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

QUADRATIC_CSV_HEADER = "t,x_gd,f_gd,x_flood,f_flood,x_softad,f_softad"
TRANSFORMED_CSV_HEADER = "candidate,point,weight,g1,g2"
POINTS_CSV_HEADER = "x1,x2"


class UsageError(Exception):
    pass


class DivergenceError(Exception):
    pass


@dataclass(frozen=True)
class CliCommand:
    subcommand: str
    config: str = None
    outdir: str = "."
    seed: int = None


def _float(s: str) -> float:
    return float(s)


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _str(s: str) -> str:
    return s.strip()


def _int_tuple(s: str) -> tuple:
    parts = [p.strip() for p in s.split(",") if p.strip()]
    return tuple(int(p) for p in parts)


def _int_list(s: str) -> list:
    parts = [p.strip() for p in s.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected at least one integer")
    return [int(p) for p in parts]


def _str_list(s: str) -> list:
    parts = [p.strip() for p in s.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected at least one name")
    return parts


_DATA_KEYS = {
    "dataset": (_str, "two-gaussians"),
    "n_train": (_int, 100),
    "n_val": (_int, 100),
    "n_test": (_int, 20000),
    "noise": (_float, None),
}

_TRAINER_KEYS = {
    "loss": (_str, "cross-entropy"),
    "optimizer": (_str, "adam"),
    "learning_rate": (_float, 0.001),
    "momentum": (_float, 0.0),
    "batch_size": (_int, 50),
}

OPTIONS = {
    "demo-quadratic": {
        "theta": (_float, 0.5),
        "sigma": (_float, 1.0),
        "alpha": (_float, 0.1),
        "steps": (_int, 500),
        "x0": (_float, 2.0),
    },
    "demo-2dmean": {},
    "train": {
        **_DATA_KEYS,
        **_TRAINER_KEYS,
        "methods": (_str_list, ["erm", "flood", "softad"]),
        "seeds": (_int_list, [0, 1, 2, 3, 4]),
        "epochs": (_int, 200),
        "hidden": (_int_tuple, (64, 64)),
        "sigma": (_float, 1.0),
        "fd_step": (_float, 0.01),
        "grid_min": (_float, 0.01),
        "grid_max": (_float, 2.0),
        "grid_points": (_int, 40),
        "fast_grid": (_bool, True),
    },
    "sweep-heatmap": {
        **_DATA_KEYS,
        **_TRAINER_KEYS,
        "epochs": (_int, 50),
        "theta_min": (_float, 0.01),
        "theta_max": (_float, 2.0),
        "theta_points": (_int, 8),
        "sigma_min": (_float, 0.25),
        "sigma_max": (_float, 2.0),
        "sigma_points": (_int, 5),
    },
    "verify": {
        "perturb_phi": (_bool, False),
    },
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softad")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name, table in OPTIONS.items():
        sub = subs.add_parser(name)
        sub.add_argument("--config", default=None, help="key=value settings file")
        sub.add_argument("--outdir", default=None, help="output directory")
        sub.add_argument("--seed", default=None, help="seed override")
        for key in table:
            flag = "--" + key.replace("_", "-")
            sub.add_argument(flag, dest=key, default=None, metavar=key.upper())
    return parser


def read_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}")
    out = {}
    for lineno, raw in enumerate(raw_lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def merge_options(subcommand: str, cfg: dict, ns) -> dict:
    """Typed option dict for one subcommand: defaults, then config file
    values, then flag values."""
    table = OPTIONS[subcommand]
    known = set(table) | {"outdir", "seed"}
    for key in cfg:
        if key not in known:
            raise UsageError(f"unknown config key: {key!r}")
    out = {}
    for key, (convert, default) in table.items():
        raw = getattr(ns, key, None)
        if raw is None:
            raw = cfg.get(key)
        if raw is None:
            out[key] = default
            continue
        try:
            out[key] = convert(raw)
        except ValueError:
            raise UsageError(f"invalid value for {key}: {raw!r}")
    return out


def _merged_command(ns, cfg: dict) -> CliCommand:
    outdir = ns.outdir
    if outdir is None:
        outdir = os.environ.get("SOFTAD_OUTDIR")
    if outdir is None:
        outdir = cfg.get("outdir", ".")
    raw_seed = ns.seed if ns.seed is not None else cfg.get("seed")
    try:
        seed = None if raw_seed is None else int(raw_seed)
    except ValueError:
        raise UsageError(f"invalid value for seed: {raw_seed!r}")
    return CliCommand(ns.subcommand, config=ns.config, outdir=outdir, seed=seed)


def _write_lines(path: str, lines) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_demo_quadratic(cmd: CliCommand, opt: dict) -> int:
    if opt["steps"] < 1:
        raise UsageError("steps must be >= 1")
    # overflow past the representable range is reported via exit code 3,
    # not a warning storm
    with np.errstate(over="ignore", invalid="ignore"):
        traj = quadratic_demo_trajectories(
            opt["steps"], opt["theta"], opt["sigma"], opt["alpha"], opt["x0"]
        )
        lines = [QUADRATIC_CSV_HEADER]
        for t in range(opt["steps"] + 1):
            cells = [str(t)]
            for m in ("gd", "flood", "softad"):
                x = traj[m][t]
                cells.extend([_fmt(x), _fmt(0.5 * x * x)])
            lines.append(",".join(cells))
    _write_lines(os.path.join(cmd.outdir, "quadratic.csv"), lines)
    if not all(np.isfinite(traj[m]).all() for m in traj):
        raise DivergenceError("trajectory left the representable range")
    return EXIT_OK


def read_quadratic_csv(path: str) -> dict:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines[0] != QUADRATIC_CSV_HEADER:
        raise ValueError("unexpected trajectory header")
    rows = [line.split(",") for line in lines[1:]]
    out = {"t": np.array([int(r[0]) for r in rows])}
    for j, k in enumerate(QUADRATIC_CSV_HEADER.split(",")[1:], start=1):
        out[k] = np.array([float(r[j]) for r in rows])
    return out


def cmd_demo_2dmean(cmd: CliCommand, opt: dict) -> int:
    seed = 0 if cmd.seed is None else cmd.seed
    points = demo_points(seed)
    theta, _ = two_d_mean_config(points)
    outside, inside = two_d_mean_candidates(points, theta, seed)

    _write_lines(
        os.path.join(cmd.outdir, "2dmean_points.csv"),
        [POINTS_CSV_HEADER] + [f"{_fmt(x)},{_fmt(y)}" for x, y in points],
    )

    summary = [f"seed = {seed}", f"theta = {_fmt(theta)}", "sigma = 1.0"]
    transformed = [TRANSFORMED_CSV_HEADER]
    for label, w in (("outside", outside), ("inside", inside)):
        d = two_d_mean_directions(w, points, theta)
        summary.append(f"{label} = {_fmt(w[0])},{_fmt(w[1])}")
        summary.append(f"{label}_risk = {_fmt(d['risk'])}")
        summary.append(f"{label}_erm = {_fmt(d['erm'][0])},{_fmt(d['erm'][1])}")
        summary.append(f"{label}_flood = {_fmt(d['flood'][0])},{_fmt(d['flood'][1])}")
        summary.append(f"{label}_flood_flag = {_fmt(d['flood_flag'])}")
        summary.append(f"{label}_softad = {_fmt(d['softad'][0])},{_fmt(d['softad'][1])}")
        summary.append(f"{label}_softad_value = {_fmt(d['softad_value'])}")
        for i in range(len(points)):
            g = d["per_point_transformed"][i]
            transformed.append(
                f"{label},{i},{_fmt(d['per_point_weights'][i])},{_fmt(g[0])},{_fmt(g[1])}"
            )
    _write_lines(os.path.join(cmd.outdir, "2dmean_summary.txt"), summary)
    _write_lines(os.path.join(cmd.outdir, "2dmean_transformed.csv"), transformed)
    return EXIT_OK


def _method_template(kind: str, opt: dict) -> ObjectiveSpec:
    start = opt["grid_min"]
    if kind == "erm":
        return ObjectiveSpec.erm()
    if kind == "flood":
        return ObjectiveSpec.flood(start)
    if kind == "iflood":
        return ObjectiveSpec.iflood(start)
    if kind == "softad":
        return ObjectiveSpec.softad(start, opt["sigma"])
    if kind == "sam":
        return ObjectiveSpec.sam(start)
    if kind == "fdgr":
        return ObjectiveSpec.fdgr(start, opt["fd_step"])
    if kind == "gr-exact":
        return ObjectiveSpec.gr_exact(start)
    raise UsageError(f"unknown method: {kind!r} (choose from {', '.join(KINDS)})")


def _dataset_spec(opt: dict) -> SyntheticSpec:
    try:
        return SyntheticSpec(
            kind=opt["dataset"],
            n_train=opt["n_train"],
            n_val=opt["n_val"],
            n_test=opt["n_test"],
            noise=opt["noise"],
        )
    except ValueError as exc:
        raise UsageError(str(exc))


def cmd_train(cmd: CliCommand, opt: dict) -> int:
    dataset = _dataset_spec(opt)
    if dataset.kind not in ("two-gaussians", "sinusoid", "spiral"):
        raise UsageError(f"{dataset.kind!r} is not a classification dataset")
    if opt["grid_points"] < 1:
        raise UsageError("grid_points must be >= 1")
    if not opt["grid_min"] <= opt["grid_max"]:
        raise UsageError("grid_min must not exceed grid_max")
    methods = {kind: _method_template(kind, opt) for kind in opt["methods"]}
    seeds = opt["seeds"] if cmd.seed is None else [cmd.seed]
    grid = tuple(np.linspace(opt["grid_min"], opt["grid_max"], opt["grid_points"]))
    try:
        result = run_protocol(
            dataset,
            methods,
            seeds,
            epochs=opt["epochs"],
            grid=grid,
            fast_grid=opt["fast_grid"],
            hidden=opt["hidden"],
            loss=opt["loss"],
            optimizer=opt["optimizer"],
            learning_rate=opt["learning_rate"],
            momentum=opt["momentum"],
            batch_size=opt["batch_size"],
        )
    except ValueError as exc:
        if "diverged" in str(exc):
            raise DivergenceError(str(exc))
        raise UsageError(str(exc))
    write_summary(os.path.join(cmd.outdir, "summary.txt"), result, seeds)
    for name, m in result.methods.items():
        for seed, record in zip(seeds, m.records):
            write_trial_csv(
                os.path.join(cmd.outdir, f"trial_{name}_seed{seed}.csv"), record
            )
    return EXIT_OK


def cmd_sweep_heatmap(cmd: CliCommand, opt: dict) -> int:
    dataset = _dataset_spec(opt)
    if dataset.kind not in ("two-gaussians", "sinusoid", "spiral"):
        raise UsageError(f"{dataset.kind!r} is not a classification dataset")
    if opt["theta_points"] < 1 or opt["sigma_points"] < 1:
        raise UsageError("grid needs at least one point per axis")
    seed = 0 if cmd.seed is None else cmd.seed
    theta_values = np.linspace(opt["theta_min"], opt["theta_max"], opt["theta_points"])
    sigma_values = np.linspace(opt["sigma_min"], opt["sigma_max"], opt["sigma_points"])
    try:
        grid, any_diverged = sweep_heatmap(
            dataset,
            theta_values,
            sigma_values,
            epochs=opt["epochs"],
            seed=seed,
            loss=opt["loss"],
            optimizer=opt["optimizer"],
            learning_rate=opt["learning_rate"],
            momentum=opt["momentum"],
            batch_size=opt["batch_size"],
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    write_heatmap_csv(os.path.join(cmd.outdir, "heatmap.csv"), theta_values, sigma_values, grid)
    if any_diverged:
        raise DivergenceError("at least one sweep cell diverged")
    return EXIT_OK


def cmd_verify(cmd: CliCommand, opt: dict) -> int:
    results = run_checks(perturb_phi=opt["perturb_phi"])
    lines = report_lines(results)
    for line in lines:
        print(line)
    _write_lines(os.path.join(cmd.outdir, "verify_report.txt"), lines)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


DISPATCH = {
    "demo-quadratic": cmd_demo_quadratic,
    "demo-2dmean": cmd_demo_2dmean,
    "train": cmd_train,
    "sweep-heatmap": cmd_sweep_heatmap,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = read_config(ns.config) if ns.config else {}
        opt = merge_options(ns.subcommand, cfg, ns)
        cmd = _merged_command(ns, cfg)
        os.makedirs(cmd.outdir, exist_ok=True)
        return DISPATCH[cmd.subcommand](cmd, opt)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())

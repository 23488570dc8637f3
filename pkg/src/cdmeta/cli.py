"""Command-line interface.

Commands::

    cdmeta fixed    --data FILE [--method optimal|per-study|normal|deviance]
    cdmeta pairwise --data FILE --studies I,J
    cdmeta random   --data FILE --target gamma0|kappa
    cdmeta validate --data FILE

Each analysis prints a JSON summary (also written to ``--json``) and, with
``--out``, writes the confidence curve as CSV with columns
``param,confidence_curve,cd_value``.  Exit codes: 0 success, 2 input or
validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import fixed_effect as fe
from . import heterogeneity as het
from .confidence import cc_from_cd, interval_at, median_estimate
from .exceptions import (
    BoundaryFitError,
    CDMetaError,
    DataFormatError,
    DomainError,
    GridError,
    NumericalError,
    UninformativeError,
    ValidationError,
)
from .tables import DEFAULT_DIVISOR, load_csv

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

_RATIO_GRID = (0.02, 50.0, 400, True)
_KAPPA_GRID = (het.DEFAULT_KAPPA_GRID[0], het.DEFAULT_KAPPA_GRID[1], het.DEFAULT_KAPPA_GRID[2], False)


@dataclass(frozen=True)
class RunConfig:
    data: Path
    divisor: float = DEFAULT_DIVISOR
    method: str = "optimal"
    grid_min: float = 0.02
    grid_max: float = 50.0
    grid_points: int = 400
    grid_log: bool = True
    level: float = 0.95
    seed: int = 0
    replicates: int = het.DEFAULT_REPLICATES
    out: Path | None = None
    json_path: Path | None = None
    gnuplot: bool = False

    def __post_init__(self):
        if not self.grid_min < self.grid_max:
            raise DomainError("--grid-min must be below --grid-max")
        if self.grid_points < 2:
            raise DomainError("--grid-points must be at least 2")
        if not 0.0 < self.level < 1.0:
            raise DomainError("--level must lie strictly between 0 and 1")
        if not self.divisor > 0:
            raise DomainError("--divisor must be positive")
        if self.gnuplot and self.out is None:
            raise DomainError("--gnuplot needs --out")

    def grid(self):
        if self.grid_log:
            if self.grid_min <= 0:
                raise DomainError("a log grid needs --grid-min > 0")
            return np.geomspace(self.grid_min, self.grid_max, self.grid_points)
        return np.linspace(self.grid_min, self.grid_max, self.grid_points)

    def grid_summary(self):
        return {
            "min": self.grid_min, "max": self.grid_max, "points": self.grid_points,
            "spacing": "log" if self.grid_log else "linear",
        }


def _config(args, defaults) -> RunConfig:
    gmin, gmax, gpts, glog = defaults
    return RunConfig(
        data=Path(args.data),
        divisor=args.divisor,
        method=getattr(args, "method", "optimal"),
        grid_min=gmin if args.grid_min is None else args.grid_min,
        grid_max=gmax if args.grid_max is None else args.grid_max,
        grid_points=gpts if args.grid_points is None else args.grid_points,
        grid_log=glog if args.grid_log is None else args.grid_log,
        level=args.level,
        seed=args.seed,
        replicates=args.replicates,
        out=None if args.out is None else Path(args.out),
        json_path=None if args.json is None else Path(args.json),
        gnuplot=args.gnuplot,
    )


def _endpoint(x):
    return None if math.isinf(x) else x


def _interval_summary(curve, level):
    lo, hi = interval_at(curve, level)
    return {
        "ci_lower": _endpoint(lo), "ci_upper": _endpoint(hi),
        "ci_lower_open": bool(lo <= curve.support[0] and lo < curve.grid[0]),
        "ci_upper_open": bool(hi >= curve.support[1] and hi > curve.grid[-1]),
    }


def _write_curve(path: Path, curve, param_label):
    cd_vals = curve.cd_values()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "confidence_curve", "cd_value"])
        for x, cc, c in zip(curve.grid, curve.cc_values, cd_vals):
            w.writerow([repr(float(x)), repr(float(cc)), repr(float(c))])


def _write_gnuplot(csv_path: Path, param_label, level, log_x):
    script = csv_path.with_suffix(csv_path.suffix + ".gp")
    lines = [
        "set datafile separator ','",
        "set key off",
        f"set xlabel '{param_label}'",
        "set ylabel 'confidence curve'",
        "set yrange [0:1]",
    ]
    if log_x:
        lines.append("set logscale x")
    lines.append(
        f"plot '{csv_path.name}' every ::1 using 1:2 with lines lw 2, {level} with lines dt 2"
    )
    script.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return script


def _emit(cfg: RunConfig, summary: dict, curve=None, param_label="gamma"):
    summary = dict(summary)
    summary.update({
        "level": cfg.level,
        "divisor": cfg.divisor,
        "data": str(cfg.data),
        "version": __version__,
    })
    if curve is not None:
        summary["grid"] = {
            "min": float(curve.grid[0]), "max": float(curve.grid[-1]),
            "points": int(curve.grid.size),
            "spacing": cfg.grid_summary()["spacing"],
        }
        if cfg.out is not None:
            _write_curve(cfg.out, curve, param_label)
            summary["curve_csv"] = str(cfg.out)
            if cfg.gnuplot:
                summary["gnuplot"] = str(_write_gnuplot(cfg.out, param_label, cfg.level, cfg.grid_log))
    text = json.dumps(summary, indent=2, sort_keys=True)
    if cfg.json_path is not None:
        cfg.json_path.write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_fixed(args) -> int:
    cfg = _config(args, _RATIO_GRID)
    studies = load_csv(cfg.data, cfg.divisor)
    grid = cfg.grid()
    fit = fe.mcl_estimate(studies)
    method = cfg.method
    summary = {
        "command": "fixed", "method": method, "k": studies.k, "b_obs": fit.b_obs,
        "gamma_hat": fit.gamma_hat, "boundary": fit.boundary,
    }
    if method == "per-study":
        if args.studies is None and studies.k > 1:
            raise ValidationError("--method per-study needs --studies ID for a multi-study file")
        sid = studies.ids[0] if args.studies is None else args.studies.split(",")[0]
        study = studies[studies.index_of(sid)]
        cd = fe.per_study_cd(study, grid)
        curve = cc_from_cd(cd)
        summary.update({"study": study.id, "b_obs": study.y1, "uninformative": cd.uninformative,
                        "gamma_hat": None, "boundary": None})
        try:
            summary["median"] = median_estimate(cd)
        except UninformativeError:
            summary["median"] = None
        summary.update(_interval_summary(curve, cfg.level))
    elif method == "optimal":
        cd = fe.combined_optimal_cd(studies, grid)
        curve = cc_from_cd(cd)
        summary["median"] = median_estimate(cd)
        summary.update(_interval_summary(curve, cfg.level))
    elif method in ("normal", "deviance"):
        if not fit.is_interior:
            summary.update({"ci_lower": None, "ci_upper": None,
                            "note": "estimate on the boundary; use --method optimal"})
            _emit(cfg, summary)
            return EXIT_OK
        if method == "normal":
            cd = fe.approx_normal_cd(fit, grid)
            curve = cc_from_cd(cd)
            summary["j_hat"] = fit.j_hat
        else:
            curve = fe.profile_deviance_cc(studies, grid, fit=fit)
        summary.update(_interval_summary(curve, cfg.level))
    else:
        raise DomainError(f"unknown method {method!r}")
    _emit(cfg, summary, curve, "gamma")
    return EXIT_OK


def cmd_pairwise(args) -> int:
    cfg = _config(args, _RATIO_GRID)
    studies = load_csv(cfg.data, cfg.divisor)
    if args.studies is None or len(args.studies.split(",")) != 2:
        raise ValidationError("--studies I,J is required for pairwise")
    i, j = (s.strip() for s in args.studies.split(","))
    st = het.pairwise_stats(studies, i, j)
    cd = het.pairwise_delta_cd(studies, i, j, cfg.grid())
    curve = cc_from_cd(cd)
    summary = {
        "command": "pairwise", "method": "pairwise",
        "study_i": studies[studies.index_of(i)].id, "study_j": studies[studies.index_of(j)].id,
        "k": studies.k, "w": st.w, "z1": st.z1, "z2": st.z2, "r": st.r, "y12_obs": st.y12_obs,
        "median": curve.estimate,
    }
    summary.update(_interval_summary(curve, cfg.level))
    _emit(cfg, summary, curve, "delta")
    return EXIT_OK


def cmd_random(args) -> int:
    target = args.target
    if target not in ("gamma0", "kappa"):
        raise DomainError(f"unknown target {target!r}")
    cfg = _config(args, _RATIO_GRID if target == "gamma0" else _KAPPA_GRID)
    studies = load_csv(cfg.data, cfg.divisor)
    fit = het.fit_random_effects(studies)
    summary = {
        "command": "random", "target": target, "method": target, "k": studies.k,
        "gamma0_hat": fit.gamma0_hat, "kappa_hat": fit.kappa_hat,
        "tau_hat": _endpoint(fit.tau_hat),
    }
    if target == "gamma0":
        curve = het.gamma0_profile_cc(studies, cfg.grid(), fit=fit)
        summary.update(_interval_summary(curve, cfg.level))
        _emit(cfg, summary, curve, "gamma0")
        return EXIT_OK
    res = het.kappa_cc(studies, cfg.grid(), cfg.replicates, cfg.seed, fit=fit)
    curve = res.curve
    summary.update({
        "point_mass_at_zero": res.point_mass_at_zero,
        "cc_at_zero": res.cc_at_zero,
        "q_obs": res.q_obs,
        "replicates": res.replicates,
        "seed": res.seed,
        "median": res.median(),
    })
    summary.update(_interval_summary(curve, cfg.level))
    _emit(cfg, summary, curve, "kappa")
    return EXIT_OK


def cmd_validate(args) -> int:
    studies = load_csv(Path(args.data), args.divisor)
    no_events = [s.id for s in studies if s.z == 0]
    summary = {
        "command": "validate", "valid": True, "k": studies.k, "ids": studies.ids,
        "divisor": studies.divisor,
        "events_control": int(studies.y0.sum()), "events_treatment": int(studies.y1.sum()),
        "studies_without_events": no_events,
        "zero_cells": [s.id for s in studies if s.y0 == 0 or s.y1 == 0],
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _add_common(p, analysis=True):
    p.add_argument("--data", required=True, metavar="PATH", help="study CSV file")
    p.add_argument("--divisor", type=float, default=DEFAULT_DIVISOR,
                   help="exposure = group size / divisor (default 100)")
    if not analysis:
        return
    p.add_argument("--grid-min", type=float)
    p.add_argument("--grid-max", type=float)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--grid-log", action=argparse.BooleanOptionalAction, default=None,
                   help="log-spaced grid (default for ratio parameters)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--studies", metavar="I,J", help="study ids (or 1-based positions)")
    p.add_argument("--replicates", type=int, default=het.DEFAULT_REPLICATES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH", help="write the confidence curve CSV here")
    p.add_argument("--json", metavar="PATH", help="also write the JSON summary here")
    p.add_argument("--gnuplot", action="store_true", help="write a gnuplot script next to --out")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cdmeta",
        description="Confidence distributions for meta-analysis of 2x2 tables as Poisson pairs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixed", help="common treatment effect")
    _add_common(p)
    p.add_argument("--method", default="optimal",
                   choices=["optimal", "per-study", "normal", "deviance"])
    p.set_defaults(func=cmd_fixed)

    p = sub.add_parser("pairwise", help="ratio of two studies' treatment effects")
    _add_common(p)
    p.set_defaults(func=cmd_pairwise)

    p = sub.add_parser("random", help="beta-binomial random effects")
    _add_common(p)
    p.add_argument("--target", default="gamma0", choices=["gamma0", "kappa"])
    p.set_defaults(func=cmd_random)

    p = sub.add_parser("validate", help="check a study CSV")
    _add_common(p, analysis=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, ValidationError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (GridError, NumericalError, UninformativeError, BoundaryFitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CDMetaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

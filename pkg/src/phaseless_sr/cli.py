"""Command line entry point: ``fig1``, ``fig2``, ``recover`` and ``selftest``.

Exit status is 0 on completion, 1 when ``recover`` (or ``selftest``) fails,
and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import experiment as ex
from .localization import time_error
from .signal import ImpulseSignal

log = logging.getLogger("phaseless_sr")


class ConfigError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(eval_fraction(t)) for t in text.split(",") if t)


def _ints(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        if ":" in part:
            lo, hi, *step = (int(v) for v in part.split(":"))
            out.extend(range(lo, hi + 1, step[0] if step else 1))
        elif part:
            out.append(int(part))
    return tuple(out)


def eval_fraction(text: str) -> float:
    """Parse ``0.25`` or ``8/32``."""
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)


def load_config_file(path: str) -> dict:
    """JSON object, or ``key = value`` lines whose values are JSON literals."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return data
    except json.JSONDecodeError:
        pass
    data = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            data[key] = json.loads(value)
        except json.JSONDecodeError:
            data[key] = value
    return data


def _grid_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or key = value file with ExperimentConfig fields")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--methods", type=lambda s: tuple(s.split(",")))
    p.add_argument("--out", help="output prefix; writes PREFIX.csv and PREFIX.jsonl")
    p.add_argument("--tol", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--rank-tol", type=float, dest="rank_tol")
    p.add_argument("--time-limit", type=float, dest="time_limit", help="seconds per solve")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--workers", type=int)
    p.add_argument("--sizes", type=_ints, help="m (fig1) or q (fig2) values, e.g. 8,16 or 2:30")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phaseless-sr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    f1 = sub.add_parser("fig1", help="success over separation x number of low frequencies")
    _grid_args(f1)
    f1.add_argument("--separations", type=_floats, help="comma list, fractions allowed (2/32,4/32)")
    f1.add_argument("--full", action="store_true", help="full-scale grid: 11 x 29 cells, 50 trials")
    f1.add_argument("--preset", choices=["k10"], help="k10: ten impulses on the separations that fit")

    f2 = sub.add_parser("fig2", help="success over random magnitude count x sparsity")
    _grid_args(f2)
    f2.add_argument("--ks", type=_ints)
    f2.add_argument("--separation", type=eval_fraction)
    f2.add_argument("--full", action="store_true", help="full-scale grid: q = 8..128, k = 1..6, 50 trials")

    rc = sub.add_parser("recover", help="recover one seeded instance and print a summary")
    rc.add_argument("--method", default=ex.PHASELESS_ANM, choices=ex.METHODS)
    rc.add_argument("--family", default=ex.MASKS, choices=[ex.MASKS, ex.RANDOM])
    rc.add_argument("--k", type=int, default=2)
    rc.add_argument("--separation", type=eval_fraction, default=0.25)
    rc.add_argument("--m", type=int, default=32)
    rc.add_argument("--q", type=int)
    rc.add_argument("--seed", type=int, default=0)
    rc.add_argument("--signal", help="JSON signal record {times, amps} instead of a seeded draw")
    rc.add_argument("--tol", type=float, default=ex.sdp.DEFAULT_TOL)
    rc.add_argument("--threshold", type=float, default=1e-3)
    rc.add_argument("--json", dest="json_out", help="write the diagnostic record here")

    sub.add_parser("selftest", help="quick end-to-end checks")
    return parser


# reduced grids used when no axis is given and --full is absent
FIG1_REDUCED = {"separations": (2 / 32, 4 / 32, 6 / 32, 8 / 32), "sizes": (8, 16, 24, 32), "trials": 10}
FIG2_REDUCED = {"sizes": (16, 32, 64), "ks": (1, 2, 3), "trials": 10}


def make_config(args, figure: str) -> ex.ExperimentConfig:
    data: dict = {}
    if not args.full:
        data.update(FIG1_REDUCED if figure == "fig1" else FIG2_REDUCED)
    if getattr(args, "preset", None) == "k10":
        data.update(ex.K10_PRESET)
    if args.config:
        data.update(load_config_file(args.config))
    for key in ("n", "k", "trials", "seed", "methods", "out", "tol", "threshold", "rank_tol",
                "time_limit", "max_iters", "workers", "sizes", "separations", "ks", "separation"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    try:
        cfg = ex.ExperimentConfig.from_mapping(data)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _print_grid(grid: ex.GridResult) -> None:
    print(",".join(ex.CSV_COLUMNS))
    for c in grid.cells:
        row = c.row()
        print(",".join(f"{row[k]:.6g}" if isinstance(row[k], float) else str(row[k]) for k in ex.CSV_COLUMNS))


def cmd_grid(args, figure: str) -> int:
    cfg = make_config(args, figure)
    try:
        grid = ex.run_fig1(cfg) if figure == "fig1" else ex.run_fig2(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    prefix = cfg.out or figure
    grid.write_csv(prefix + ".csv")
    grid.write_jsonl(prefix + ".jsonl")
    _print_grid(grid)
    if figure == "fig2" and {ex.PHASELESS_ANM, ex.PHASELIFT_ANM} <= set(grid.config.methods):
        rows = ex.paired_summary(grid)
        mean_a = np.mean([r[ex.PHASELESS_ANM] for r in rows])
        mean_b = np.mean([r[ex.PHASELIFT_ANM] for r in rows])
        print(f"# mean success: phaseless_anm {mean_a:.3f}, phaselift_anm {mean_b:.3f}")
    print(f"# wrote {prefix}.csv and {prefix}.jsonl", file=sys.stderr)
    return 0


def cmd_recover(args) -> int:
    if args.signal:
        try:
            with open(args.signal) as fh:
                truth = ImpulseSignal.from_dict(json.load(fh))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad signal file: {exc}") from exc
    else:
        try:
            truth = ex.draw_instance(args.k, args.separation, args.seed, args.m, guard=args.family == ex.MASKS)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if args.family == ex.RANDOM and args.q is None and args.method != ex.STANDARD_ANM:
        raise ConfigError("--family random needs --q")
    try:
        res = ex.recover_once(truth, args.method, args.family, args.m, args.q, args.seed, tol=args.tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    err = time_error(res.signal, truth) if res.ok else np.inf
    success = res.ok and err < args.threshold
    print(f"method      {res.method}")
    print(f"true times  {np.array2string(np.sort(truth.times), precision=8)}")
    print(f"est. times  {np.array2string(np.sort(res.signal.times), precision=8)}")
    print(f"time error  {err:.3e}  ({'success' if success else 'FAILED'}; threshold {args.threshold:g})")
    if res.reason:
        print(f"reason      {res.reason}")
    for i, s in enumerate(res.diagnostics.get("solves", [])):
        print(f"solve {i}     {s.get('status')} after {s.get('iterations')} iterations, "
              f"{s.get('seconds', 0):.2f} s, residual {s.get('certified_residual', float('nan')):.1e}")
    if args.json_out:
        record = {"truth": truth.to_dict(), "time_error": err, "success": success, **res.to_dict()}
        with open(args.json_out, "w") as fh:
            json.dump(ex._jsonable(record), fh, indent=1)
    return 0 if success else 1


def cmd_selftest() -> int:
    from .measurement import band_from_masks, theorem2_masks
    from .recovery import q_complete
    from .signal import fourier_synthesize

    checks = []
    sig = ex.draw_instance(2, 4 / 12, 7, 12, guard=True)
    X = fourier_synthesize(sig, 12)
    Q, _ = q_complete(band_from_masks(theorem2_masks(X)))
    checks.append(("band completion", np.allclose(Q, np.outer(X, X.conj()), atol=1e-10)))
    for method in (ex.STANDARD_ANM, ex.PHASELESS_ANM, ex.Q_COMPLETION):
        res = ex.recover_once(sig, method, ex.MASKS, 12)
        checks.append((f"{method} m=12", res.ok and time_error(res.signal, sig) < 1e-3))
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if all(ok for _, ok in checks) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("fig1", "fig2"):
            return cmd_grid(args, args.command)
        if args.command == "recover":
            return cmd_recover(args)
        return cmd_selftest()
    except ConfigError as exc:
        print(f"phaseless-sr: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

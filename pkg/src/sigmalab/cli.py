"""Command-line entry point ``sigma-lab``.

Exit codes: 0 success, 1 configuration error, 2 verification failure,
3 atlas anomaly (an expected failure was not observed or a control failed).
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import atlas as atlas_mod
from . import config as config_mod
from .config import ConfigError
from .gamma import GammaError, recovery_study, sine_mode
from .runner import certify, run
from .sbp import SatConfig
from .stochastic import LawError, ClockLaw, ledger_model, mc_expectation_envelope, poisson_law

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_ATLAS = 0, 1, 2, 3


def fmt(v) -> str:
    """Stable 12-significant-digit rendering used for every CSV cell."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v) + 0.0:.12g}"
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write atomically: temp file in the target directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _target(out: str | None, default_name: str) -> Path:
    """``--out`` may name a CSV file or a directory."""
    if out is None:
        return Path.cwd() / default_name
    p = Path(out)
    return p if p.suffix.lower() == ".csv" else p / default_name


class _Printer:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *msg) -> None:
        if not self.quiet:
            print(*msg)


# -- subcommands ------------------------------------------------------------------------------------


def _load(args) -> dict:
    if args.config and args.preset:
        raise ConfigError("give either a preset name or --config, not both")
    if args.config:
        cfg = config_mod.load(args.config)
    elif args.preset:
        cfg = config_mod.preset(args.preset)
    else:
        raise ConfigError("config is empty: missing required field 'scenario'")
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def cmd_run(args, say) -> int:
    cfg = _load(args)
    res = run(cfg)
    name = args.preset or Path(args.config).stem
    base = _target(args.out, f"{name}.csv")
    sidecar = lambda tag: base.with_name(f"{base.stem}_{tag}.csv")
    if res.table:
        write_csv(base, res.table_header, res.table)
    if res.trajectory is not None:
        write_csv(sidecar("trajectory"), ("t", "sigma", "energy", "event"), res.trajectory.rows())
    if res.report is not None:
        write_csv(sidecar("envelope"), res.report.csv_header(), [res.report.csv_row()])
        say(res.report.as_text())
    if res.master is not None:
        say(f"master decay: {'pass' if res.master.passed else 'fail'} (worst ratio {res.master.worst_ratio:.6g})")
    if res.oracle_error is not None:
        say(f"oracle relative error = {res.oracle_error:.3e}")
    return EXIT_OK if res.passed else EXIT_VERIFY


def cmd_certify(args, say) -> int:
    cfg = _load(args)
    cert = certify(cfg)
    name = args.preset or Path(args.config).stem
    write_csv(_target(args.out, f"{name}_certificate.csv"), ("check", "status", "witness"), [(c.name, c.status, c.witness) for c in cert.checks])
    say(cert.as_text())
    return EXIT_OK if cert.passed else EXIT_VERIFY


_GAMMA_FUNCS = {
    "sin": sine_mode(1),
    "sin2": sine_mode(2),
    "bump": (lambda x: 16 * np.asarray(x) ** 2 * (1 - np.asarray(x)) ** 2, lambda x: 32 * np.asarray(x) * (1 - np.asarray(x)) * (1 - 2 * np.asarray(x))),
    "zero": (lambda x: np.zeros_like(np.asarray(x, dtype=float)), lambda x: np.zeros_like(np.asarray(x, dtype=float))),
}


def cmd_gamma(args, say) -> int:
    if args.levels < 3:
        raise ConfigError("--levels must be at least 3")
    u, du = _GAMMA_FUNCS[args.u]
    h_list = [1.0 / (16 * 2**k) for k in range(1, args.levels + 1)]
    study = recovery_study(u, du, h_list, sat=SatConfig(tau_scale=args.tau_scale, exponent=args.exponent), order=args.order)
    write_csv(_target(args.out, "gamma_study.csv"), ("h", "energy", "error", "sat_residue"), study.rows())
    say(f"reference energy = {study.reference:.12g}")
    say(f"energy error slope = {study.energy_slope:.4f}, SAT residue slope = {study.residue_slope:.4f}")
    say(f"study {'passed' if study.passed else 'failed'}")
    return EXIT_OK if study.passed else EXIT_VERIFY


def cmd_stochastic(args, say) -> int:
    if args.law == "poisson":
        law = poisson_law(args.rate, args.alpha, args.base_density)
    else:
        q = args.switch_rate
        law = ClockLaw("markov", base_density=args.base_density, generator=((-q, q), (q, -q)), levels=(args.low, args.high))
    model = ledger_model(args.kappa, args.c_sigma, args.ac_rate)
    seed = args.seed if args.seed is not None else 0
    rep = mc_expectation_envelope(model, law, args.kappa, args.c_sigma, args.T, args.paths, seed, delta=args.delta, eta=args.eta)
    write_csv(_target(args.out, "stochastic.csv"), ("t", "mean_E", "ci_lo", "ci_hi", "envelope"), rep.rows())
    say(f"expectation envelope: {rep.outcome} over {rep.n_paths} paths")
    return EXIT_VERIFY if rep.outcome == "fail" else EXIT_OK


def cmd_atlas(args, say) -> int:
    if args.all or not args.scenario:
        names = list(atlas_mod.SCENARIOS)
    else:
        names = args.scenario
    reports = atlas_mod.run_atlas(names)
    rows = []
    for r in reports:
        for scen, key, val in r.csv_rows():
            rows.append((scen, fmt(r.observed), fmt(r.control_passed), key, _flatten(val)))
        say(f"{r.scenario:<24} observed={fmt(r.observed):<5} control={fmt(r.control_passed)}")
    write_csv(_target(args.out, "atlas.csv"), ("scenario", "observed", "control_passed", "witness", "value"), rows)
    return EXIT_OK if all(r.healthy for r in reports) else EXIT_ATLAS


def _flatten(v) -> str:
    if isinstance(v, dict):
        return ";".join(f"{k}={_flatten(x)}" for k, x in v.items())
    if isinstance(v, (list, tuple)):
        return ";".join(_flatten(x) for x in v)
    return fmt(v)


def numbers_table() -> list[tuple[str, str, float, str, str]]:
    """Baseline constants, values rounded to the CSV precision so a read-back is exact."""
    return [(k, s, float(fmt(v)), note, prov) for k, s, v, note, prov in config_mod.NUMBERS]


def read_numbers(path: Path) -> list[tuple[str, str, float, str, str]]:
    return [(r["key"], r["symbol"], float(r["value"]), r["note"], r["provenance"]) for r in read_csv(path)]


def cmd_numbers(args, say) -> int:
    path = write_csv(_target(args.out, "numbers.csv"), ("key", "symbol", "value", "note", "provenance"), numbers_table())
    say(f"wrote {path}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory, or a .csv file path")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--quiet", action="store_true", help="suppress console output")

    p = argparse.ArgumentParser(prog="sigma-lab", description="Energy-ledger experiments on measure-time clocks.")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (("run", cmd_run, "integrate a scenario and check its envelope"), ("certify", cmd_certify, "run the certification checklist")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("preset", nargs="?", choices=sorted(config_mod.PRESETS), help="built-in configuration")
        sp.add_argument("--config", help="YAML or JSON configuration file")
        sp.set_defaults(func=fn)

    g = sub.add_parser("gamma-study", parents=[common], help="discrete energy convergence study")
    g.add_argument("--u", choices=sorted(_GAMMA_FUNCS), default="sin")
    g.add_argument("--levels", type=int, default=4)
    g.add_argument("--order", type=int, choices=(2, 4), default=2)
    g.add_argument("--tau-scale", type=float, default=1.0)
    g.add_argument("--exponent", type=float, default=1.0)
    g.set_defaults(func=cmd_gamma)

    s = sub.add_parser("stochastic", parents=[common], help="Monte-Carlo expectation envelope")
    s.add_argument("--law", choices=("poisson", "markov"), default="poisson")
    s.add_argument("--rate", type=float, default=2.0)
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--base-density", type=float, default=0.5)
    s.add_argument("--switch-rate", type=float, default=20.0)
    s.add_argument("--low", type=float, default=0.0)
    s.add_argument("--high", type=float, default=0.6)
    s.add_argument("--T", type=float, default=4.0)
    s.add_argument("--paths", type=int, default=10_000)
    s.add_argument("--kappa", type=float, default=1.0)
    s.add_argument("--c-sigma", type=float, default=0.15)
    s.add_argument("--ac-rate", type=float, default=0.6, help="true energy decay per unit a.c. clock mass (damping 0.3)")
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--eta", type=float, default=0.0)
    s.set_defaults(func=cmd_stochastic)

    a = sub.add_parser("atlas", parents=[common], help="failure atlas")
    a.add_argument("--all", action="store_true")
    a.add_argument("--scenario", action="append", choices=sorted(atlas_mod.SCENARIOS))
    a.set_defaults(func=cmd_atlas)

    n = sub.add_parser("numbers", parents=[common], help="write the baseline constants table")
    n.set_defaults(func=cmd_numbers)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    say = _Printer(args.quiet)
    try:
        return args.func(args, say)
    except (ConfigError, LawError, GammaError, atlas_mod.AtlasError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command line: generate datasets, run experiments and sweeps, verify guarantees."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import asdict, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import oracles
from .datasets import TIME_UNITS, save_jsonl
from .dpm import IBM_HDD, TWO_STATE
from .experiments import ConfigError, generate, load_config, run_experiment, summarize

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SWEEP_COLUMNS = ["dataset", "system", "algorithm", "rho", "predictor", "sigma", "prudent", "seed", "ratio"]
SUMMARY_COLUMNS = ["dataset", "system", "algorithm", "rho", "predictor", "sigma", "prudent",
                   "mean_ratio", "std_ratio", "repeats"]


def resolve_config(name: str):
    """A path, or the name of a shipped config such as ``psk4``."""
    if Path(name).exists():
        return load_config(name)
    shipped = resources.files("skidpm") / "configs" / f"{name}.toml"
    if shipped.is_file():
        with resources.as_file(shipped) as p:
            return load_config(p)
    raise ConfigError(f"no config file or shipped config named {name!r}")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(records: list[dict], columns: list[str], digest: str, out: Optional[str]) -> None:
    buf = io.StringIO()
    buf.write(f"# config_sha256={digest}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        writer.writerow([_cell(rec[c]) for c in columns])
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def read_csv(path: str) -> tuple[str, list[dict]]:
    lines = Path(path).read_text().splitlines()
    digest = ""
    if lines and lines[0].startswith("#"):
        digest = lines[0].split("=", 1)[-1]
        lines = lines[1:]
    return digest, list(csv.DictReader(lines))


def _load(args):
    cfg = resolve_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "no_prudent", False):
        cfg = replace(cfg, prudent=(False,))
    if getattr(args, "repeats", None) is not None:
        cfg = replace(cfg, repeats=args.repeats)
    if getattr(args, "path", None):
        unit = args.unit or cfg.dataset.unit
        if not unit:
            raise ConfigError("--path needs --unit (s, ms, us or ns)")
        cfg = replace(cfg, dataset=replace(cfg.dataset, kind="trace", path=args.path, unit=unit))
    elif getattr(args, "unit", None):
        raise ConfigError("--unit only applies together with --path")
    return cfg


def cmd_gen(args) -> int:
    cfg = _load(args)
    ds = generate(cfg, sigma=args.sigma)
    out = args.out or f"{cfg.name}-seed{cfg.seed}.jsonl"
    save_jsonl(ds, out)
    print(f"wrote {len(ds)} periods to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    rows = run_experiment(cfg, args.parallel)
    write_csv([asdict(r) for r in rows], SWEEP_COLUMNS, cfg.digest, args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    write_csv(summarize(run_experiment(cfg, args.parallel)), SUMMARY_COLUMNS, cfg.digest, args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    """Mean and standard deviation per cell of a sweep CSV."""
    try:
        digest, rows = read_csv(args.input)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.input}: {exc}")
    if not rows or "ratio" not in rows[0]:
        raise ConfigError(f"{args.input} is not a sweep CSV")
    key_cols = SUMMARY_COLUMNS[:7]
    cells: dict = {}
    for r in rows:
        cells.setdefault(tuple(r[c] for c in key_cols), []).append(float(r["ratio"]))
    records = []
    for key, ratios in cells.items():
        arr = np.array(ratios)
        rec = dict(zip(key_cols, key))
        rec.update(mean_ratio=float(arr.mean()),
                   std_ratio=float(arr.std(ddof=1)) if len(arr) > 1 else 0.0, repeats=len(arr))
        records.append(rec)
    write_csv(records, SUMMARY_COLUMNS, digest, args.out)
    return EXIT_OK


def verify(scope: str = "all", fineness: float = 1.0, perturb_mu: float = 0.0,
           out=None) -> bool:
    """Run the oracle sweeps and print one line per check; True iff all pass."""
    out = out or sys.stdout
    step = 0.05 / fineness
    rhos = oracles.default_rho_grid(step)
    taus, xs = oracles.grid(0, 3, step), oracles.grid(0, 5, step)
    results = []
    if scope in ("ski", "all"):
        results += [
            ("competitiveness mu(rho)", oracles.competitiveness_sweep(rhos, taus, xs, "mu", -perturb_mu)),
            ("competitiveness mu_tau(rho)",
             oracles.competitiveness_sweep(rhos, taus, xs, "mu_tau", -perturb_mu)),
            ("monotone CDFs in tau", oracles.monotonicity_check(rhos, taus, oracles.grid(0, 5, step / 5))),
            ("mu_tau <= mu", oracles.dominance_check(rhos, taus)),
        ]
        for eps in (0.1, 1.0):
            results.append((f"bounded variant eps={eps}",
                            oracles.competitiveness_sweep(rhos, taus, oracles.grid(0, 3 + 1 / eps + 2, step),
                                                          "mu", -perturb_mu, 1 + eps, 3 + 1 / eps)))
        worst = max((oracles.tightness_check(r, t) for r in rhos[:-1] for t in taus[::4]),
                    key=lambda rep: rep.max_abs_deviation)
        results.append(("tightness", oracles.SweepResult(worst.max_abs_deviation,
                                                         {"rho": float(worst.rho), "tau": float(worst.tau), "case": worst.case})))
    if scope in ("dpm", "all"):
        dstep = 0.25 / fineness
        grid_l = oracles.grid(0, 10, dstep)
        for name, system in (("two-state", TWO_STATE), ("IBM", IBM_HDD)):
            results.append((f"DPM reduction {name}",
                            oracles.dpm_reduction_sweep(system, rhos, grid_l, grid_l,
                                                        mu_offset=-perturb_mu)))
        rep = oracles.prudence_check(IBM_HDD)
        results.append(("prudent vectors", oracles.SweepResult(max(rep.wakeup_error, rep.rate_increase),
                                                               {"checked": rep.checked}, rep.checked, 1e-12)))
    ok = True
    for name, res in results:
        status = "PASS" if res.passed else "FAIL"
        ok &= res.passed
        print(f"{status} {name}: max violation {res.max_violation:.3e} (tol {res.tol:g}) at {res.worst}",
              file=out)
    return ok


def cmd_verify(args) -> int:
    return EXIT_OK if verify(args.scope, args.fineness, args.perturb_mu) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skidpm", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def experiment_args(sp, out_help):
        sp.add_argument("--config", required=True, help="config path or shipped name (psk4, psk8, trace)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--path", help="read idle periods from this trace file instead")
        sp.add_argument("--unit", choices=sorted(TIME_UNITS), help="time unit of the trace timestamps")

    g = sub.add_parser("gen", help="write a JSONL idle-period dataset")
    experiment_args(g, "output JSONL path")
    g.add_argument("--sigma", type=float, help="attach noisy predictions with this standard deviation")
    g.set_defaults(func=cmd_gen)

    for name, func, doc in (("run", cmd_run, "mean and std of the ratio per cell"),
                            ("sweep", cmd_sweep, "one ratio per cell and seed")):
        sp = sub.add_parser(name, help=doc)
        experiment_args(sp, "output CSV path (default stdout)")
        sp.add_argument("--no-prudent", action="store_true", help="disable the prudent conversion")
        sp.add_argument("--parallel", type=int, default=1, help="worker processes")
        sp.add_argument("--repeats", type=int, help="override the number of repeats")
        sp.set_defaults(func=func)

    v = sub.add_parser("verify", help="check the guarantees numerically")
    v.add_argument("--scope", choices=["ski", "dpm", "all"], default="all")
    v.add_argument("--fineness", type=float, default=1.0, help="grid density multiplier")
    v.add_argument("--perturb-mu", type=float, default=0.0,
                   help="lower mu by this amount (negative control; should fail)")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="summarise a sweep CSV")
    r.add_argument("input")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

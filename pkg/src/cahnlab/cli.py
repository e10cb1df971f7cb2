"""Command line entry point: ``cahnlab {simulate,sweep,consistency,poincare,selftest}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 self-test failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, parse_config
from .dynamics import IntegrationError, read_checkpoint, run, write_checkpoint
from .kernel import build_kernel, dump_kernel
from .lab import (
    check_b1_smallness,
    initial_data,
    operator_consistency_study,
    poincare_study,
    run_sweep,
    write_consistency_csv,
)
from .oracles import selftest

log = logging.getLogger("cahnlab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_SELFTEST = 0, 2, 3, 4


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8", newline="\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_simulate(cfg: RunConfig, out: Path, resume: str | None) -> int:
    grid = cfg.grid()
    p = cfg.potential()
    solver = cfg.solver()
    t0 = 0.0
    if resume:
        u0, header = read_checkpoint(resume)
        if u0.grid != grid:
            raise ConfigError(f"checkpoint grid {u0.grid} does not match configured grid")
        t0 = float(header["t"])
        if not t0 < cfg["solver.t_end"]:
            raise ConfigError(f"solver.t_end: must exceed checkpoint time {t0:g}")
        log.info("resuming from %s at t=%g", resume, t0)
    else:
        u0 = initial_data(grid, cfg["initial.kind"], cfg["initial.seed"], cfg["initial.amplitude"])
    if cfg["simulate.scheme"] == "local":
        scheme, eps = "local", None
    else:
        eps = cfg["kernel.eps"]
        scheme = build_kernel(cfg.mollifier(), eps, grid, cfg["kernel.sampling"])
        if cfg["output.kernel_dump"]:
            with open(out / "kernel.csv", "w", newline="\n") as fh:
                dump_kernel(scheme, fh)
    rep = run(u0, scheme, p, solver, t0=t0)
    with open(out / "run.csv", "w", newline="\n") as fh:
        rep.write_csv(fh)
    write_checkpoint(out / "checkpoint.bin", rep.final_state, rep.times[-1],
                     cfg["simulate.scheme"], eps, p)
    _write(out / "run_summary.json", _json({
        "scheme": cfg["simulate.scheme"],
        "eps": eps,
        "t_final": float(rep.times[-1]),
        "max_mass_drift": rep.max_mass_drift,
        "max_energy_increase": rep.max_energy_increase,
        "energy_identity_defect": rep.energy_identity_defect,
        "max_overshoot": rep.max_overshoot,
    }))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    plan = cfg.sweep_plan()
    rep = run_sweep(plan, workers=cfg.workers())
    with open(out / "sweep.csv", "w", newline="\n") as fh:
        rep.write_csv(fh, timing=cfg["output.timing"])
    with open(out / "summary.json", "w", newline="\n") as fh:
        rep.write_json(fh)
    for r in rep.rows:
        log.info("eps=%g err_L2H1=%.3e err_CdualH1=%.3e gap=%.3e (%.2fs)",
                 r.eps, r.err_L2H1, r.err_CdualH1, r.energy_gap, r.runtime_seconds)
    if not rep.valid:
        log.error("sweep invalid: %s", rep.failure)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_consistency(cfg: RunConfig, out: Path) -> int:
    study = operator_consistency_study(cfg.mollifier(), cfg.grid(), cfg["sweep.eps_list"],
                                       sampling=cfg["kernel.sampling"])
    with open(out / "consistency.csv", "w", newline="\n") as fh:
        write_consistency_csv(study, fh)
    _write(out / "consistency.json", _json({"c_eff": study["c_eff"], "rates": study["rates"]}))
    return EXIT_OK


def cmd_poincare(cfg: RunConfig, out: Path) -> int:
    grids = [cfg.grid(), cfg.grid(2 * cfg["grid.n"])]
    res = poincare_study(cfg.mollifier(), grids, cfg["poincare.eps"], cfg["poincare.samples"],
                         cfg["initial.seed"], cfg["poincare.max_mode"], cfg["kernel.sampling"])
    ratios = list(res["max_ratio"].values())
    res["relative_change"] = abs(ratios[1] - ratios[0]) / ratios[0]
    res["b1_small"] = check_b1_smallness(cfg.potential(), res["C_p_est"])
    res["max_ratio"] = {str(k): v for k, v in res["max_ratio"].items()}
    _write(out / "poincare.json", _json(res))
    return EXIT_OK


def cmd_selftest(out: Path) -> int:
    rows = selftest()
    lines = [f"{'PASS' if ok else 'FAIL'} {name} rel_err={err:.3e}" for name, err, ok in rows]
    text = "\n".join(lines) + "\n"
    _write(out / "selftest.txt", text)
    sys.stdout.write(text)
    return EXIT_OK if all(ok for _, _, ok in rows) else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cahnlab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=["simulate", "sweep", "consistency", "poincare", "selftest"])
    ap.add_argument("-c", "--config", help="key = value configuration file")
    ap.add_argument("-o", "--output-dir", help="overrides output.dir")
    ap.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a configuration key (repeatable)")
    ap.add_argument("--resume", help="checkpoint to continue from (simulate only)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
        overrides = {}
        for item in args.set:
            key, sep, val = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key.strip()] = val
        if args.output_dir:
            overrides["output.dir"] = args.output_dir
        cfg = parse_config(text, overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=cfg["runtime.log_level"], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.resolved", cfg.render())
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.resume)
        if args.command == "sweep":
            return cmd_sweep(cfg, out)
        if args.command == "consistency":
            return cmd_consistency(cfg, out)
        if args.command == "poincare":
            return cmd_poincare(cfg, out)
        return cmd_selftest(out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as exc:
        log.error("numerical failure (%s) at step %d, t=%.6g: %s", exc.kind, exc.step, exc.time, exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

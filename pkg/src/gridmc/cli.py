"""Command-line front end.

Three subcommands: `solve` (deterministic power flow), `mc` (Monte Carlo
study), and `contingency` (outage screening).  Options come from an INI
config file (section/key pairs) overridden by command-line flags; every
run that writes to an output directory also writes a config echo that
reproduces it.  Exit codes: 0 success, 1 usage or configuration error,
2 solver non-convergence, 3 infeasible base case.

Human-readable output prints angles in degrees; machine formats (JSON/CSV)
carry radians and per-unit throughout.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .circuit import CaseIndex
from .contingency import (ContingencySpec, risk_table_csv, risk_table_rows,
                          risk_table_text, run_contingency_study)
from .matpower import parse_matpower
from .montecarlo import (CITarget, ConfigError, ProbeSpec, StudyConfig,
                         UncertaintySpec, run_study)
from .network import (BranchOutage, GeneratorOutage, GridError, NetworkCase,
                      validate)
from .solver import LimitSpec, OperatingClass, SolverOptions, robust_solve

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_BASE_INFEASIBLE = 3

OUT_ENV_VAR = "GRIDMC_OUT"


def _package_version() -> str:
    try:
        from importlib.metadata import version
        return version("gridmc")
    except Exception:
        return "unknown"


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="gridmc",
                                  description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version",
                     version=f"gridmc {_package_version()}")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_study: bool) -> None:
        p.add_argument("--case", help="MATPOWER case file")
        p.add_argument("--config", help="INI config file; flags override it")
        p.add_argument("--out", help=f"output directory (default from "
                                     f"${OUT_ENV_VAR})")
        p.add_argument("--format", choices=["json", "csv", "text"],
                       action="append", dest="formats",
                       help="output formats, repeatable (default: all)")
        p.add_argument("--no-txstep", action="store_true",
                       help="disable the continuation fallback")
        p.add_argument("--angle-max-deg", type=float,
                       help="branch angle-difference limit in degrees")
        p.add_argument("--vmin", type=float, help="override every bus v_min")
        p.add_argument("--vmax", type=float, help="override every bus v_max")
        if with_study:
            p.add_argument("--seed", type=int, help="study seed")
            p.add_argument("--samples", type=int, help="sample cap")
            p.add_argument("--sigma-pct", type=float,
                           help="normal load perturbation width, percent")
            p.add_argument("--uniform-pct", type=float,
                           help="uniform load perturbation half-range, percent")
            p.add_argument("--workers", type=int, help="worker thread count")
            p.add_argument("--probe", action="append", dest="probes",
                           help="record quantity, e.g. angle:1-2 or voltage:14")

    p_solve = sub.add_parser("solve", help="deterministic power flow")
    p_solve.add_argument("case_path", nargs="?", help="MATPOWER case file")
    common(p_solve, with_study=False)

    p_mc = sub.add_parser("mc", help="Monte Carlo load-uncertainty study")
    common(p_mc, with_study=True)

    p_ctg = sub.add_parser("contingency", help="outage screening study")
    common(p_ctg, with_study=True)
    return top


def _read_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        cfg.read(path)
    return cfg


def _cfg_get(cfg, section, key, cast, fallback=None):
    if cfg.has_option(section, key):
        raw = cfg.get(section, key)
        try:
            if cast is bool:
                return cfg.getboolean(section, key)
            return cast(raw)
        except ValueError as exc:
            raise ConfigError(f"bad [{section}] {key} = {raw!r}: {exc}")
    return fallback


def _solver_options(cfg, args) -> SolverOptions:
    opts = SolverOptions(
        tol=_cfg_get(cfg, "solver", "tol", float, 1e-8),
        max_iter=_cfg_get(cfg, "solver", "max_iter", int, 50),
        v_limit_delta=_cfg_get(cfg, "solver", "v_limit_delta", float, 0.1),
        tx_steps=_cfg_get(cfg, "solver", "tx_steps", int, 20),
        tx_g_init=_cfg_get(cfg, "solver", "tx_g_init", float, 1e3),
        tx_schedule=_cfg_get(cfg, "solver", "tx_schedule", str, "geometric"),
        use_tx_stepping=_cfg_get(cfg, "solver", "use_tx_stepping", bool, True),
        q_limit_rounds=_cfg_get(cfg, "solver", "q_limit_rounds", int, 10),
    )
    if getattr(args, "no_txstep", False):
        opts = replace(opts, use_tx_stepping=False)
    if opts.tol <= 0 or opts.max_iter < 1 or opts.v_limit_delta <= 0 \
            or opts.tx_g_init <= 0:
        raise ConfigError("solver options out of range")
    return opts


def _limits(cfg, args) -> LimitSpec:
    deg = _cfg_get(cfg, "limits", "angle_max_deg", float, 90.0)
    if args.angle_max_deg is not None:
        deg = args.angle_max_deg
    if not 0.0 < deg <= 180.0:
        raise ConfigError(f"angle limit must be in (0, 180] degrees, got {deg}")
    return LimitSpec(
        angle_max=math.radians(deg),
        enforce_v_band=_cfg_get(cfg, "limits", "enforce_v_band", bool, True),
        enforce_branch_rating=_cfg_get(cfg, "limits", "enforce_branch_rating",
                                       bool, True),
    )


def _load_case(cfg, args, positional=None) -> NetworkCase:
    path = positional or args.case or _cfg_get(cfg, "case", "path", str)
    if not path:
        raise ConfigError("no case file given (positional, --case, or "
                          "[case] path)")
    if not Path(path).exists():
        raise ConfigError(f"case file not found: {path}")
    case = parse_matpower(Path(path).read_text())
    vmin = args.vmin if args.vmin is not None \
        else _cfg_get(cfg, "limits", "vmin", float)
    vmax = args.vmax if args.vmax is not None \
        else _cfg_get(cfg, "limits", "vmax", float)
    if vmin is not None or vmax is not None:
        buses = tuple(replace(b,
                              v_min=vmin if vmin is not None else b.v_min,
                              v_max=vmax if vmax is not None else b.v_max)
                      for b in case.buses)
        case = replace(case, buses=buses)
    return case


def _uncertainty(cfg, args) -> UncertaintySpec:
    sigma = args.sigma_pct
    unif = args.uniform_pct
    if sigma is not None and unif is not None:
        raise ConfigError("--sigma-pct and --uniform-pct are exclusive")
    if sigma is not None:
        dist, pct = "normal", sigma
    elif unif is not None:
        dist, pct = "uniform", unif
    else:
        dist = _cfg_get(cfg, "uncertainty", "distribution", str, "normal")
        pct = _cfg_get(cfg, "uncertainty", "pct", float, 1.0)
    buses = None
    raw = _cfg_get(cfg, "uncertainty", "buses", str)
    if raw:
        buses = tuple(int(tok) for tok in raw.split())
    return UncertaintySpec(dist, pct, buses)


def _parse_probe(token: str) -> ProbeSpec:
    kind, _, rest = token.partition(":")
    try:
        if kind == "angle":
            a, b = rest.split("-")
            return ProbeSpec("branch_angle", int(a), int(b))
        if kind == "voltage":
            return ProbeSpec("bus_voltage", int(rest))
    except ValueError:
        pass
    raise ConfigError(f"bad probe '{token}' (want angle:A-B or voltage:N)")


def _study_config(cfg, args) -> StudyConfig:
    seed = args.seed if args.seed is not None \
        else _cfg_get(cfg, "study", "seed", int, 1)
    samples = args.samples if args.samples is not None \
        else _cfg_get(cfg, "study", "samples", int, 1000)
    workers = args.workers if args.workers is not None \
        else _cfg_get(cfg, "study", "workers", int, 1)
    if samples < 1 or workers < 1:
        raise ConfigError("samples and workers must be positive")
    probes: list[ProbeSpec] = []
    raw = _cfg_get(cfg, "study", "probes", str)
    if raw:
        probes += [_parse_probe(tok) for tok in raw.split()]
    for tok in (getattr(args, "probes", None) or []):
        probes.append(_parse_probe(tok))
    target = None
    outcome = _cfg_get(cfg, "study", "ci_outcome", str)
    if outcome:
        try:
            oc = OperatingClass(outcome)
        except ValueError:
            raise ConfigError(f"unknown ci_outcome '{outcome}'")
        target = CITarget(
            oc,
            _cfg_get(cfg, "study", "ci_level", int, 99),
            _cfg_get(cfg, "study", "ci_half_width", float, 0.01))
    return StudyConfig(max_samples=samples, seed=seed, workers=workers,
                       ci_target=target, probes=tuple(probes),
                       check_every=_cfg_get(cfg, "study", "check_every",
                                            int, 100))


def _contingency_spec(cfg) -> ContingencySpec:
    explicit: list[tuple] = []
    raw = _cfg_get(cfg, "contingency", "explicit", str)
    if raw:
        for set_tok in raw.split(","):
            outages = []
            for tok in set_tok.split():
                if tok.startswith("G"):
                    outages.append(GeneratorOutage(int(tok[1:])))
                elif tok.startswith("B"):
                    body, _, ordn = tok[1:].partition("#")
                    f, t = body.split("-")
                    outages.append(BranchOutage(int(f), int(t),
                                                int(ordn) if ordn else 0))
                else:
                    raise ConfigError(f"bad outage token '{tok}'")
            if outages:
                explicit.append(tuple(outages))
    return ContingencySpec(
        n1_generators=_cfg_get(cfg, "contingency", "n1_generators", int, 0),
        n2_generators=_cfg_get(cfg, "contingency", "n2_generators", int, 0),
        n1_branches=_cfg_get(cfg, "contingency", "n1_branches", int, 0),
        n2_gen_branch=(_cfg_get(cfg, "contingency", "n2_gen_k", int, 0),
                       _cfg_get(cfg, "contingency", "n2_gen_j", int, 0)),
        explicit=tuple(explicit),
    )


def _out_dir(args) -> Path | None:
    path = args.out or os.environ.get(OUT_ENV_VAR)
    if not path:
        return None
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _formats(args) -> set[str]:
    return set(args.formats) if args.formats else {"json", "csv", "text"}


def _write(path: Path, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    path.write_text(text, encoding="utf-8")


def _config_echo_text(command: str, case_path: str | None, opts: SolverOptions,
                      limits: LimitSpec, extra: dict) -> str:
    lines = [f"# gridmc {_package_version()} config echo",
             f"[run]", f"command = {command}"]
    if case_path:
        lines.append(f"case = {case_path}")
    lines += ["", "[solver]"]
    for k in ("tol", "max_iter", "v_limit_delta", "tx_steps", "tx_g_init",
              "tx_schedule", "use_tx_stepping", "q_limit_rounds"):
        lines.append(f"{k} = {getattr(opts, k)}")
    lines += ["", "[limits]",
              f"angle_max_deg = {math.degrees(limits.angle_max)!r}",
              f"enforce_v_band = {limits.enforce_v_band}",
              f"enforce_branch_rating = {limits.enforce_branch_rating}"]
    for section, kv in extra.items():
        lines += ["", f"[{section}]"]
        lines += [f"{k} = {v}" for k, v in kv.items()]
    return "\n".join(lines) + "\n"


def cmd_solve(args) -> int:
    cfg = _read_config(args.config)
    case = _load_case(cfg, args, args.case_path)
    opts = _solver_options(cfg, args)
    problems = validate(case)
    if problems:
        for p in problems:
            print(f"invalid case: {p}", file=sys.stderr)
        return EXIT_USAGE

    index = CaseIndex(case)
    trace: list[str] = []
    sol = robust_solve(index, None, opts, trace=trace)

    vm = np.hypot(sol.state.v_real, sol.state.v_imag)
    va = np.degrees(np.arctan2(sol.state.v_imag, sol.state.v_real))
    print(f"case {case.name}: {'converged' if sol.converged else 'FAILED'} "
          f"in {sol.iterations} iterations"
          + (" (continuation)" if sol.used_tx_stepping else "")
          + f", residual {sol.residual_norm:.3e}")
    if sol.q_limit_switches:
        clamped = ", ".join(f"bus {s.bus} at {s.side}"
                            for s in sol.q_limit_switches)
        print(f"reactive limits binding: {clamped}")
    print(f"{'bus':>6} {'|V| pu':>9} {'angle deg':>10}")
    for i, b in enumerate(index.buses):
        print(f"{b.id:>6} {vm[i]:>9.4f} {va[i]:>10.3f}")
    print(f"{'gen bus':>8} {'P pu':>9} {'Q pu':>9}")
    sp = index.slack_power(sol.state)
    print(f"{index.buses[index.slack].id:>8} {sp.real:>9.4f} {sp.imag:>9.4f}")
    for k, p in enumerate(index.pv):
        print(f"{index.buses[int(p)].id:>8} {index.pv_p[k]:>9.4f} "
              f"{sol.state.q_gen[k]:>9.4f}")

    if not sol.converged:
        print(f"diagnostic: {sol.diagnostic}", file=sys.stderr)
        for line in trace[-10:]:
            print(f"trace: {line}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_mc(args) -> int:
    cfg = _read_config(args.config)
    case = _load_case(cfg, args)
    opts = _solver_options(cfg, args)
    limits = _limits(cfg, args)
    spec = _uncertainty(cfg, args)
    config = _study_config(cfg, args)

    report = run_study(case, spec, config, opts, limits)
    print(report.to_text(), end="")

    out = _out_dir(args)
    if out is not None:
        fmts = _formats(args)
        if "json" in fmts:
            _write(out / "report.json", report.to_json())
        if "text" in fmts:
            _write(out / "report.txt", report.to_text())
        if "csv" in fmts:
            _write(out / "ledger.csv", report.ledger_csv())
            if report.histograms:
                _write(out / "histograms.csv", report.histograms_csv())
        echo = _config_echo_text(
            "mc", args.case or _cfg_get(cfg, "case", "path", str), opts,
            limits, {
                "uncertainty": {"distribution": spec.distribution,
                                "pct": spec.pct,
                                "buses": " ".join(map(str, spec.buses or []))},
                "study": {"samples": config.max_samples, "seed": config.seed,
                          "workers": config.workers,
                          "check_every": config.check_every,
                          "probes": " ".join(p.label for p in config.probes)},
            })
        _write(out / "config_echo.ini", echo)
        print(f"outputs written to {out}")

    if not report.base_feasible:
        print(f"base case infeasible: {report.diagnostic}", file=sys.stderr)
        return EXIT_BASE_INFEASIBLE
    return EXIT_OK


def cmd_contingency(args) -> int:
    cfg = _read_config(args.config)
    case = _load_case(cfg, args)
    opts = _solver_options(cfg, args)
    limits = _limits(cfg, args)
    spec = _uncertainty(cfg, args)
    config = _study_config(cfg, args)
    cspec = _contingency_spec(cfg)

    results = run_contingency_study(case, cspec, spec, config, opts, limits)
    print(risk_table_text(results), end="")

    out = _out_dir(args)
    if out is not None:
        fmts = _formats(args)
        if "json" in fmts:
            payload = json.dumps(risk_table_rows(results), sort_keys=True,
                                 indent=2) + "\n"
            _write(out / "risk_table.json", payload)
            for i, r in enumerate(results, 1):
                _write(out / f"contingency_{i:03d}.json", r.report.to_json())
        if "csv" in fmts:
            _write(out / "risk_table.csv", risk_table_csv(results))
        if "text" in fmts:
            _write(out / "risk_table.txt", risk_table_text(results))
        echo = _config_echo_text(
            "contingency", args.case or _cfg_get(cfg, "case", "path", str),
            opts, limits, {
                "uncertainty": {"distribution": spec.distribution,
                                "pct": spec.pct},
                "study": {"samples": config.max_samples, "seed": config.seed,
                          "workers": config.workers},
                "contingency": {
                    "n1_generators": cspec.n1_generators,
                    "n2_generators": cspec.n2_generators,
                    "n1_branches": cspec.n1_branches,
                    "n2_gen_k": cspec.n2_gen_branch[0],
                    "n2_gen_j": cspec.n2_gen_branch[1],
                },
                "seeds": {f"c{i}": r.seed for i, r in enumerate(results, 1)},
            })
        _write(out / "config_echo.ini", echo)
        print(f"outputs written to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the documented contract is 1
        if exc.code not in (0, None):
            return EXIT_USAGE
        return EXIT_OK
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "mc":
            return cmd_mc(args)
        if args.command == "contingency":
            return cmd_contingency(args)
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, GridError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

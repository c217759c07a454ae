"""Command-line runs: minimize, verify, sweeps and fixed-density scans.

Configuration is an INI file with sections ``potential``, ``grid``,
``solver``, ``physics`` and ``output``; ``--set section.key=value``
overrides single entries. Every output file carries the resolved
configuration. Exit codes: 0 success, 1 convergence or property failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import solver as slv
from . import verify as ver
from .functional import DomainError, evaluate, load_state, save_state
from .grid import build_grid, build_kernel
from .potential import AdmissibilityError, PotentialSpec

log = logging.getLogger("bogoliubov")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "potential": {"family": "gaussian", "amplitude": "1.0", "width": "1.0", "rate": "1.0", "table_path": ""},
    "grid": {"n": "1024", "pmax": "12.0", "scheme": "clustered", "pivot": "none"},
    "solver": {
        "kappa": "none", "damping": "0.5", "max_halvings": "4", "clamp": "1e-8",
        "step_init": "1.0", "backtrack": "0.5", "armijo": "1e-4", "min_step": "1e-14",
        "tol_grad": "1e-9", "tol_energy": "1e-12", "max_iter": "5000", "engine": "fixed_point",
        "init": "vacuum", "trial_gamma0": "10.0", "trial_eps": "0.1", "init_file": "",
        "warm_start": "true", "stabilization_tol": "1e-8",
    },
    # physics has no defaults: the keys present select the run mode
    "physics": {},
    "output": {"directory": "out", "formats": "json,csv,state"},
}
PHYSICS_KEYS = ("mu", "mu_list", "kappa_list", "lambda", "lambda_list", "rho0", "rho0_list")
FORMATS = ("json", "csv", "state")
DEFAULT_MU = 1.0


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


# -- configuration ----------------------------------------------------------------

def _parse_float(text: str, key: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _parse_list(text: str, key: str) -> list[float]:
    body = text.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    items = [s for s in body.replace(",", " ").split() if s]
    if not items:
        raise ConfigError(f"{key}: empty list")
    return [_parse_float(s, key) for s in items]


def _parse_bool(text: str, key: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def load_config(path=None, overrides=(), base: dict | None = None) -> configparser.ConfigParser:
    """Defaults, then ``base`` (a resolved config), then the file at ``path``, then ``overrides``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_dict(DEFAULTS)
    if base:
        cp.read_dict({s: {k: _to_text(v) for k, v in vals.items()} for s, vals in base.items()})
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        if not cp.has_section(section):
            raise ConfigError(f"unknown section {section!r} in --set {item!r}")
        cp.set(section, name, value.strip())
    for section in cp.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]")
        known = PHYSICS_KEYS if section == "physics" else DEFAULTS[section]
        for key in cp[section]:
            if key not in known:
                raise ConfigError(f"unknown key {section}.{key}")
    return cp


def _to_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(v if isinstance(v, str) else repr(float(v)) for v in value)
    return str(value)


def resolve(cp: configparser.ConfigParser) -> dict:
    """Typed, fully populated configuration."""
    pot = cp["potential"]
    family = pot["family"].strip().lower()
    if family == "gaussian":
        potential = {"family": family, "amplitude": _parse_float(pot["amplitude"], "potential.amplitude"),
                     "width": _parse_float(pot["width"], "potential.width")}
    elif family == "exponential":
        potential = {"family": family, "amplitude": _parse_float(pot["amplitude"], "potential.amplitude"),
                     "rate": _parse_float(pot["rate"], "potential.rate")}
    elif family == "tabulated":
        table = pot["table_path"].strip()
        if not table:
            raise ConfigError("tabulated potential needs potential.table_path")
        if not Path(table).is_file():
            raise ConfigError(f"potential table not found: {table}")
        potential = {"family": family, "table_path": table}
    else:
        raise ConfigError(f"unknown potential family {family!r}")

    g = cp["grid"]
    try:
        n = int(g["n"])
    except ValueError:
        raise ConfigError(f"grid.n: expected an integer, got {g['n']!r}") from None
    scheme = g["scheme"].strip()
    pivot_text = g["pivot"].strip().lower()
    grid = {"n": n, "pmax": _parse_float(g["pmax"], "grid.pmax"), "scheme": scheme,
            "pivot": None if pivot_text in ("", "none") else _parse_float(pivot_text, "grid.pivot")}

    s = cp["solver"]
    kappa_text = s["kappa"].strip().lower()
    solver = {
        "kappa": None if kappa_text in ("none", "inf", "") else _parse_float(kappa_text, "solver.kappa"),
        "init_file": s["init_file"].strip() or None,
        "engine": s["engine"].strip(),
        "init": s["init"].strip(),
        "warm_start": _parse_bool(s["warm_start"], "solver.warm_start"),
    }
    for key in ("damping", "clamp", "step_init", "backtrack", "armijo", "min_step", "tol_grad",
                "tol_energy", "trial_gamma0", "trial_eps", "stabilization_tol"):
        solver[key] = _parse_float(s[key], f"solver.{key}")
    for key in ("max_halvings", "max_iter"):
        try:
            solver[key] = int(s[key])
        except ValueError:
            raise ConfigError(f"solver.{key}: expected an integer, got {s[key]!r}") from None
    if solver["init"] == "file" and solver["init_file"] and not Path(solver["init_file"]).is_file():
        raise ConfigError(f"init file not found: {solver['init_file']}")

    phys = cp["physics"]
    physics = {}
    for key in phys:
        physics[key] = _parse_list(phys[key], f"physics.{key}") if key.endswith("_list") \
            else _parse_float(phys[key], f"physics.{key}")

    out = cp["output"]
    formats = [f.strip() for f in out["formats"].split(",") if f.strip()]
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise ConfigError(f"unknown output formats {bad}")
    output = {"directory": out["directory"].strip() or "out", "formats": formats}
    return {"potential": potential, "grid": grid, "solver": solver, "physics": physics, "output": output}


def run_mode(config: dict) -> str:
    """One of ``minimize``, ``mu_sweep``, ``kappa_sweep``, ``fixed_density``."""
    phys = config["physics"]
    modes = []
    if "lambda" in phys or "lambda_list" in phys:
        modes.append("fixed_density")
    if "kappa_list" in phys:
        modes.append("kappa_sweep")
    if "mu_list" in phys:
        modes.append("mu_sweep")
    if len(modes) > 1:
        raise ConfigError(f"physics section implies several run modes: {modes}")
    if "lambda" in phys and "lambda_list" in phys:
        raise ConfigError("give either physics.lambda or physics.lambda_list")
    if "rho0" in phys and "rho0_list" in phys:
        raise ConfigError("give either physics.rho0 or physics.rho0_list")
    mode = modes[0] if modes else "minimize"
    if mode == "mu_sweep" and "mu" in phys:
        raise ConfigError("physics.mu and physics.mu_list are mutually exclusive")
    if mode == "fixed_density" and not ("rho0" in phys or "rho0_list" in phys):
        raise ConfigError("fixed-density runs need physics.rho0 or physics.rho0_list")
    if mode != "fixed_density" and ("rho0" in phys or "rho0_list" in phys):
        raise ConfigError("physics.rho0 only applies to fixed-density runs")
    return mode


def build_problem(config: dict):
    pot = config["potential"]
    try:
        if pot["family"] == "gaussian":
            spec = PotentialSpec.gaussian(pot["amplitude"], pot["width"])
        elif pot["family"] == "exponential":
            spec = PotentialSpec.exponential(pot["amplitude"], pot["rate"])
        else:
            spec = PotentialSpec.from_table_file(pot["table_path"])
        g = config["grid"]
        grid = build_grid(g["n"], g["pmax"], g["scheme"], g["pivot"])
    except (AdmissibilityError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return spec, grid, build_kernel(grid, spec)


def solver_config(config: dict) -> slv.SolverConfig:
    s = dict(config["solver"])
    s.pop("warm_start")
    s.pop("stabilization_tol")
    try:
        return slv.SolverConfig(**s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# -- output helpers ---------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, columns: list[str], rows, config: dict, footer=()) -> None:
    lines = [f"# config = {json.dumps(config, sort_keys=True)}", ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    lines += [f"# {line}" for line in footer]
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict, config: dict) -> None:
    doc = {"config": config, **payload}
    path.write_text(json.dumps(ver._plain(doc), indent=2, sort_keys=True) + "\n")


def _outdir(config: dict) -> Path:
    out = Path(config["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _wants(config: dict, fmt: str) -> bool:
    return fmt in config["output"]["formats"]


def _mu(config: dict) -> float:
    return float(config["physics"].get("mu", DEFAULT_MU))


# -- commands -------------------------------------------------------------------

def cmd_minimize(config: dict) -> int:
    if run_mode(config) != "minimize":
        raise ConfigError("minimize expects a single physics.mu")
    mu = _mu(config)
    spec, grid, kernel = build_problem(config)
    try:
        report = slv.minimize(kernel, mu, solver_config(config))
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    out = _outdir(config)
    if _wants(config, "json"):
        write_json(out / "report.json", {"report": report.to_json()}, config)
    if _wants(config, "state"):
        save_state(out / "state.txt", report.state, grid, mu, config)
    if _wants(config, "csv"):
        d = evaluate(report.state, kernel, mu).derivatives
        rows = zip(grid.nodes, report.state.gamma, report.state.alpha, d.A, d.B)
        write_csv(out / "profile.csv", ["p", "gamma", "alpha", "A", "B"], rows, config)
    e = report.energy.total
    print(f"mu = {mu:g}: energy {e:.12g}, rho0 {report.state.rho0:.10g}, rho_gamma {report.rho_gamma:.10g}, "
          f"{report.iterations} iterations, {report.message}")
    return EXIT_OK if report.converged else EXIT_FAIL


def cmd_verify(state_path, config: dict) -> int:
    mu = config["physics"].get("mu")
    spec, grid, kernel = build_problem(config)
    try:
        state, nodes, header = load_state(state_path)
    except DomainError as exc:
        print(f"state outside the domain: {exc}")
        out = _outdir(config)
        failed = ver.VerificationReport([ver.CheckRecord("domain", ver.FAIL, notes=[str(exc)])])
        if _wants(config, "json"):
            write_json(out / "verification.json", {"verification": failed.to_json()}, config)
        return EXIT_FAIL
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read state file: {exc}") from None
    if not grid.matches(nodes):
        raise ConfigError(f"{state_path}: state grid does not match the configured grid")
    if mu is None:
        mu = header.get("mu", DEFAULT_MU)
    report = ver.run_suite(state, kernel, float(mu))
    print(report.table())
    if _wants(config, "json"):
        write_json(_outdir(config) / "verification.json", {"verification": report.to_json()}, config)
    return EXIT_OK if report.passed else EXIT_FAIL


def _solve_mu(args):
    config, mu = args
    _, _, kernel = build_problem(config)
    return slv.minimize(kernel, mu, solver_config(config))


def _solve_fixed(args):
    config, lam, rho0 = args
    _, _, kernel = build_problem(config)
    return slv.minimize_fixed_density(lam, rho0, kernel, _mu(config), solver_config(config))


def _pmap(func, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map keeps input order regardless of completion order
        return list(pool.map(func, items))


def cmd_sweep(config: dict, jobs: int = 1) -> int:
    mode = run_mode(config)
    if mode not in ("mu_sweep", "kappa_sweep"):
        raise ConfigError("sweep expects physics.mu_list or physics.kappa_list")
    spec, grid, kernel = build_problem(config)
    cfg = solver_config(config)
    out = _outdir(config)
    status = EXIT_OK
    if mode == "mu_sweep":
        mus = config["physics"]["mu_list"]
        if jobs > 1 or not config["solver"]["warm_start"]:
            reports = _pmap(_solve_mu, [(config, mu) for mu in mus], jobs)
        else:
            reports = [row["report"] for row in slv.mu_sweep(mus, kernel, cfg, warm_start=True)]
        rows = []
        for i, (mu, rep) in enumerate(zip(mus, reports)):
            rows.append((mu, rep.state.rho0, rep.rho_gamma, rep.rho, rep.energy.total,
                         rep.condensate_fraction, rep.converged))
            if _wants(config, "state"):
                save_state(out / f"state_mu_{i:03d}.txt", rep.state, grid, mu, config)
            if not rep.converged:
                status = EXIT_FAIL
        columns = ["mu", "rho0", "rho_gamma", "rho", "energy", "condensate_fraction", "converged"]
        if _wants(config, "csv"):
            write_csv(out / "sweep.csv", columns, rows, config)
        if _wants(config, "json"):
            write_json(out / "sweep.json", {"mode": mode, "columns": columns, "rows": [list(r) for r in rows]}, config)
        for r in rows:
            print(f"mu = {r[0]:g}: energy {r[4]:.12g}, condensate fraction {r[5]:.6g}, converged {r[6]}")
        return status

    kappas = config["physics"]["kappa_list"]
    mu = _mu(config)
    try:
        sweep = slv.kappa_sweep(kappas, kernel, mu, cfg, tol=config["solver"]["stabilization_tol"],
                                warm_start=config["solver"]["warm_start"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = []
    for i, (k, e_path, rep) in enumerate(zip(sweep.kappas, sweep.path_energies, sweep.reports)):
        rows.append((k, rep.energy.total, e_path, rep.active_clamp, rep.state.rho0, rep.rho_gamma,
                     rep.residuals["grad"], rep.converged))
        if _wants(config, "state"):
            save_state(out / f"state_kappa_{i:03d}.txt", rep.state, grid, mu, config)
        if not rep.converged:
            status = EXIT_FAIL
    columns = ["kappa", "energy", "path_energy", "active_clamp", "rho0", "rho_gamma", "residual", "converged"]
    footer = [f"monotone = {str(sweep.monotone).lower()}", f"kappa_star = {sweep.kappa_star}"]
    if _wants(config, "csv"):
        write_csv(out / "sweep.csv", columns, rows, config, footer)
    if _wants(config, "json"):
        write_json(out / "sweep.json", {"mode": mode, "columns": columns, "rows": [list(r) for r in rows],
                                        "monotone": sweep.monotone, "kappa_star": sweep.kappa_star}, config)
    for r in rows:
        print(f"kappa = {r[0]:g}: energy {r[2]:.15g}, active clamp {r[3]}, converged {r[7]}")
    print(f"monotone: {sweep.monotone}")
    print(f"kappa*: {sweep.kappa_star if sweep.kappa_star is not None else 'not reached'}")
    if not sweep.monotone:
        status = EXIT_FAIL
    return status


def cmd_fixed_density(config: dict, jobs: int = 1) -> int:
    if run_mode(config) != "fixed_density":
        raise ConfigError("fixed-density expects physics.lambda (or lambda_list) and rho0 (or rho0_list)")
    phys = config["physics"]
    lambdas = phys.get("lambda_list") or [phys["lambda"]]
    rho0s = phys.get("rho0_list") or [phys["rho0"]]
    if any(v < 0 for v in lambdas + rho0s) or not all(math.isfinite(v) for v in lambdas + rho0s):
        raise ConfigError("lambda and rho0 must be finite and nonnegative")
    build_problem(config)
    items = [(config, lam, r0) for r0 in rho0s for lam in lambdas]
    reports = _pmap(_solve_fixed, items, jobs)
    rows = [(lam, r0, rep.energy.total, rep.extra["multiplier"], rep.residuals["grad"], rep.converged)
            for (_, lam, r0), rep in zip(items, reports)]
    status = EXIT_OK if all(rep.converged for rep in reports) else EXIT_FAIL
    footer, verdicts = [], []
    if len(lambdas) >= 3:
        for j, r0 in enumerate(rho0s):
            block = rows[j * len(lambdas):(j + 1) * len(lambdas)]
            try:
                rec = ver.check_convexity_slice([r[0] for r in block], [r[2] for r in block])
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            verdicts.append({"rho0": r0, **rec.to_json()})
            footer.append(f"convexity rho0 = {_fmt(r0)}: {rec.status} "
                          f"(min second difference {_fmt(rec.values['value'])})")
            if not rec.passed:
                status = EXIT_FAIL
    out = _outdir(config)
    columns = ["lambda", "rho0", "f", "multiplier", "residual", "converged"]
    if _wants(config, "csv"):
        write_csv(out / "fixed_density.csv", columns, rows, config, footer)
    if _wants(config, "json"):
        write_json(out / "fixed_density.json", {"columns": columns, "rows": [list(r) for r in rows],
                                                "convexity": verdicts}, config)
    for r in rows:
        print(f"lambda = {r[0]:.10g}, rho0 = {r[1]:.10g}: f = {r[2]:.15g}, converged {r[5]}")
    for line in footer:
        print(line)
    return status


# -- entry point ----------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bogoliubov", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument("--set", metavar="K=V", action="append", default=[], dest="overrides",
                        help="override one entry, e.g. physics.mu=0.5 (repeatable)")
    common.add_argument("--output", metavar="DIR", help="output directory (overrides output.directory)")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel workers for independent rows")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("minimize", parents=[common], help="minimize at a single mu")
    p = sub.add_parser("verify", parents=[common], help="run the property suite on a state file")
    p.add_argument("state", help="state file written by minimize")
    sub.add_parser("sweep", parents=[common], help="mu_list or kappa_list sweep")
    sub.add_parser("fixed-density", parents=[common], help="f(lambda, rho0) on a point or grid")
    sub.add_parser("run", parents=[common], help="dispatch on the run mode implied by the physics section")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        base = None
        if args.command == "verify":
            state_path = Path(args.state)
            if not state_path.is_file():
                raise ConfigError(f"state file not found: {state_path}")
            try:
                base = load_state(state_path)[2].get("config")
            except (ValueError, OSError):
                base = None
        overrides = list(args.overrides)
        if args.output:
            overrides.append(f"output.directory={args.output}")
        config = resolve(load_config(args.config, overrides, base))
        if args.jobs > 1 and run_mode(config) == "mu_sweep":
            # parallel rows cannot warm-start; record that in the provenance
            config["solver"]["warm_start"] = False
        command = args.command
        if command == "run":
            command = {"minimize": "minimize", "mu_sweep": "sweep", "kappa_sweep": "sweep",
                       "fixed_density": "fixed-density"}[run_mode(config)]
        if command == "minimize":
            return cmd_minimize(config)
        if command == "verify":
            return cmd_verify(args.state, config)
        if command == "sweep":
            return cmd_sweep(config, args.jobs)
        return cmd_fixed_density(config, args.jobs)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

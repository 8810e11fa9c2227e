"""Command-line front end: ``lie-momentum {run,sweep,verify,ode}``.

Settings resolve as flag > JSON config file > built-in default. Exit codes:
0 success, 1 configuration error, 2 non-convergence or too few sweep points,
3 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as diag
from .errors import LieMomentumError, ParameterError
from .experiments import SweepConfig, resolve_params, run_single, sweep_and_fit, spectrum_error
from .lie_core import AlgebraElement
from .optimizers import integrate_ode
from .potentials import SpectrumSpec, estimate_L_mu
from .svg import convergence_plot, rate_plot
from .trace import atomic_write_json, atomic_write_text

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("lie_momentum")


class ConfigError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad input; that code means non-convergence here
    def error(self, message):
        raise ConfigError("arguments", message)


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_str(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lie-momentum", description="Momentum optimizers on SO(n).")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON file with settings (flags override it)")
        sp.add_argument("--output-dir", type=Path, default=None)
        sp.add_argument("-v", "--verbose", action="count", default=0)

    def problem(sp):
        sp.add_argument("--n", type=int)
        sp.add_argument("--a", type=float)
        sp.add_argument("--h", type=float)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--max-iters", type=int)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--init-mode", choices=("near_min", "near_max", "haar"))
        sp.add_argument("--engine", choices=("fast", "reference"))

    run = sub.add_parser("run", help="one optimization run")
    common(run)
    problem(run)
    run.add_argument("--scheme")
    run.add_argument("--kappa", type=float)
    run.add_argument("--seed", type=int)

    sw = sub.add_parser("sweep", help="condition-number sweep and rate fit")
    common(sw)
    problem(sw)
    sw.add_argument("--schemes", type=_csv_str)
    sw.add_argument("--kappas", type=_csv_floats)
    sw.add_argument("--seeds", type=_csv_ints)

    ver = sub.add_parser("verify", help="run the property battery")
    common(ver)
    ver.add_argument("--only", type=_csv_str, help="comma-separated groups")

    ode = sub.add_parser("ode", help="integrate the damped ODE and check its Lyapunov rate")
    common(ode)
    ode.add_argument("--n", type=int)
    ode.add_argument("--kappa", type=float)
    ode.add_argument("--seed", type=int)
    ode.add_argument("--gamma", type=float)
    ode.add_argument("--dt", type=float)
    ode.add_argument("--T", type=float)
    ode.add_argument("--record-every", type=int)
    return p


def _load_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return {k.replace("-", "_"): v for k, v in obj.items()}


def _merge(args: argparse.Namespace, keys: tuple[str, ...], file_cfg: dict, defaults: dict) -> dict:
    """flag > file > default, restricted to ``keys``; unknown file keys are errors."""
    allowed = set(keys) | {"output_dir"}
    for k in file_cfg:
        if k not in allowed:
            raise ConfigError(k, "unknown configuration key")
    out = {}
    for k in keys:
        flag = getattr(args, k, None)
        if flag is not None:
            out[k] = flag
        elif k in file_cfg:
            out[k] = file_cfg[k]
        elif k in defaults:
            out[k] = defaults[k]
    return out


def _output_dir(args, file_cfg, default: str) -> Path:
    d = args.output_dir or file_cfg.get("output_dir") or default
    d = Path(d)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("output_dir", f"cannot create {d}: {exc}") from None
    return d


_PROBLEM_KEYS = ("n", "a", "h", "gamma", "max_iters", "eps", "init_mode", "engine")


def _sweep_config(resolved: dict) -> SweepConfig:
    try:
        return SweepConfig(**resolved)
    except ParameterError as exc:
        raise ConfigError(exc.field, str(exc).split(": ", 1)[-1]) from None
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    file_cfg = _load_file(args.config)
    keys = _PROBLEM_KEYS + ("scheme", "kappa", "seed")
    r = _merge(args, keys, file_cfg, {"scheme": "nag-sc", "kappa": 1e4, "seed": 0, "n": 10})
    out_dir = _output_dir(args, file_cfg, "runs")
    n = r.get("n", 10)
    kappa = r.pop("kappa")
    try:
        SpectrumSpec(n, float(kappa))
    except (ValueError, TypeError) as exc:
        raise ConfigError("kappa", str(exc)) from None
    cfg = _sweep_config(dict(r, kappas=[kappa], schemes=[r.pop("scheme")], seeds=[r.pop("seed")]))
    scheme, seed = cfg.schemes[0], cfg.seeds[0]
    try:
        params = resolve_params(cfg, scheme, kappa)
    except ParameterError as exc:
        raise ConfigError(exc.field, str(exc).split(": ", 1)[-1]) from None
    log.info("running %s at kappa=%g (h=%g, gamma=%g)", scheme, kappa, params.h, params.gamma)
    res = run_single(cfg, scheme, kappa, seed)
    stem = f"{scheme}_n{cfg.n}_k{kappa:g}_s{seed}"
    resolved = dict(cfg.to_dict(), scheme=scheme, kappa=kappa, seed=seed)
    atomic_write_text(out_dir / f"{stem}.csv", res.trace.to_csv_string())
    summary = dict(res.summary(), version=__version__, config=resolved,
                   spectrum_error=spectrum_error(_potential(cfg, kappa, seed), res.X_final))
    atomic_write_json(out_dir / f"{stem}.json", summary)
    atomic_write_text(out_dir / f"{stem}.svg", convergence_plot({scheme: res.trace}, f"{scheme}, kappa={kappa:g}"))
    rate = "n/a" if res.rate is None else f"{res.rate:.8f}"
    print(f"{scheme} n={cfg.n} kappa={kappa:g} seed={seed}: iterations={res.iterations} "
          f"converged={'yes' if res.converged else 'no'} final_subopt={res.final_subopt:.3e} "
          f"rate={rate} lyapunov_violations={res.lyapunov['violations']}")
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _potential(cfg, kappa, seed):
    from .experiments import build_potential
    return build_potential(cfg.n, kappa, seed)


def cmd_sweep(args) -> int:
    file_cfg = _load_file(args.config)
    keys = _PROBLEM_KEYS + ("schemes", "kappas", "seeds")
    r = _merge(args, keys, file_cfg, {})
    out_dir = _output_dir(args, file_cfg, "sweep")
    cfg = _sweep_config(r)
    # fewer than 4 kappas raises InsufficientData before any run starts (exit 2)
    res = sweep_and_fit(cfg)
    for run in res.runs:
        stem = f"{run.scheme}_n{cfg.n}_k{run.kappa:g}_s{run.seed}"
        atomic_write_text(out_dir / "runs" / f"{stem}.csv", run.trace.to_csv_string())
        log.info("%s kappa=%g seed=%d: %d iterations, rate=%s", run.scheme, run.kappa, run.seed,
                 run.iterations, run.rate)
    atomic_write_json(out_dir / "summary.json", dict(res.to_dict(), version=__version__))
    if res.fits:
        atomic_write_text(out_dir / "rates.svg", rate_plot(res.fits, f"n={cfg.n}"))
    for scheme in cfg.schemes:
        if scheme in res.fits:
            f = res.fits[scheme]
            print(f"{scheme}: slope={f.slope:.4f} intercept={f.intercept:.4f} points={f.kappas.size}")
        else:
            print(f"{scheme}: no fit ({res.errors[scheme]})")
    print(f"lyapunov violations across sweep: {res.lyapunov_violations}")
    return EXIT_OK if not res.errors else EXIT_NONCONVERGED


def cmd_verify(args) -> int:
    from .verify import format_table, run_battery

    file_cfg = _load_file(args.config)
    only = args.only if args.only is not None else file_cfg.get("only")
    try:
        results = run_battery(only)
    except ParameterError as exc:
        raise ConfigError(exc.field, str(exc).split(": ", 1)[-1]) from None
    print(format_table(results))
    failed = [r for r in results if not r.passed]
    if args.output_dir or file_cfg.get("output_dir"):
        out_dir = _output_dir(args, file_cfg, ".")
        atomic_write_json(out_dir / "verify.json", {
            "version": __version__, "only": only,
            "results": [{"group": r.group, "name": r.name, "passed": r.passed, "detail": r.detail}
                        for r in results]})
    if failed:
        print(f"FAILED: {failed[0].group} / {failed[0].name}", file=sys.stderr)
        return EXIT_INVARIANT
    print(f"all {len(results)} checks passed")
    return EXIT_OK


def cmd_ode(args) -> int:
    file_cfg = _load_file(args.config)
    keys = ("n", "kappa", "seed", "gamma", "dt", "T", "record_every")
    r = _merge(args, keys, file_cfg, {"n": 10, "kappa": 100.0, "seed": 0, "dt": 1e-4, "T": 5.0,
                                      "record_every": 10})
    out_dir = _output_dir(args, file_cfg, "ode")
    try:
        spec = SpectrumSpec(int(r["n"]), float(r["kappa"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError("kappa", str(exc)) from None
    for k in ("dt", "T"):
        if not float(r[k]) > 0:
            raise ConfigError(k, "must be positive")
    if int(r["record_every"]) < 1:
        raise ConfigError("record_every", "must be >= 1")
    L, mu = estimate_L_mu(spec)
    gamma = float(r.get("gamma") or 2.0 * math.sqrt(mu))
    if not gamma > 0:
        raise ConfigError("gamma", "must be positive")
    cfg = SweepConfig(n=spec.n, kappas=[spec.kappa], schemes=["heavy-ball"], seeds=[int(r["seed"])])
    from .experiments import build_potential, initial_point
    pot = build_potential(spec.n, spec.kappa, int(r["seed"]))
    g0 = initial_point(pot, "near_min", cfg.ball_radius, int(r["seed"]))
    tr = integrate_ode(g0, AlgebraElement.zeros(spec.n), pot, gamma, float(r["dt"]), float(r["T"]),
                       int(r["record_every"]))
    g_star = pot.known_minimizer()
    lyap = np.array([diag.lyapunov_ode(g, x, pot, g_star, gamma) for g, x in zip(tr.g, tr.xi)])
    energy = np.array([diag.energy_ode(g, x, pot) for g, x in zip(tr.g, tr.xi)])
    c = diag.ode_rate(mu)
    rep = diag.ode_lyapunov_report(tr.t, lyap, c)
    lines = ["t,energy,lyapunov,weighted"]
    lines += [",".join(repr(float(v)) for v in row)
              for row in zip(tr.t, energy, lyap, rep["weighted"])]
    atomic_write_text(out_dir / "ode_trace.csv", "\n".join(lines) + "\n")
    atomic_write_json(out_dir / "ode_summary.json", {
        "version": __version__, "config": dict(r, gamma=gamma), "rate": c,
        "max_relative_increase": rep["max_relative_increase"], "violations": rep["violations"]})
    print(f"ode n={spec.n} kappa={spec.kappa:g} gamma={gamma:g} c={c:.6g}: "
          f"max relative increase of e^(ct) L = {rep['max_relative_increase']:.3e}, "
          f"violations={rep['violations']}")
    return EXIT_OK if rep["violations"] == 0 else EXIT_INVARIANT


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "ode": cmd_ode}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LieMomentumError as exc:
        # InsufficientData / TailTooShort surfacing from a sweep
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())

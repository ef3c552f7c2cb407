"""Command-line entry point.

Exit codes: 0 success, 2 configuration or parameter error, 3 input-data
error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import closedform, regions, simulate as sim, verify
from .model import GameParameters, GameState, ParameterError, PremiumPath, load_parameters

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_VERIFY = 0, 2, 3, 4

# run options that may appear in the parameter file next to the model constants
RUN_OPTIONS = {
    "x0": 1.0, "y0": 0.0, "z0": 0.0, "seed": 12345, "n_paths": 100_000, "n_steps": 400,
    "grid": 2001, "markup": 0.1, "workers": 1,
}
FLAG_FOR = {"seed": "seed", "n_paths": "paths", "n_steps": "steps", "grid": "grid",
            "markup": "markup", "workers": "workers"}

SHORT_CASE = {"T": 1.0, "b_R": 0.5}
LONG_CASE = {"T": 20.0, "b_R": 0.2}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj: Any, path: Path | None) -> str:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2)
    if path is not None:
        path.write_text(text + "\n", encoding="utf-8")
    return text


class Config:
    """Parameters plus run options, resolved as flag > file > default."""

    def __init__(self, args: argparse.Namespace, need_params: bool = True):
        self.args = args
        self.params: GameParameters | None = None
        extras: dict[str, Any] = {}
        if args.params:
            try:
                self.params, extras = load_parameters(args.params)
            except FileNotFoundError as e:
                raise CliError(f"parameter file not found: {e.filename}", EXIT_CONFIG) from e
            except json.JSONDecodeError as e:
                raise CliError(f"malformed JSON in {args.params}: {e}", EXIT_CONFIG) from e
            except ParameterError as e:
                raise CliError(f"invalid parameters: {e}", EXIT_CONFIG) from e
        elif need_params:
            raise CliError("--params is required for this command", EXIT_CONFIG)
        unknown = set(extras) - set(RUN_OPTIONS)
        if unknown:
            raise CliError(f"unknown key(s) in parameter file: {', '.join(sorted(unknown))}",
                           EXIT_CONFIG)
        self.options = dict(RUN_OPTIONS)
        self.options.update(extras)
        for key, flag in FLAG_FOR.items():
            v = getattr(args, flag, None)
            if v is not None:
                self.options[key] = v
        self._check()
        self.out = Path(args.out) if getattr(args, "out", None) else None
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)

    def _check(self):
        o = self.options
        for k in ("seed", "n_paths", "n_steps", "grid", "workers"):
            if isinstance(o[k], bool) or not isinstance(o[k], int):
                raise CliError(f"{k} must be an integer", EXIT_CONFIG)
        for k in ("n_paths", "n_steps", "workers"):
            if o[k] < 1:
                raise CliError(f"{k} must be positive", EXIT_CONFIG)
        if o["grid"] < 2:
            raise CliError("grid must be at least 2", EXIT_CONFIG)
        if o["seed"] < 0:
            raise CliError("seed must be nonnegative", EXIT_CONFIG)
        for k in ("x0", "y0", "z0", "markup"):
            if isinstance(o[k], bool) or not isinstance(o[k], (int, float)):
                raise CliError(f"{k} must be a number", EXIT_CONFIG)
        if not o["markup"] > 0:
            raise CliError("markup must be positive (premium strictly above the threshold)",
                           EXIT_CONFIG)

    def state(self) -> GameState:
        H = self.params.horizon
        try:
            return GameState(float(self.options["x0"]), 0.0, float(self.options["y0"]),
                             float(self.options["z0"])).check(H)
        except ParameterError as e:
            raise CliError(f"invalid initial state: {e}", EXIT_CONFIG) from e

    def mc(self) -> sim.McConfig:
        o = self.options
        return sim.McConfig(o["n_paths"], o["n_steps"], o["seed"])

    def path(self, name: str) -> Path | None:
        return self.out / name if self.out is not None else None


def _premium(cfg: Config, law=None) -> PremiumPath:
    P = cfg.params
    if law is None:
        law = regions.equilibrium_for(P).law
    return regions.generate_premium(law, P.insurer, P.horizon, cfg.options["markup"],
                                    cfg.options["grid"])


def _read_premium(path: str, T: float) -> PremiumPath:
    try:
        c = regions.read_premium_csv(path)
    except FileNotFoundError as e:
        raise CliError(f"premium CSV not found: {path}", EXIT_DATA) from e
    except (KeyError, ValueError) as e:
        raise CliError(f"cannot read premium CSV {path}: {e}", EXIT_DATA) from e
    if abs(c.T - T) > 1e-9 * T:
        raise CliError(f"premium CSV covers [0, {c.T}], horizon is [0, {T}]", EXIT_DATA)
    return c


def cmd_classify(cfg: Config) -> int:
    P = cfg.params
    coords = regions.coordinates(P)
    lab = regions.classify(coords, P.reinsurer.b_R, P.horizon.T)
    print(f"r={coords.r:.6g} d={coords.d:.6g} {lab}")
    if lab.near_boundary:
        print("warning: the point lies within rounding distance of a region boundary")
    report = {"r": coords.r, "d": coords.d, "label": lab.label, "kind": lab.kind,
              "near_boundary": lab.near_boundary}
    if cfg.out is not None:
        dump_json(report, cfg.path("classify.json"))
    return EXIT_OK


def cmd_premium(cfg: Config) -> int:
    P = cfg.params
    eq = regions.equilibrium_for(P)
    if eq.arbitrary:
        print(f"warning: region {eq.label}: every division of [0, T] is an equilibrium; "
              "emitting the canonical law P = {T}")
    out = cfg.out or Path(".")
    for i, law in enumerate(eq.laws):
        suffix = f"_{i + 1}" if len(eq.laws) > 1 else ""
        c = _premium(cfg, law)
        regions.write_premium_csv(c, out / f"premium{suffix}.csv")
        regions.write_law_csv(law, out / f"law{suffix}.csv")
        print(f"region {eq.label} law{suffix}: {law}")
    return EXIT_OK


def cmd_simulate(cfg: Config) -> int:
    P = cfg.params
    I, H = P.insurer, P.horizon
    s = cfg.state()
    if cfg.args.premium_csv:
        c = _read_premium(cfg.args.premium_csv, H.T)
    else:
        c = _premium(cfg)
    res = sim.simulate(s, c, P, cfg.mc(), workers=cfg.options["workers"],
                       keep_paths=bool(cfg.args.paths_csv))
    p = closedform.purchase_time(s.t, c, I, H)
    v_i = closedform.value_insurer(s, c, I, H)
    j_i = closedform.insurer_objective(s, c, I, H)
    g = closedform.g_function(s, c, I, H)
    k = closedform.cost_reinsurer_K(s.t, s.y, s.z, p, P)
    report = {
        "estimates": res.to_dict(),
        "closed_form": {"value_insurer": v_i, "insurer_objective": j_i, "g": g, "K": k,
                        "purchase_time": "inf" if p == math.inf else p},
        "z_scores": {
            "j_insurer_vs_value_insurer": res.j_insurer.z_score(v_i),
            "j_insurer_vs_insurer_objective": res.j_insurer.z_score(j_i),
            "mean_XT_vs_g": res.mean_XT.z_score(g),
            "j_reinsurer_vs_K": res.j_reinsurer.z_score(k),
        },
        "config": {k_: cfg.options[k_] for k_ in ("seed", "n_paths", "n_steps", "x0", "y0", "z0")},
    }
    text = dump_json(report, cfg.path("simulate.json"))
    if cfg.out is None:
        print(text)
    else:
        z = report["z_scores"]
        print("z-scores: " + ", ".join(f"{k_}={v:.3g}" if isinstance(v, float) else f"{k_}={v}"
                                       for k_, v in sorted(z.items())))
    if cfg.args.paths_csv:
        sim.write_paths_csv(res.paths, cfg.args.paths_csv)
    return EXIT_OK


def _monotone(rows, strictly_constant: bool) -> bool:
    ps = [p for _, p in rows]
    if strictly_constant:
        return all(p == ps[0] for p in ps)
    return all(b >= a for a, b in zip(ps, ps[1:]))


def cmd_verify(cfg: Config) -> int:
    P = cfg.params
    I, H = P.insurer, P.horizon
    n_grid = cfg.options["grid"]
    if cfg.args.law_csv:
        try:
            law = regions.read_law_csv(cfg.args.law_csv, H.T)
        except FileNotFoundError as e:
            raise CliError(f"law CSV not found: {cfg.args.law_csv}", EXIT_DATA) from e
        except (KeyError, ValueError) as e:
            raise CliError(f"cannot read law CSV: {e}", EXIT_DATA) from e
    else:
        law = regions.equilibrium_for(P).law
    if n_grid < 10:
        print(f"warning: low-resolution mesh ({n_grid} points)")
    # the premium grid stays fine even when the checking mesh is coarse
    c = regions.generate_premium(law, I, H, cfg.options["markup"],
                                 max(n_grid, RUN_OPTIONS["grid"]))
    s = cfg.state()

    hjb = verify.check_hjb(c, P)
    rein = verify.check_reinsurer_equilibrium(law, P, n_grid)
    oracle = verify.time_selection_oracle(0.0, s.y, s.z, P, max(n_grid, 2), cfg.options["markup"])
    ins = verify.check_insurer_equilibrium(s, c, P, cfg.mc(), workers=cfg.options["workers"])
    sens = {}
    sens_ok = True
    for name in ("theta_I", "b_I", "rho_I", "a_I", "sigma_I", "gamma_I"):
        base = P.get(name)
        vals = [base * f for f in (0.8, 0.9, 1.0, 1.1, 1.2)] if base != 0 else \
            [-0.02, -0.01, 0.0, 0.01, 0.02]
        try:
            rows = verify.sensitivity_sweep(P, name, vals, c)
        except ParameterError:
            continue
        ok = _monotone(rows, name in ("a_I", "sigma_I", "gamma_I"))
        sens_ok &= ok
        sens[name] = {"passed": ok, "rows": [[v, "inf" if p == math.inf else p] for v, p in rows]}

    checks = {
        "hjb": hjb.passed(),
        "reinsurer": rein.passed,
        "time_selection": oracle.passed,
        "insurer": ins.passed,
        "sensitivity": sens_ok,
    }
    report = {
        "law": str(law), "passed": all(checks.values()), "checks": checks,
        "hjb": hjb.to_dict(), "reinsurer": rein.to_dict(), "time_selection": oracle.to_dict(),
        "insurer": ins.to_dict(), "sensitivity": sens,
    }
    dump_json(report, cfg.path("verify.json"))
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    if not report["passed"]:
        worst = [r.worst for r in (rein, ins) if not r.passed]
        for w in worst:
            print(f"worst: {w.id} margin={w.margin:.3e} at {w.location}")
        if not checks["hjb"]:
            print(f"worst: hjb residuals {hjb.residuals()} fd={hjb.fd_max_error:.3e}")
        return EXIT_VERIFY
    return EXIT_OK


def cmd_figures(cfg: Config) -> int:
    a = cfg.args
    d_range = (a.d_min, a.d_max)
    if not (math.isfinite(d_range[0]) and math.isfinite(d_range[1]) and d_range[0] < d_range[1]):
        raise CliError("--d-min must be smaller than --d-max", EXIT_CONFIG)
    if a.samples < 2:
        raise CliError("--samples must be at least 2", EXIT_CONFIG)
    if cfg.params is not None:
        b_R, T = cfg.params.reinsurer.b_R, cfg.params.horizon.T
        cases = {"short" if T <= 1.0 / b_R else "long": {"T": T, "b_R": b_R}}
    else:
        cases = {"short": SHORT_CASE, "long": LONG_CASE}
    out = cfg.out or Path(".")
    for name, case in cases.items():
        rows = regions.boundary_curves(case["b_R"], case["T"], d_range, a.samples)
        regions.write_curves_csv(rows, out / f"curves_{name}.csv")
        lattice = regions.region_samples(case["b_R"], case["T"], d_range, (0.0, 4.0),
                                         min(a.samples, 201))
        with open(out / f"regions_{name}.csv", "w", encoding="utf-8") as fh:
            fh.write("d,r,label\n")
            for d, r, lab in lattice:
                fh.write(f"{d!r},{r!r},{lab}\n")
        n8 = sum(1 for *_, lab in lattice if lab == "VIII")
        print(f"{name}: T={case['T']:g} b_R={case['b_R']:g} curves={len(rows)} "
              f"region VIII samples={n8}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reinsgame",
                                 description="Equilibrium engine for the reinsurance game.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--params", required=False, help="parameter JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--markup", type=float, help="waiting-region premium markup (> 0)")
        p.add_argument("--grid", type=int, help="premium / mesh grid size")

    p = sub.add_parser("classify", help="print (r, d) and the region label")
    common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("premium", help="write the equilibrium premium and law CSVs")
    common(p)
    p.set_defaults(func=cmd_premium)

    for name, func, helptext in (("simulate", cmd_simulate, "Monte Carlo estimates"),
                                 ("verify", cmd_verify, "run every equilibrium check")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--workers", type=int)
        if name == "simulate":
            p.add_argument("--premium-csv", help="premium path CSV (columns t,c)")
            p.add_argument("--paths-csv", help="write per-path terminal values here")
        else:
            p.add_argument("--law-csv", help="reinsurance law CSV to verify")
        p.set_defaults(func=func)

    p = sub.add_parser("figures", help="write region boundary curves")
    common(p)
    p.add_argument("--d-min", type=float, default=-1.0)
    p.add_argument("--d-max", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=201)
    p.set_defaults(func=cmd_figures)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = Config(args, need_params=args.command != "figures")
        return args.func(cfg)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ParameterError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

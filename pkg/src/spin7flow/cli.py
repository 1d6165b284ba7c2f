"""Command-line driver: ``spin7 <command> [options]``.

Reports are JSON-lines (one record per sample or step, then a summary
record) or CSV.  Exit status is 0 when every check passes, 1 when one fails
(the first failing residual is named on stderr) and 2 on invalid input.
Options may also come from a ``key=value`` file given by ``--config``;
command-line flags take precedence.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import algebra as al
from . import flow as fl
from . import symbols as sy
from . import tensor as tc
from .fields import Geometry, Grid, flat_field, make_rng, perturbed_field

COMMANDS = ("identities", "decompose", "symbol", "flow", "variation", "soliton")
MAX_N = {1: 512, 2: 32}

DEFAULT_TOL = {
    "identities": 1e-10,
    "decompose": 1e-10,
    "symbol": 1e-9,
    "flow": 1e-5,
    "variation": 1e-3,
    "soliton": 1e-10,
}


class UsageError(ValueError):
    pass


@dataclass
class Outcome:
    records: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    failure: str | None = None

    def check(self, name: str, ok: bool) -> None:
        if not ok and self.failure is None:
            self.failure = name


# ---------------------------------------------------------------------------
# argument handling

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spin7", description="Spin(7)-structure numerical experiments")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key=value file with option defaults")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-n", type=int, default=32)
    p.add_argument("--active-dims", type=int, default=1)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--coeff-a", type=float, default=1.0)
    p.add_argument("--coeff-b", type=float, default=2.0)
    p.add_argument("--coeff-c", type=float, default=2.0)
    p.add_argument("--deturck", action="store_true", default=False)
    p.add_argument("--no-lot", action="store_true", default=False)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--xi-samples", type=int, default=100)
    p.add_argument("--samples", type=int, default=20, help="random forms or directions")
    p.add_argument("--lam", type=float, default=0.0, help="soliton constant")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return p


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def read_config(path: str, parser: argparse.ArgumentParser) -> dict:
    """Parse a ``key=value`` file into parser defaults (keys as flag names, ``-`` or ``_``)."""
    actions = {a.dest: a for a in parser._actions}
    out = {}
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from None
    for num, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {num}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("command", "config", "help"):
            raise UsageError(f"config line {num}: unknown key {key!r}")
        act = actions[dest]
        if isinstance(act, argparse._StoreTrueAction):
            if val.lower() not in _BOOL:
                raise UsageError(f"config line {num}: {key} expects a boolean")
            out[dest] = _BOOL[val.lower()]
        elif act.choices is not None and val not in act.choices:
            raise UsageError(f"config line {num}: {key} must be one of {act.choices}")
        else:
            try:
                out[dest] = act.type(val) if act.type else val
            except ValueError:
                raise UsageError(f"config line {num}: bad value for {key}") from None
    return out


def parse_args(argv) -> argparse.Namespace:
    parser = _parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        parser.set_defaults(**read_config(known.config, parser))
    args = parser.parse_args(argv)
    validate(args)
    return args


def validate(args: argparse.Namespace) -> None:
    if args.active_dims not in (1, 2):
        raise UsageError("--active-dims must be 1 or 2")
    if not 4 <= args.grid_n <= MAX_N[args.active_dims]:
        raise UsageError(f"--grid-n must be in 4..{MAX_N[args.active_dims]} for {args.active_dims} active dims")
    if args.dt is not None and not args.dt > 0:
        raise UsageError("--dt must be positive")
    if args.steps < 0:
        raise UsageError("--steps must be nonnegative")
    if not args.eps >= 0:
        raise UsageError("--eps must be nonnegative")
    if args.xi_samples < 1 or args.samples < 1:
        raise UsageError("sample counts must be positive")
    if args.tol is not None and not args.tol > 0:
        raise UsageError("--tol must be positive")
    for name in ("coeff_a", "coeff_b", "coeff_c", "lam", "eps"):
        if not np.isfinite(getattr(args, name)):
            raise UsageError(f"--{name.replace('_', '-')} must be finite")


# ---------------------------------------------------------------------------
# commands

def _grid(args) -> Grid:
    return Grid(args.active_dims, args.grid_n)


def _field(args):
    grid = _grid(args)
    if args.eps == 0:
        return flat_field(grid)
    return perturbed_field(grid, args.eps, args.seed)


def _flow_config(args) -> fl.FlowConfig:
    return fl.FlowConfig(coeff_a=args.coeff_a, coeff_b=args.coeff_b, coeff_c=args.coeff_c,
                         dt=args.dt, steps=args.steps, deturck=args.deturck, include_lot=not args.no_lot)


def cmd_identities(args, tol) -> Outcome:
    rng = make_rng(args.seed)
    Phi0 = al.standard_cayley_form()
    forms = [Phi0] + [al.transport(Phi0, expm(0.3 * rng.standard_normal((8, 8)))) for _ in range(args.samples)]
    out = Outcome()
    worst = 0.0
    for k, Phi in enumerate(forms):
        res = al.verify_contraction_identities(Phi)
        out.records.append({"sample": k, **res})
        for name, v in res.items():
            out.check(f"sample {k}: {name}", v < tol)
            worst = max(worst, v)
    out.summary = {"forms": len(forms), "max_residual": worst}
    return out


def cmd_decompose(args, tol) -> Outcome:
    rng = make_rng(args.seed)
    Phi0 = al.standard_cayley_form()
    out = Outcome()
    for k in range(args.samples):
        M = expm(0.3 * rng.standard_normal((8, 8)))
        Phi = al.transport(Phi0, M)
        g = al.induced_metric(Phi)
        sigma = tc.antisymmetrize(rng.standard_normal((8,) * 4))
        parts = al.decompose_4form(sigma, Phi, g)
        recon = float(np.abs(sum(parts) - sigma).max())
        norms = [float(np.sqrt(tc.norm_sq(p, g, rank=4))) for p in parts]
        gamma = tc.antisymmetrize(rng.standard_normal((8,) * 3))
        X, g48 = al.decompose_3form(gamma, Phi, g)
        recon3 = float(np.abs(al.vector_to_3form(X, Phi, np.linalg.inv(g)) + g48 - gamma).max())
        out.records.append({"sample": k, "norm_1": norms[0], "norm_7": norms[1], "norm_27": norms[2],
                            "norm_35": norms[3], "reconstruction_4": recon, "reconstruction_3": recon3})
        out.check(f"sample {k}: reconstruction_4", recon < tol)
        out.check(f"sample {k}: reconstruction_3", recon3 < tol)
    out.summary = {"samples": args.samples}
    return out


def cmd_symbol(args, tol) -> Outcome:
    rep = sy.symbol_report(args.xi_samples, args.seed)
    out = Outcome(records=rep["rows"])
    for k, r in enumerate(rep["rows"]):
        out.check(f"xi {k}: nullity_L", r["nullity_L"] == 8)
        out.check(f"xi {k}: kernel_distance", r["kernel_distance"] < tol)
        out.check(f"xi {k}: nullity_Btilde", r["nullity_Btilde"] == 35)
        out.check(f"xi {k}: rank_delta_star", r["rank_delta_star"] == 8)
        out.check(f"xi {k}: joint_nullity", r["joint_nullity"] == 0)
        out.check(f"xi {k}: coercivity", r["coercivity"] >= 0.5 - 1e-10)
    out.summary = {"samples": rep["samples"], "min_coercivity": rep["min_coercivity"],
                   "nullities_L": rep["nullities_L"]}
    return out


def cmd_flow(args, tol) -> Outcome:
    field0 = _field(args)
    cfg = _flow_config(args)
    out = Outcome()
    try:
        _, records = fl.run_flow(field0, cfg, background=field0 if cfg.deturck else None)
    except fl.DriftError as e:
        out.failure = f"drift: {e}"
        return out
    out.records = [r.as_dict() for r in records]
    dt = records[1].t if len(records) > 1 else 0.0
    E = [r.E for r in records]
    slack = 10 * (dt ** 4 + 1e-8)
    inc = max((b - a for a, b in zip(E, E[1:])), default=0.0)
    if not cfg.deturck and args.coeff_a == 1 and args.coeff_b == 2 and args.coeff_c == 2:
        out.check("energy_monotone", inc <= slack)
    out.check("drift", max(r.drift for r in records) < tol)
    if args.eps == 0:
        out.check("flat_stationary", max(E) == 0.0)
    out.summary = {"steps": args.steps, "dt": dt, "E0": E[0], "E_final": E[-1], "max_increase": inc}
    return out


def cmd_variation(args, tol) -> Outcome:
    field0 = _field(args)
    geo = Geometry(field0)
    out = Outcome()
    for k in range(args.samples):
        A = fl.random_direction(field0, seed=args.seed + k, geo=geo)
        fd, formula, rel = fl.variation_check(field0, A)
        out.records.append({"direction": k, "finite_difference": fd, "formula": formula, "relative_error": rel})
        out.check(f"direction {k}: relative_error", rel < tol)
    out.summary = {"directions": args.samples}
    return out


def cmd_soliton(args, tol) -> Outcome:
    field0 = _field(args)
    res = fl.soliton_residual(fl.SolitonData.trivial(field0, args.lam), _flow_config(args))
    out = Outcome(records=[res])
    if args.eps == 0:
        expected = args.lam * res["volume"]
        out.check("trace", abs(res["trace"] - expected) <= tol * max(abs(expected), 1.0))
        out.check("consistency", res["consistency"] < tol)
        if args.lam == 0:
            for key in ("full", "metric", "divT", "trace_pointwise"):
                out.check(key, res[key] < tol)
    out.summary = {"lam": args.lam, "expander_obstructed": res["expander_obstructed"]}
    return out


HANDLERS = {
    "identities": cmd_identities,
    "decompose": cmd_decompose,
    "symbol": cmd_symbol,
    "flow": cmd_flow,
    "variation": cmd_variation,
    "soliton": cmd_soliton,
}


# ---------------------------------------------------------------------------
# reporting

def _cell(v):
    return json.dumps(v) if isinstance(v, (list, dict)) else v


def render(outcome: Outcome, command: str, args, fmt: str) -> str:
    summary = {"record": "summary", "command": command, "seed": args.seed,
               "passed": outcome.failure is None, "first_failure": outcome.failure, **outcome.summary}
    if fmt == "json":
        lines = [json.dumps({"record": command, **r}) for r in outcome.records]
        lines.append(json.dumps(summary))
        return "\n".join(lines) + "\n"
    rows = [{"record": command, **r} for r in outcome.records] + [summary]
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(v) for k, v in r.items()})
    return buf.getvalue()


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(f"spin7: error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else 2
    tol = args.tol if args.tol is not None else DEFAULT_TOL[args.command]
    try:
        outcome = HANDLERS[args.command](args, tol)
    except (ValueError, tc.TensorError) as e:
        print(f"spin7: error: {e}", file=sys.stderr)
        return 2
    text = render(outcome, args.command, args, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    if outcome.failure is not None:
        print(f"spin7: check failed: {outcome.failure}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

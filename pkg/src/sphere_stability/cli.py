"""Command line front end: ``sphere-stability <command> [flags]``.

Commands: constants, deficit, flow, stability, gaussian, sweep.  Output is CSV
(17 significant digits) or JSON (sorted keys).  Values are taken from flags, then
from an optional JSON ``--config`` file, then from defaults.  Failures print one JSON
line ``{"error_class": ..., "message": ...}`` on stderr and exit with 2 (domain),
3 (numerical) or 4 (I/O).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import carre_du_champ as cdc
from . import flow as fl
from . import gaussian as gs
from . import sphere_fn as sfn
from . import spectral, stability
from .errors import DomainError, OutputError, SphereStabilityError

DEFAULTS = {
    "constants": {"d": 3, "p": 3.0, "k": [1], "j_max": 5, "with_S": True, "format": "csv"},
    "deficit": {"d": 3, "p": 3.0, "family": "one_plus_eps_axis", "eps": 0.01, "seed": 0,
                "k_min": 2, "L": 64, "format": "json"},
    "flow": {"d": 3, "p": 3.0, "m": "auto", "t_end": 2.0, "sample_dt": 0.02, "seed": 0, "L": 24,
             "degree": 6, "amplitude": 0.3, "cfl": 0.9, "format": "csv"},
    "stability": {"d": 3, "p": 3.0, "format": "json"},
    "gaussian": {"p": 1.5, "seed": 0, "n": 100, "K": 8, "k_max": 20, "format": "json"},
    "sweep": {"d": [1, 2, 3, 4, 5], "n": 10, "p_max": stability.SWEEP_P_MAX, "format": "csv"},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise DomainError(f"invalid arguments: {message}")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "nan" if math.isnan(x) else format(x, ".16e")
    return str(x)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN and inf to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def to_csv(rows):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\r\n")
    if rows:
        header = list(rows[0].keys())
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(r.get(h)) for h in header])
    return buf.getvalue()


def to_json(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


# commands -----------------------------------------------------------------------------

def cmd_constants(cfg):
    d, p = int(cfg["d"]), float(cfg["p"])
    params = spectral.Params(d, p)
    rows = []
    for k in cfg["k"]:
        row = {"d": d, "p": p, "k": int(k), "improved_constant": spectral.improved_constant(params, int(k)),
               "improved_constant_k1_closed_form": spectral.improved_constant_k1(d, p)}
        for j in range(2, int(cfg["j_max"]) + 1):
            row[f"zeta_{j}"] = None if params.is_log else spectral.zeta_j(params, j)
            row[f"eta_{j}"] = spectral.eta_j(d, j)
        row["gamma_heat"] = cdc.gamma_heat(d, p) if p < params.two_sharp else None
        if 2.0 < p:
            m_minus, m_plus, *_ = cdc.m_range(d, p)
            row.update(m_minus=m_minus, m_plus=m_plus, m_canonical=cdc.canonical_m(p))
        else:
            row.update(m_minus=None, m_plus=None, m_canonical=None)
        row["S"] = stability.assemble_S(d, p).S if cfg["with_S"] and p > 1.0 else None
        rows.append(row)
    return rows


def cmd_deficit(cfg):
    d, p, eps = int(cfg["d"]), float(cfg["p"]), float(cfg["eps"])
    f = sfn.test_family(cfg["family"], d, eps, int(cfg["seed"]), int(cfg["k_min"]), int(cfg["L"]))
    rep = sfn.deficit_report(f, p).to_dict()
    rep.update(family=cfg["family"], eps=eps, seed=int(cfg["seed"]))
    if eps != 0.0:
        rep["deficit_over_eps4"] = rep["deficit"] / eps ** 4
    lim = (d + p) * (p - 1.0) / (2.0 * d * (d + 3.0))
    # the axis family is 1 + eps z with z = sqrt(d/(d+1)) Y, so eps^4 picks up (d/(d+1))^2
    scale = {"one_plus_eps_Y": 1.0, "one_plus_eps_axis": (d / (d + 1.0)) ** 2}.get(cfg["family"])
    rep["small_eps_limit"] = lim * scale if scale is not None else None
    return rep


def _resolve_m(cfg):
    m = cfg["m"]
    p = float(cfg["p"])
    if m == "auto":
        return cdc.canonical_m(p) if p > 2.0 else 1.0
    return float(m)


def cmd_flow(cfg):
    d, p = int(cfg["d"]), float(cfg["p"])
    init = fl.random_positive_initial(d, int(cfg["seed"]), int(cfg["degree"]), float(cfg["amplitude"]))
    return fl.run(init, p, _resolve_m(cfg), float(cfg["t_end"]), float(cfg["sample_dt"]),
                  L=int(cfg["L"]), cfl=float(cfg["cfl"]))


def cmd_stability(cfg):
    return stability.assemble_S(int(cfg["d"]), float(cfg["p"]))


def cmd_gaussian(cfg):
    p = float(cfg["p"])
    rng = np.random.default_rng(int(cfg["seed"]))
    worst = {"margin": math.inf, "base_margin": math.inf, "mode_margin": math.inf, "gross_margin": math.inf}
    for _ in range(int(cfg["n"])):
        a = gs.verify_theorem_b1(gs.random_hermite(rng, int(cfg["K"])), p)
        for key in worst:
            worst[key] = min(worst[key], getattr(a, key))
    hyper = min(gs.hypercontractivity_audit(gs.random_positive_hermite(rng), p)[2] for _ in range(int(cfg["n"])))
    return {"p": p, "nelson_time": gs.nelson_time(p), "n": int(cfg["n"]), "seed": int(cfg["seed"]),
            "worst": worst, "hypercontractivity_min_margin": hyper,
            "mode_constants": [{"k": k, "kappa": v} for k, v in gs.mode_table(p, int(cfg["k_max"]))]}


def cmd_sweep(cfg):
    return stability.sweep(tuple(int(x) for x in cfg["d"]), int(cfg["n"]), float(cfg["p_max"]))


# rendering ----------------------------------------------------------------------------

def render(command, result, fmt):
    if fmt not in ("csv", "json"):
        raise DomainError(f"unknown format {fmt!r}")
    if command == "flow":
        if fmt == "csv":
            return result.to_csv()
        cols = ("t", "e", "i", "deficit", "residual_EDO", "phi_gap", "min_u")
        body = {c: getattr(result, c) for c in cols}
        body.update(d=result.d, p=result.p, m=result.m, beta=result.beta, gamma=result.gamma,
                    delta=result.delta, audits=result.audits(), norm_drift=result.norm_drift)
        return to_json(body)
    if command == "stability":
        if fmt == "json":
            return result.to_json()
        d = result.to_dict()
        return to_csv([{"name": k, "value": v} for k, v in sorted(d.items())
                       if isinstance(v, (int, float, str)) or v is None])
    if command == "gaussian" and fmt == "csv":
        return to_csv(result["mode_constants"])
    if command == "deficit" and fmt == "csv":
        flat = {k: v for k, v in result.items() if not isinstance(v, dict)}
        for group in ("rhs", "margins", "passed"):
            flat.update({f"{group}.{k}": v for k, v in result[group].items()})
        return to_csv([flat])
    if fmt == "csv":
        return to_csv(result)
    return to_json(result)


COMMANDS = {"constants": cmd_constants, "deficit": cmd_deficit, "flow": cmd_flow,
            "stability": cmd_stability, "gaussian": cmd_gaussian, "sweep": cmd_sweep}


def build_parser():
    ap = _Parser(prog="sphere-stability", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    def common(sp):
        sp.add_argument("--config", default=None, help="JSON file with option values")
        sp.add_argument("--out", default=None, help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=S)

    sp = sub.add_parser("constants", help="spectral and carre du champ constants")
    sp.add_argument("--d", type=int, default=S)
    sp.add_argument("--p", type=float, default=S)
    sp.add_argument("--k", type=int, nargs="+", default=S)
    sp.add_argument("--j-max", dest="j_max", type=int, default=S)
    sp.add_argument("--no-S", dest="with_S", action="store_false", default=S)
    common(sp)

    sp = sub.add_parser("deficit", help="deficit report for a named test function")
    sp.add_argument("--d", type=int, default=S)
    sp.add_argument("--p", type=float, default=S)
    sp.add_argument("--family", choices=sfn.FAMILIES, default=S)
    sp.add_argument("--eps", type=float, default=S)
    sp.add_argument("--seed", type=int, default=S)
    sp.add_argument("--k-min", dest="k_min", type=int, default=S)
    sp.add_argument("--L", type=int, default=S)
    common(sp)

    sp = sub.add_parser("flow", help="entropy audit along a diffusion flow")
    sp.add_argument("--d", type=int, default=S)
    sp.add_argument("--p", type=float, default=S)
    sp.add_argument("--m", default=S, help="flow exponent or 'auto'")
    sp.add_argument("--t-end", dest="t_end", type=float, default=S)
    sp.add_argument("--sample-dt", dest="sample_dt", type=float, default=S)
    sp.add_argument("--seed", type=int, default=S)
    sp.add_argument("--L", type=int, default=S)
    sp.add_argument("--degree", type=int, default=S)
    sp.add_argument("--amplitude", type=float, default=S)
    sp.add_argument("--cfl", type=float, default=S)
    common(sp)

    sp = sub.add_parser("stability", help="global stability constant with its breakdown")
    sp.add_argument("--d", type=int, default=S)
    sp.add_argument("--p", type=float, default=S)
    common(sp)

    sp = sub.add_parser("gaussian", help="Gaussian interpolation audits")
    sp.add_argument("--p", type=float, default=S)
    sp.add_argument("--seed", type=int, default=S)
    sp.add_argument("--n", type=int, default=S)
    sp.add_argument("--K", type=int, default=S)
    sp.add_argument("--k-max", dest="k_max", type=int, default=S)
    common(sp)

    sp = sub.add_parser("sweep", help="stability constant over a (d, p) grid")
    sp.add_argument("--d", type=int, nargs="+", default=S)
    sp.add_argument("--n", type=int, default=S)
    sp.add_argument("--p-max", dest="p_max", type=float, default=S)
    common(sp)
    return ap


def resolve_config(args):
    """Merge defaults, config file and flags (flags win); unknown config keys are rejected."""
    command = args.command
    cfg = dict(DEFAULTS[command])
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise OutputError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DomainError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise DomainError("config file must hold a JSON object")
        unknown = sorted(set(data) - set(cfg))
        if unknown:
            raise DomainError(f"unknown config keys for {command}: {unknown}")
        cfg.update(data)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "out")}
    cfg.update(flags)
    return cfg


def run(argv=None):
    args = build_parser().parse_args(argv)
    cfg = resolve_config(args)
    result = COMMANDS[args.command](cfg)
    text = render(args.command, result, cfg["format"])
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OutputError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None):
    try:
        return run(argv)
    except SphereStabilityError as exc:
        code, cls, msg = exc.exit_code, exc.error_class, str(exc)
    except (ValueError, ZeroDivisionError) as exc:
        code, cls, msg = 2, "domain", str(exc)
    except (ArithmeticError, RuntimeError) as exc:
        code, cls, msg = 3, "numerical", str(exc)
    except OSError as exc:
        code, cls, msg = 4, "io", str(exc)
    sys.stderr.write(json.dumps({"error_class": cls, "exit_code": code, "message": msg}) + "\n")
    return code

"""Command-line front end.

Every command produces records of one schema::

    {command, inputs, value, stderr, target, error_estimate, seed, digest, versions, details, timestamp}

with unused fields set to null.  JSON output is one record per line; CSV
flattens the scalar fields and stores ``inputs``/``details`` as JSON strings.
Outputs are written atomically.  The digest covers the canonical inputs and
Monte Carlo settings, never the timestamp.

Configuration may come from an INI file (``--config``): keys of the
``[run]`` section mirror the long flags, and a ``[sweep]`` section lists
semicolon-separated values whose Cartesian product is run in order.  Flags
override the file.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import itertools
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone

import numpy as np
import scipy

from . import bootstrap as bs
from . import estimators as est
from .kernels import DomainError, LiouvilleParams, RateSpec, log_rate_function
from .montecarlo import MCConfig, ValidationError, canonical, config_digest
from .special import d_dozz_at_q, dozz_value, get_evaluator, log_upsilon, upsilon

COMMANDS = ("upsilon", "dozz", "threepoint", "fourpoint", "rates", "bessel-rep", "identity-checks", "bootstrap", "kpz",
            "verify")
MC_COMMANDS = {"threepoint", "fourpoint", "bessel-rep"}
FIELDS = ("command", "inputs", "value", "stderr", "target", "error_estimate", "seed", "digest", "versions", "details",
          "timestamp")
EXIT_OK, EXIT_FAIL, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3
KEYS = ("gamma", "mu", "momenta", "z", "t_grid", "kappa", "samples", "workers", "seed", "out", "format", "eps",
        "p_ladder", "criteria", "check")


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # not installed (source checkout)
        return "0+unknown"


VERSIONS = {"artifact": _version(), "numpy": np.__version__, "scipy": scipy.__version__}


# ---------------------------------------------------------------------------
# parsing helpers


def _items(text) -> list:
    if text is None:
        return []
    if isinstance(text, (list, tuple)):
        return list(text)
    return [v for v in str(text).replace(" ", "").split(",") if v]


def parse_floats(text) -> list:
    try:
        return [float(v) for v in _items(text)]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from None


def parse_complex(text) -> list:
    try:
        return [complex(v.replace("i", "j")) if isinstance(v, str) else complex(v) for v in _items(text)]
    except ValueError:
        raise ValidationError(f"expected comma-separated complex numbers, got {text!r}") from None


SCALARS = {"gamma": float, "mu": float, "kappa": float, "samples": int, "workers": int, "seed": int}


def _coerce(cfg: dict) -> dict:
    out = dict(cfg)
    for k, typ in SCALARS.items():
        if out.get(k) is not None:
            try:
                out[k] = typ(out[k])
            except ValueError:
                raise ValidationError(f"{k} must be {'an integer' if typ is int else 'a number'}, got {out[k]!r}") from None
    return out


def _encode(x):
    if isinstance(x, complex):
        return x.real if x.imag == 0 else [x.real, x.imag]
    if isinstance(x, dict):
        return {k: _encode(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_encode(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def make_record(command, inputs, value=None, stderr=None, target=None, error_estimate=None, seed=None, details=None,
                mc: dict | None = None) -> dict:
    inputs = canonical(_encode(inputs))
    digest = config_digest({"command": command, "inputs": inputs, "mc": mc or {}})
    rec = {"command": command, "inputs": inputs, "value": _encode(value), "stderr": stderr, "target": _encode(target),
           "error_estimate": error_estimate, "seed": seed, "digest": digest, "versions": VERSIONS,
           "details": canonical(_encode(details)) if details is not None else None,
           "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    return canonical(rec)


# ---------------------------------------------------------------------------
# commands


def _params(cfg) -> LiouvilleParams:
    if cfg.get("gamma") is None:
        raise ValidationError("gamma (--gamma) is required")
    return LiouvilleParams(float(cfg["gamma"]), float(cfg.get("mu") or 1.0))


def _mc(cfg) -> MCConfig:
    if cfg.get("seed") is None:
        raise ValidationError("master_seed (--seed) is required for Monte Carlo commands")
    return MCConfig(int(cfg.get("samples") or 2000), int(cfg["seed"]), int(cfg.get("workers") or 1))


def _momenta(cfg, counts) -> tuple:
    m = tuple(parse_floats(cfg.get("momenta")))
    if len(m) not in counts:
        raise ValidationError(f"momenta (--momenta) needs {' or '.join(map(str, counts))} values, got {len(m)}")
    return m


def cmd_upsilon(cfg):
    p = _params(cfg)
    zs = parse_complex(cfg.get("z"))
    if not zs:
        raise ValidationError("z (--z) is required: comma-separated points of the closed strip")
    ev = get_evaluator(p.gamma)
    out = []
    for z in zs:
        val = complex(upsilon(z, p.gamma))
        inner = 0 < z.real < p.q
        err = 1e-11 if inner else max(ev.d1_err, ev.d2_err) + abs(z) ** 3
        det = {"log_upsilon": _encode(complex(log_upsilon(z, p.gamma)))} if inner else {"method": "expansion"}
        out.append(make_record("upsilon", {"gamma": p.gamma, "z": z}, val if z.imag else val.real,
                               error_estimate=err, details=det))
    return out


def cmd_dozz(cfg):
    p = _params(cfg)
    m = _momenta(cfg, (2, 3))
    if len(m) == 2:
        val = d_dozz_at_q(*m, p)
        return [make_record("dozz", {"gamma": p.gamma, "mu": p.mu, "momenta": ["Q", *m], "derivative": 1}, val,
                            error_estimate=get_evaluator(p.gamma).d1_err * abs(val),
                            details={"reduced": d_dozz_at_q(*m, p, reduced=True)})]
    v = dozz_value(*m, p)
    val = v.value.real if v.value.imag == 0 else complex(v.value)
    return [make_record("dozz", {"gamma": p.gamma, "mu": p.mu, "momenta": list(m)}, val,
                        error_estimate=1e-10 * abs(val), details=v.as_dict())]


def _est_record(command, inputs, e, mc, target=None):
    return make_record(command, inputs, e.value, e.stderr, target, seed=mc.seed, details=e.extra, mc=mc.describe())


def cmd_threepoint(cfg):
    p = _params(cfg)
    m = _momenta(cfg, (3,))
    mc = _mc(cfg)
    e = est.three_point_mc(*m, p, mc)
    return [_est_record("threepoint", {"gamma": p.gamma, "mu": p.mu, "momenta": list(m)}, e, mc, target=bs.dozz(*m, p))]


def cmd_fourpoint(cfg):
    p = _params(cfg)
    m = _momenta(cfg, (4,))
    zs = parse_complex(cfg.get("z"))
    if not zs:
        raise ValidationError("z (--z) is required")
    mc = _mc(cfg)
    out = []
    for z in zs:
        e = est.four_point_mc(z, m, p, mc)
        out.append(_est_record("fourpoint", {"gamma": p.gamma, "mu": p.mu, "momenta": list(m), "z": z}, e, mc))
    return out


def cmd_rates(cfg):
    p = _params(cfg)
    m = _momenta(cfg, (1, 2, 4))
    alpha = m[0] if len(m) == 1 else m[0] + m[1]
    if cfg.get("kappa") is None:
        raise ValidationError("kappa (--kappa) is required")
    spec = RateSpec(alpha, float(cfg["kappa"]), p.gamma)
    ts = parse_floats(cfg.get("t_grid")) or [1.0, 2.0, 4.0, 8.0, 16.0]
    out = []
    for t in ts:
        lp = log_rate_function(spec, p, t, "printed")
        lc = log_rate_function(spec, p, t, "corrected")
        out.append(make_record("rates", {"gamma": p.gamma, "alpha": alpha, "kappa": spec.kappa, "t": t}, math.exp(lp),
                               details={"branch": spec.branch.value, "log_printed": lp, "log_corrected": lc,
                                        "corrected": math.exp(lc)}))
    return out


def cmd_bessel(cfg):
    p = _params(cfg)
    m = _momenta(cfg, (4,))
    kappa = float(cfg["kappa"]) if cfg.get("kappa") is not None else est.correlation_kappa(m, p)
    mc = _mc(cfg)
    e = est.limit_constant_bessel(m, kappa, p, mc)
    target = None
    if abs(kappa - est.correlation_kappa(m, p)) < 1e-12:
        try:
            target = est.dozz_limit_constant(m, p)["value"]
        except DomainError:  # no DOZZ oracle on this branch
            pass
    return [_est_record("bessel-rep", {"gamma": p.gamma, "mu": p.mu, "momenta": list(m), "kappa": kappa}, e, mc, target)]


def cmd_identity(cfg):
    p = _params(cfg)
    check = cfg.get("check") or "beta"
    out = []
    kappa = float(cfg.get("kappa") or 1.0)
    if check in ("beta", "all"):
        lam = 0.5 * kappa * p.gamma
        det = est.beta_moment_identity_check("one", "one", lam, kappa, p)
        out.append(make_record("identity-checks", {"check": "beta", "gamma": p.gamma, "kappa": kappa, "lambda": lam,
                                                   "x": "one", "y": "one"}, det["lhs"], target=det["rhs"],
                               error_estimate=det["rel_diff"], details=det))
        if cfg.get("seed") is not None:
            mc = _mc(cfg)
            r = est.beta_moment_identity_check(("lognormal", 0.0, 0.5), ("lognormal", 0.2, 0.3), lam, kappa, p, mc)
            out.append(make_record("identity-checks", {"check": "beta", "gamma": p.gamma, "kappa": kappa, "lambda": lam,
                                                       "x": "lognormal(0,0.5)", "y": "lognormal(0.2,0.3)"},
                                   r["lhs"], r["lhs_stderr"], r["rhs"], seed=mc.seed, details=r, mc=mc.describe()))
    if check in ("mu", "all"):
        m = _momenta(cfg, (3,))
        r = bs.mu_derivative_identity(m, p)
        out.append(make_record("identity-checks", {"check": "mu", "gamma": p.gamma, "mu": p.mu, "momenta": list(m)},
                               r["derivative"], error_estimate=r["scaling_error"], details=r))
    if check in ("cm", "all"):
        m = _momenta(cfg, (4,))
        zs = parse_complex(cfg.get("z")) or [complex(math.exp(-3.0))]
        mc = _mc(cfg)
        for z in zs:
            r = est.cameron_martin_check(abs(z), m, kappa, p, mc)
            out.append(make_record("identity-checks", {"check": "cm", "gamma": p.gamma, "momenta": list(m),
                                                       "kappa": kappa, "z_modulus": abs(z)},
                                   r["tilted"]["value"], r["tilted"]["stderr"], r["direct"]["value"], seed=mc.seed,
                                   details=r, mc=mc.describe()))
    if check in ("normalization", "all"):
        m = _momenta(cfg, (3,))
        mc = _mc(cfg)
        r = bs.normalization_identity_check(m, p, mc)
        out.append(make_record("identity-checks", {"check": "normalization", "gamma": p.gamma, "mu": p.mu,
                                                   "momenta": list(m)}, r["lhs"], r["lhs_stderr"], r["rhs"],
                               seed=mc.seed, details=r, mc=mc.describe()))
    if not out:
        raise ValidationError(f"unknown check {check!r}; use beta, mu, cm, normalization or all")
    return out


def cmd_bootstrap(cfg):
    p = _params(cfg)
    m = _momenta(cfg, (3, 4))
    if len(m) == 3:
        ladder = parse_floats(cfg.get("p_ladder")) or [1e-2, 3e-3, 1e-3]
        rep = bs.dozz_product_limit(*m, p, ladder)
        inputs = {"gamma": p.gamma, "a1": m[0], "a3": m[1], "a4": m[2]}
        return [make_record("bootstrap", {**inputs, "P": r["P"]}, r["modulus"], target=rep["target_modulus"],
                            error_estimate=r["rel_err"], details={**r, "observed_sign": rep["observed_sign"],
                                                                  "rate_slope": rep["rate_slope"]})
                for r in rep["rows"]]
    zs = parse_complex(cfg.get("z"))
    moduli = [abs(z) for z in zs] or [math.exp(-t) for t in (parse_floats(cfg.get("t_grid")) or [25.0, 100.0, 400.0])]
    rep = bs.bootstrap_limit_quadrature(m, p, moduli)
    return [make_record("bootstrap", {"gamma": p.gamma, "mu": p.mu, "momenta": list(m), "z_modulus": r["z_modulus"]},
                        r["scaled"], target=rep["target"], error_estimate=r["expansion_error"],
                        details={**r, "case": rep["case"], "monotone": rep["monotone"]}) for r in rep["rows"]]


def cmd_kpz(cfg):
    p = _params(cfg)
    out = []
    g2 = p.gamma**2
    frac = bs.Fraction(g2).limit_denominator(10**6)
    exact = abs(float(frac) - g2) < 1e-12
    out.append(make_record("kpz", {"gamma": p.gamma, "quantity": "exponent"},
                           float(bs.kpz_exponent(frac)) if exact else p.q**2 / 2 - 2,
                           details={"rational": str(bs.kpz_exponent(frac)) if exact else None}))
    for eps in parse_floats(cfg.get("eps")) or [1e-2, 1e-4, 1e-6]:
        out.append(make_record("kpz", {"gamma": p.gamma, "mu": p.mu, "quantity": "disc_mass", "eps": eps},
                               bs.disc_mass(eps, p, "display"), target=bs.disc_mass(eps, p, "exact"),
                               details=bs.radial_integral_check(eps, p)))
    zs = parse_complex(cfg.get("z"))
    mc = _mc(cfg) if (zs and cfg.get("seed") is not None) else None
    for z in zs:
        asym = bs.kpz_density(z, p, form="asymptotic")
        if mc is not None:
            val, se = bs.kpz_density(z, p, mc)
            out.append(make_record("kpz", {"gamma": p.gamma, "mu": p.mu, "quantity": "density", "z": z}, val, se,
                                   asym, seed=mc.seed, mc=mc.describe()))
        else:
            out.append(make_record("kpz", {"gamma": p.gamma, "mu": p.mu, "quantity": "density_asymptotic", "z": z},
                                   asym))
    return out


def cmd_verify(cfg):
    from .acceptance import run_all

    nums = [int(v) for v in parse_floats(cfg.get("criteria"))] or None
    res = run_all(nums, echo=lambda line: print(line, file=sys.stderr, flush=True))
    return [make_record("verify", {"criterion": r.number, "name": r.name}, bool(r.passed),
                        details={**r.details, "seconds": None}) for r in res]


RUNNERS = {"upsilon": cmd_upsilon, "dozz": cmd_dozz, "threepoint": cmd_threepoint, "fourpoint": cmd_fourpoint,
           "rates": cmd_rates, "bessel-rep": cmd_bessel, "identity-checks": cmd_identity, "bootstrap": cmd_bootstrap,
           "kpz": cmd_kpz, "verify": cmd_verify}


# ---------------------------------------------------------------------------
# output


def render(records, fmt: str) -> str:
    if fmt == "json":
        return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(FIELDS)
        for r in records:
            row = []
            for k in FIELDS:
                v = r.get(k)
                row.append("" if v is None else (json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v))
            w.writerow(row)
        return buf.getvalue()
    raise ValidationError(f"format must be json or csv, got {fmt!r}")


def write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# configuration


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="liouville-fusion", description="Liouville fusion numerics")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI file with [run] and optional [sweep] sections")
    ap.add_argument("--gamma", type=float)
    ap.add_argument("--mu", type=float)
    ap.add_argument("--momenta", help="a1,a2,a3[,a4]")
    ap.add_argument("--z", help="comma-separated points, complex as 0.3+0.1j")
    ap.add_argument("--t-grid", dest="t_grid", help="comma-separated t = log 1/|z| values")
    ap.add_argument("--kappa", type=float)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--seed", type=int, help="master seed (required for Monte Carlo commands)")
    ap.add_argument("--out", help="output file (default stdout)")
    ap.add_argument("--format", choices=("json", "csv"))
    ap.add_argument("--eps", help="disc radii for kpz")
    ap.add_argument("--p-ladder", dest="p_ladder", help="P values for the product limit")
    ap.add_argument("--criteria", help="criterion numbers for verify")
    ap.add_argument("--check", help="identity-checks: beta, mu, cm, normalization or all")
    return ap


def load_config(path: str):
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ValidationError(f"config file {path!r} not found")
    base = {k.replace("-", "_"): v for k, v in (cp["run"].items() if cp.has_section("run") else [])}
    sweep = {}
    if cp.has_section("sweep"):
        sweep = {k.replace("-", "_"): [v.strip() for v in val.split(";") if v.strip()] for k, val in cp["sweep"].items()}
    bad = [k for k in list(base) + list(sweep) if k not in KEYS]
    if bad:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(bad))}")
    return base, sweep


def resolve(args) -> list:
    base, sweep = load_config(args.config) if args.config else ({}, {})
    flags = {k: getattr(args, k) for k in KEYS if getattr(args, k, None) is not None}
    cfg = {**base, **flags}
    keys = [k for k in sweep if k not in flags]
    if not keys:
        return [_coerce(cfg)]
    return [_coerce({**cfg, **dict(zip(keys, combo))}) for combo in itertools.product(*(sweep[k] for k in keys))]


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfgs = resolve(args)
        fmt = cfgs[0].get("format") or "json"
        records = []
        for cfg in cfgs:
            if args.command in MC_COMMANDS:
                _mc(cfg)
            records.extend(RUNNERS[args.command](cfg))
        text = render(records, fmt)
    except (ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = cfgs[0].get("out")
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)
    if args.command == "verify" and not all(r["value"] for r in records):
        return EXIT_FAIL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""
Command-line front end.

Every run writes its outputs plus ``manifest.json`` (resolved config and the
sha256 of each output) under ``--out``.  Exit codes: 0 success, 2 invalid
input, 3 failed ``verify`` check, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import SpecMDPError
from .innovations import InnovationLaw
from .montecarlo import EXPERIMENTS, ExperimentConfig, default_workers
from .process import periodogram, simulate_path
from .rates import rate_functional, rate_scalar
from .spectral import MACoefficients, TorusFunction, spectral_density, torus_grid
from .toeplitz import build, norm_bound, operator_norm, trace_limit, trace_product

log = logging.getLogger("specmdp")

EXIT_OK, EXIT_INVALID, EXIT_VERIFY, EXIT_IO = 0, 2, 3, 4
SEED_ENV = "SPECMDP_SEED"
DEFAULT_SEED = 20_061_017


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Shortcuts
# ---------------------------------------------------------------------------


def parse_coeffs(spec) -> MACoefficients:
    """``iid``, ``ma1:b``, ``geom:rho[:terms]``, ``coeffs:lo:a0,a1,...`` or a dict."""
    if isinstance(spec, dict):
        return MACoefficients.from_dict(spec)
    if isinstance(spec, MACoefficients):
        return spec
    parts = str(spec).split(":")
    try:
        if parts == ["iid"]:
            return MACoefficients.iid()
        if parts[0] == "ma1" and len(parts) == 2:
            return MACoefficients.ma1(float(parts[1]))
        if parts[0] == "geom" and len(parts) in (2, 3):
            terms = int(parts[2]) if len(parts) == 3 else None
            return MACoefficients.geometric(float(parts[1]), terms)
        if parts[0] == "coeffs" and len(parts) == 3:
            return MACoefficients(int(parts[1]), [float(v) for v in parts[2].split(",")])
    except ValueError as exc:
        raise UsageError(f"bad coefficient shortcut {spec!r}: {exc}") from exc
    raise UsageError(f"unknown coefficient shortcut {spec!r}")


def parse_function(spec, variance: float = 1.0) -> TorusFunction:
    """Torus function from a shortcut.

    Densities of the process shortcuts (``iid``, ``ma1:b``, ``geom:rho``,
    ``coeffs:..``) scaled by ``variance``; ``2cos``; ``cos[:k[:amp]]``;
    ``const:c``; ``cosines:b0,b1,..`` for sum_k b_k cos(k theta); or a dict.
    """
    if isinstance(spec, TorusFunction):
        return spec
    if isinstance(spec, dict):
        return TorusFunction.from_dict(spec)
    s = str(spec)
    parts = s.split(":")
    try:
        if s == "2cos":
            return TorusFunction.cosine(1, 2.0)
        if parts[0] == "cos" and len(parts) <= 3:
            k = int(parts[1]) if len(parts) > 1 else 1
            amp = float(parts[2]) if len(parts) > 2 else 1.0
            return TorusFunction.cosine(k, amp)
        if parts[0] == "const" and len(parts) == 2:
            return TorusFunction.constant(float(parts[1]))
        if parts[0] == "cosines" and len(parts) == 2:
            return TorusFunction.from_cosine_series([float(v) for v in parts[1].split(",")])
    except ValueError as exc:
        raise UsageError(f"bad function shortcut {spec!r}: {exc}") from exc
    return spectral_density(parse_coeffs(s), variance)


def parse_law(spec) -> InnovationLaw:
    """``family[:variance[:weight:ratio]]`` or a dict."""
    if isinstance(spec, InnovationLaw):
        return spec
    if isinstance(spec, dict):
        return InnovationLaw.from_dict(spec)
    parts = str(spec).split(":")
    d = {"family": parts[0]}
    try:
        if len(parts) > 1:
            d["variance"] = float(parts[1])
        if len(parts) == 4:
            d["weight"], d["ratio"] = float(parts[2]), float(parts[3])
        elif len(parts) > 2:
            raise UsageError(f"bad law {spec!r}")
    except ValueError as exc:
        raise UsageError(f"bad law {spec!r}: {exc}") from exc
    return InnovationLaw.from_dict(d)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


# ---------------------------------------------------------------------------
# Config and outputs
# ---------------------------------------------------------------------------


def load_schema() -> dict:
    return json.loads(resources.files("specmdp").joinpath("schema/config.schema.json").read_text())


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as exc:
        raise UsageError(f"config: {exc.message}") from exc


def resolve_seed(cli_seed: int | None, config_seed: int | None) -> int:
    """--seed, then $SPECMDP_SEED, then the config file, then the default."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from exc
    return DEFAULT_SEED if config_seed is None else int(config_seed)


class Outputs:
    """Collects files under the output directory and writes the manifest."""

    def __init__(self, root: Path, subcommand: str, config: dict):
        self.root = root
        self.subcommand = subcommand
        self.config = config
        self.files: dict[str, str] = {}
        root.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> Path:
        path = self.root / name
        data = text.encode()
        path.write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()
        return path

    def write_json(self, name: str, obj) -> Path:
        return self.write(name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def write_rows(self, name: str, header, rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return self.write(name, buf.getvalue())

    def finish(self) -> None:
        manifest = {"specmdp_version": __version__, "subcommand": self.subcommand,
                    "config": self.config, "outputs": dict(sorted(self.files.items()))}
        text = json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n"
        (self.root / "manifest.json").write_text(text)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    coeffs, law = parse_coeffs(args.coeffs), parse_law(args.law)
    seed = resolve_seed(args.seed, None)
    rng = np.random.default_rng(seed)
    path = simulate_path(coeffs, law, args.n, args.ext, rng)
    cfg = {"coeffs": coeffs.as_dict(), "law": law.as_dict(), "n": args.n, "ext": args.ext, "seed": seed}
    out = Outputs(args.out, "simulate", cfg)
    out.write_rows("path.csv", ["k", "x"], ((k + 1, float(v)) for k, v in enumerate(path.values)))
    return out, {"n": args.n, "mean_square": float(np.mean(path.observed ** 2))}


def cmd_spectrum(args):
    f = parse_function(args.f, args.variance)
    theta = torus_grid(args.grid)
    vals = np.real(f.values(args.grid))
    cfg = {"f": f.as_dict(), "grid": args.grid}
    out = Outputs(args.out, "spectrum", cfg)
    out.write_rows("spectrum.csv", ["theta", "f"], zip(theta, vals))
    ks = range(-f.degree, f.degree + 1)
    out.write_rows("coefficients.csv", ["k", "r_k"], ((k, float(np.real(f.coefficient(k)))) for k in ks))
    return out, {"degree": f.degree, "mean": float(np.real(f.mean())), "max": float(vals.max())}


def cmd_periodogram(args):
    coeffs, law = parse_coeffs(args.coeffs), parse_law(args.law)
    seed = resolve_seed(args.seed, None)
    path = simulate_path(coeffs, law, args.n, 0, np.random.default_rng(seed))
    G = args.grid or 1 << max(0, (args.n - 1).bit_length())
    I = periodogram(path, G)
    cfg = {"coeffs": coeffs.as_dict(), "law": law.as_dict(), "n": args.n, "grid": G, "seed": seed}
    out = Outputs(args.out, "periodogram", cfg)
    f = spectral_density(coeffs, law.variance)
    out.write_rows("periodogram.csv", ["theta", "periodogram", "spectral_density"],
                   zip(torus_grid(G), I.values(), np.real(f.values(G))))
    return out, {"n": args.n, "grid": G, "mean": float(np.mean(I.values()))}


def cmd_toeplitz(args):
    cfg = {"operation": args.operation, "n": args.n}
    if args.operation == "trace":
        if not args.f:
            raise UsageError("toeplitz trace needs --f (repeatable)")
        gens = [parse_function(s) for s in args.f] + ([parse_function(args.h)] if args.h else [])
        value = trace_product(gens, args.n)
        cfg["generators"] = [g.as_dict() for g in gens]
        result = {"value": value}
    elif args.operation == "limit":
        gens = [parse_function(s) for s in (args.f or [])] + ([parse_function(args.h)] if args.h else [])
        if not gens:
            raise UsageError("toeplitz limit needs --f or --h")
        value = trace_limit(gens)
        cfg["generators"] = [g.as_dict() for g in gens]
        result = {"value": value}
    else:
        spec = args.h or (args.f[0] if args.f else None)
        if spec is None:
            raise UsageError(f"toeplitz {args.operation} needs --h")
        h = parse_function(spec)
        cfg["h"] = h.as_dict()
        T = build(h, args.n)
        if args.operation == "norm":
            q = math.inf if args.q in ("inf", "infinity") else float(args.q)
            cfg["q"] = args.q
            result = {"value": operator_norm(T), "bound": norm_bound(h, q, args.n)}
        else:
            result = {"order": args.n}
    if args.operation == "trace" and args.table:
        cfg["table"] = _ints(args.table)
    out = Outputs(args.out, "toeplitz", cfg)
    if args.operation == "trace" and args.table:
        limit = trace_limit(gens)
        rows = []
        for n in cfg["table"]:
            v = trace_product(gens, n)
            rows.append((n, v, limit, abs(v - limit)))
        out.write_rows("trace.csv", ["n", "value", "limit", "error"], rows)
    if args.operation == "matrix":
        out.write_rows("matrix.csv", [f"c{j}" for j in range(args.n)], build(parse_function(
            args.h or args.f[0]), args.n).dense())
    out.write_json("toeplitz.json", result)
    return out, result


def cmd_rate(args):
    f = parse_function(args.f, args.variance)
    cfg = {"f": f.as_dict(), "kappa4": args.kappa4}
    if args.eta:
        eta = parse_function(args.eta)
        cfg["eta"] = eta.as_dict()
        ev = rate_functional(eta, f, args.kappa4)
    else:
        if args.z is None:
            raise UsageError("rate needs --z (scalar rate) or --eta (functional rate)")
        cfg.update(lag=args.lag, z=args.z)
        ev = rate_scalar(args.z, f, args.kappa4, args.lag)
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=_json_default).encode()).hexdigest()
    result = {"value": ev.value.to_json(), "branch": ev.branch.value, "inputs_digest": digest}
    out = Outputs(args.out, "rate", cfg)
    out.write_json("rate.json", result)
    return out, result


EXPERIMENT_DEFAULTS = {
    "variance": {"n_ladder": [256, 1024, 4096], "replicates": 20_000, "lags": 1},
    "clt": {"n_ladder": [256, 1024], "replicates": 20_000, "h": "const:1"},
    "tail": {"n_ladder": [256, 1024, 4096], "replicates": 100_000, "lags": 0,
             "threshold": 1.0, "b_exponent": 0.1},
    "mgf": {"n_ladder": [8], "replicates": 100_000, "h": "const:1",
            "lambdas": [0.0, 0.02, 0.04, 0.06, 0.08]},
}


def experiment_config(args, name: str) -> tuple[ExperimentConfig, dict, int]:
    raw = dict(EXPERIMENT_DEFAULTS[name])
    raw.setdefault("coeffs", "ma1:0.5")
    raw.setdefault("law", {"family": "gaussian", "variance": 1.0})
    if args.config:
        raw.update(json.loads(Path(args.config).read_text()))
    for key in ("coeffs", "replicates", "lags", "threshold", "b_exponent", "h"):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    if args.law is not None:
        raw["law"] = parse_law(args.law).as_dict()
    if args.n is not None:
        raw["n_ladder"] = _ints(args.n)
    if getattr(args, "lambdas", None):
        raw["lambdas"] = _floats(args.lambdas)
    validate_config(raw)
    # worker count never changes results, so it stays out of the resolved config
    workers = args.workers or raw.pop("workers", None) or default_workers()
    raw["master_seed"] = resolve_seed(args.seed, raw.get("master_seed"))
    if isinstance(raw.get("law"), str):
        raw["law"] = parse_law(raw["law"]).as_dict()
    resolved = dict(raw)
    resolved["coeffs"] = parse_coeffs(raw["coeffs"]).as_dict()
    if raw.get("h") is not None:
        resolved["h"] = parse_function(raw["h"]).as_dict()
    cfg = ExperimentConfig.from_dict(resolved)
    return cfg, cfg.as_dict(), workers


def cmd_experiment(args):
    name = args.command
    cfg, resolved, workers = experiment_config(args, name)
    report = EXPERIMENTS[name](cfg, workers=workers)
    log.info("%s finished in %.2fs on %d worker(s)", name, report.metadata.get("wall_time_s", 0), workers)
    out = Outputs(args.out, name, resolved)
    out.write(f"{name}.csv", report.to_csv())
    summary = report.summary()
    out.write_json(f"{name}.json", summary)
    return out, {"passed": summary["passed"], "rows": summary["rows"]}


def cmd_verify(args):
    from .acceptance import run_all

    only = _ints(args.only) if args.only else None
    out = Outputs(args.out, "verify", {"criteria": only or "all"})
    results = run_all(only, echo=lambda line: print(line, file=sys.stderr))
    out.write_rows("acceptance.csv", ["criterion", "name", "pass", "detail"],
                   ((r.number, r.name, str(r.passed).lower(), r.detail) for r in results))
    failed = [r.number for r in results if not r.passed]
    return out, {"passed": not failed, "failed": failed}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specmdp", description=__doc__.strip().splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("specmdp-out"), help="output directory")
    common.add_argument("--seed", type=int, default=None,
                        help=f"master seed (overrides ${SEED_ENV} and the config file)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def process_args(sp):
        sp.add_argument("--coeffs", default="ma1:0.5", help="iid | ma1:b | geom:rho[:terms] | coeffs:lo:a0,a1,..")
        sp.add_argument("--law", default="gaussian", help="family[:variance[:weight:ratio]]")
        sp.add_argument("--n", type=int, default=256)

    sp = sub.add_parser("simulate", parents=[common], help="simulate one path")
    process_args(sp)
    sp.add_argument("--ext", type=int, default=0, help="extra samples past n for lagged sums")

    sp = sub.add_parser("spectrum", parents=[common], help="tabulate a spectral density")
    sp.add_argument("--f", default="ma1:0.5")
    sp.add_argument("--variance", type=float, default=1.0)
    sp.add_argument("--grid", type=int, default=4096)

    sp = sub.add_parser("periodogram", parents=[common], help="periodogram of a simulated path")
    process_args(sp)
    sp.add_argument("--grid", type=int, default=None)

    sp = sub.add_parser("toeplitz", parents=[common], help="Toeplitz traces, norms and matrices")
    sp.add_argument("operation", choices=["trace", "norm", "matrix", "limit"])
    sp.add_argument("--f", action="append", help="generator (repeatable)")
    sp.add_argument("--h", default=None, help="generator")
    sp.add_argument("--n", type=int, default=16)
    sp.add_argument("--q", default="inf")
    sp.add_argument("--table", default=None, help="trace: comma-separated n values for a convergence CSV")

    sp = sub.add_parser("rate", parents=[common], help="scalar or functional rate")
    sp.add_argument("--f", default="iid")
    sp.add_argument("--variance", type=float, default=1.0)
    sp.add_argument("--kappa4", type=float, default=0.0)
    sp.add_argument("--lag", type=int, default=0)
    sp.add_argument("--z", type=float, default=None)
    sp.add_argument("--eta", default=None, help="functional rate at eta instead of a scalar z")

    for name, text in (("variance", "covariance of lagged-product sums"),
                       ("clt", "CLT variance of the periodogram functional"),
                       ("tail", "moderate-deviation tail trend"),
                       ("mgf", "quadratic-form MGF against its bound")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--config", default=None, help="JSON config (see schema/config.schema.json)")
        sp.add_argument("--coeffs", default=None)
        sp.add_argument("--law", default=None)
        sp.add_argument("--n", default=None, help="comma-separated n ladder")
        sp.add_argument("--replicates", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None, help="default: available CPUs")
        if name in ("variance", "tail"):
            sp.add_argument("--lags", type=int, default=None)
        if name == "tail":
            sp.add_argument("--threshold", type=float, default=None)
            sp.add_argument("--b-exponent", dest="b_exponent", type=float, default=None)
        if name in ("clt", "mgf"):
            sp.add_argument("--h", default=None)
        if name == "mgf":
            sp.add_argument("--lambdas", default=None)

    sp = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    sp.add_argument("--only", default=None, help="comma-separated criterion numbers")
    return p


COMMANDS = {"simulate": cmd_simulate, "spectrum": cmd_spectrum, "periodogram": cmd_periodogram,
            "toeplitz": cmd_toeplitz, "rate": cmd_rate, "variance": cmd_experiment,
            "clt": cmd_experiment, "tail": cmd_experiment, "mgf": cmd_experiment,
            "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        out, result = COMMANDS[args.command](args)
        out.finish()
    except (UsageError, SpecMDPError, ValueError, json.JSONDecodeError) as exc:
        print(f"specmdp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"specmdp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(result, sort_keys=True, default=_json_default))
    if args.command == "verify" and not result["passed"]:
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

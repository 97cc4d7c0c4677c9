"""Command-line entry point.

Exit codes: 0 ok, 1 criterion failure, 2 input error, 3 numeric error, 4 invariant violation.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import DEFAULT_SEED, run_suite
from .boolean import (
    TEST_POINTS,
    boolean_convolve,
    boolean_cumulant,
    boolean_power,
    fixed_point_measure,
    fixed_point_residual,
    k_additivity_residual,
)
from .correspondence import backward, forward, stieltjes_invert
from .errors import CbciError, DomainError, NotErgodicError
from .measures import Atomic, Grid, Sum, ThorinPair, measure_from_json, pair_from_json
from .mechanisms import Quadruplet, is_ergodic, quadruplet_from_json, stationary_laplace
from .sector import bilinear_surface_csv, sector_report
from .simulate import StationaryLaw, empirical_laplace, simulate_path, verify_transient, z_scores

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC, EXIT_INVARIANT = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    inputs: list[str] = field(default_factory=list)
    seed: int = DEFAULT_SEED
    tol: float | None = None
    out: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tol is not None and not self.tol > 0:
            raise InputError("--tol must be positive")

    def digest(self) -> str:
        blob = json.dumps({"command": self.command, "inputs": self.inputs, "seed": self.seed,
                           "tol": self.tol, "options": self.options}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# helpers ----------------------------------------------------------------------------------


def _clean(obj):
    """Make an object strict-JSON safe: non-finite floats become strings, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _dump(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _load(path: str) -> dict:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
        obj = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise InputError(f"{path}: expected a JSON object")
    return obj


def _grid(text: str | None, name: str) -> np.ndarray | None:
    """Parse 'lo:hi:n' (linear), 'lo:hi:n:log' or a comma list; must be strictly increasing."""
    if text is None:
        return None
    try:
        if ":" in text:
            parts = text.split(":")
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
            log = len(parts) > 3 and parts[3] == "log"
            g = np.geomspace(lo, hi, n) if log else np.linspace(lo, hi, n)
        else:
            g = np.array([float(v) for v in text.split(",")])
    except (ValueError, IndexError) as exc:
        raise InputError(f"malformed {name} grid {text!r}") from exc
    if g.size == 0 or np.any(np.diff(g) <= 0):
        raise InputError(f"{name} grid must be strictly increasing")
    return g


def _source(obj: dict) -> ThorinPair | Quadruplet:
    if "kind" in obj:
        return ThorinPair(0.0, measure_from_json(obj))
    if "m" in obj:
        return pair_from_json(obj)
    if "a" in obj and "b" in obj:
        return quadruplet_from_json(obj)
    raise InputError("input must be a measure, a Thorin pair {q, m} or a quadruplet {a, b, M, delta}")


class Emitter:
    def __init__(self, cfg: RunConfig, as_json: bool):
        self.cfg = cfg
        self.as_json = as_json
        self.out = Path(cfg.out) if cfg.out else None
        if self.out:
            self.out.mkdir(parents=True, exist_ok=True)

    def stamp(self, payload: dict) -> dict:
        return {"version": __version__, "config_hash": self.cfg.digest(), "command": self.cfg.command, **payload}

    def write(self, name: str, text: str) -> None:
        if self.out:
            (self.out / name).write_text(text)

    def report(self, name: str, payload: dict, summary: str) -> None:
        doc = _dump(self.stamp(payload))
        self.write(name, doc)
        sys.stdout.write(doc if self.as_json else summary.rstrip() + "\n")


# commands ---------------------------------------------------------------------------------


def cmd_correspond(cfg: RunConfig, em: Emitter) -> int:
    src = _source(_load(cfg.inputs[0]))
    x_grid = _grid(cfg.options.get("x_grid"), "x")
    if isinstance(src, ThorinPair):
        res = forward(src, x_grid=x_grid)
    else:
        res = backward(src.a, src.b, src.M, x_grid=x_grid)
    payload = res.to_json()
    payload["ok"] = res.ok
    measure = res.M if res.direction == "forward" else res.m
    if res.method == "inversion":
        em.write("density.csv", _density_csv(measure))
    summary = (f"{res.direction} via {res.method}: a={res.a!r} b={res.b!r} q={res.q!r} "
               f"residual={res.identity_residual:.3g}" + (f" note={res.details['note']}" if "note" in res.details else ""))
    em.report("correspond.json", payload, summary)
    if not res.ok and (cfg.tol is None or res.identity_residual > cfg.tol):
        return EXIT_INVARIANT
    return EXIT_OK


def _density_csv(measure) -> str:
    """Rows (x, density, atom_mass) for the grid and atomic parts of an inverted measure."""
    parts = measure.parts if isinstance(measure, Sum) else [(1.0, measure)]
    rows = []
    for c, p in parts:
        if isinstance(p, Grid):
            rows.extend((float(x), c * float(d), 0.0) for x, d in zip(p.u, p.values))
        elif isinstance(p, Atomic):
            rows.extend((float(x), 0.0, c * float(w)) for x, w in zip(p.x, p.w))
    rows.sort()
    return "x,density,atom_mass\n" + "".join(f"{x!r},{d!r},{w!r}\n" for x, d, w in rows)


def cmd_sector(cfg: RunConfig, em: Emitter) -> int:
    src = _source(_load(cfg.inputs[0]))
    basis = _grid(cfg.options.get("basis"), "basis")
    delta = cfg.options.get("delta")
    if isinstance(src, Quadruplet) and not is_ergodic(src):
        raise NotErgodicError("the quadruplet has no stationary distribution")
    kwargs = {} if basis is None else {"basis": tuple(basis)}
    rep = sector_report(src, delta, **kwargs)
    tol = cfg.tol if cfg.tol is not None else 1e-6
    violations = rep.violations(tol)
    payload = rep.to_json()
    payload["violations"] = violations
    quad = src if isinstance(src, Quadruplet) else None
    if quad is None:
        res = forward(src)
        quad = Quadruplet(res.a, res.b, res.M, 1.0 if delta is None else delta)
    surface = np.asarray(rep.basis)
    em.write("surface.csv", bilinear_surface_csv(quad, delta, surface, surface))
    summary = "\n".join(f"{k}: {v}" for k, v in payload.items() if k != "matrices")
    em.report("sector.json", payload, summary)
    if violations:
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, em: Emitter) -> int:
    src = _source(_load(cfg.inputs[0]))
    if not isinstance(src, Quadruplet):
        raise InputError("simulate needs a quadruplet {a, b, M, delta}")
    o = cfg.options
    lams = _grid(o.get("lambdas"), "lambda")
    lams = np.linspace(0.2, 3.0, 10) if lams is None else lams
    if o.get("stationary"):
        start = StationaryLaw(backward(src.a, src.b, src.M).pair, src.delta)
    else:
        start = float(o.get("x0", 1.0))
    ens = simulate_path(src, None, start, float(o["horizon"]), o.get("dt"), seed=cfg.seed, paths=int(o["paths"]))
    summary = ens.summary()
    emp, err = empirical_laplace(ens, lams)
    stat = np.array([stationary_laplace(src, float(lam)) for lam in lams])
    summary["stationary_z"] = z_scores(emp, err, stat).tolist()
    if not o.get("stationary"):
        summary["transient"] = verify_transient(src, None, start, ens.T, lams, ens).to_json()
    summary["lambda"] = lams.tolist()
    em.write("paths.csv", ens.to_csv())
    text = "\n".join(f"{k}: {v}" for k, v in summary.items() if k not in ("transient",))
    if "transient" in summary:
        text += f"\ntransient max |z|: {summary['transient']['max_abs_z']:.3g}"
    em.report("simulate.json", summary, text)
    return EXIT_OK


def cmd_invert(cfg: RunConfig, em: Emitter) -> int:
    src = _source(_load(cfg.inputs[0]))
    x = _grid(cfg.options.get("x_grid"), "x")
    if x is None:
        raise InputError("invert needs --x-grid")
    if isinstance(src, ThorinPair):
        res = forward(src)
        q, m, a, b = src.q, src.m, res.a, res.b

        def G(z):
            return a - b / z - 1.0 / (z * (np.asarray(m.stieltjes(z)) - q))

        target = "M"
    else:
        res = backward(src.a, src.b, src.M)
        a, b, M, q = src.a, src.b, src.M, res.q

        def G(z):
            return q + 1.0 / (a * z - b - z * np.asarray(M.stieltjes(z)))

        target = "m"
    inv = stieltjes_invert(G, x)
    em.write("inversion.csv", inv.to_csv())
    payload = {"target": target, "x": inv.x, "density": inv.density, "atom_mass": inv.atom_mass,
               "converged": inv.converged, "error": inv.error}
    em.report("invert.json", payload, inv.to_csv())
    return EXIT_OK if bool(np.all(inv.converged)) else EXIT_NUMERIC


def _prob_measure(path: str):
    obj = _load(path)
    return measure_from_json(obj["m"] if "m" in obj else obj)


def cmd_boolean(cfg: RunConfig, em: Emitter) -> int:
    o = cfg.options
    op = o["op"]
    tol = cfg.tol if cfg.tol is not None else 1e-10
    if op == "conv":
        m1, m2 = _prob_measure(cfg.inputs[0]), _prob_measure(cfg.inputs[1])
        res = boolean_convolve(m1, m2)
        resid = k_additivity_residual(m1, m2, res, TEST_POINTS)
    elif op == "pow":
        m = _prob_measure(cfg.inputs[0])
        t = float(o["t"])
        res = boolean_power(m, t)
        resid = float(np.max(np.abs(boolean_cumulant(res, TEST_POINTS) - t * boolean_cumulant(m, TEST_POINTS))))
    else:
        q, a, b = float(o["q"]), float(o["a"]), float(o["b"])
        pair = fixed_point_measure(q, a, b)
        res = pair.m
        resid = fixed_point_residual(q, a, b)
        tol = cfg.tol if cfg.tol is not None else 1e-8
    payload = {"operation": op, "measure": res.to_json(), "residual": resid, "tolerance": tol}
    em.report("boolean.json", payload, f"{op}: residual {resid:.3g}\n{json.dumps(_clean(res.to_json()))}")
    return EXIT_OK if resid <= tol else EXIT_INVARIANT


def cmd_verify(cfg: RunConfig, em: Emitter) -> int:
    only = cfg.options.get("only")
    numbers = None if not only else [int(v) for v in only.split(",")]
    results = run_suite(seed=cfg.seed, tol=cfg.tol, only=numbers)
    payload = {"criteria": [r.to_json() for r in results], "all_passed": all(r.passed for r in results),
               "seed": cfg.seed}
    em.report("verify.json", payload, "\n".join(r.line() for r in results))
    return EXIT_OK if payload["all_passed"] else EXIT_FAIL


COMMANDS = {
    "correspond": cmd_correspond, "sector": cmd_sector, "simulate": cmd_simulate,
    "invert": cmd_invert, "boolean": cmd_boolean, "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS, help="override tolerance")
    common.add_argument("--out", default=argparse.SUPPRESS, help="directory for artifacts")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master RNG seed")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="print JSON to stdout")

    p = argparse.ArgumentParser(prog="cbci", parents=[common],
                                description="CBCI processes, generalized gamma convolutions and sector bounds")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("correspond", parents=[common], help="forward or backward correspondence")
    c.add_argument("input", help="measure, Thorin pair or quadruplet JSON ('-' for stdin)")
    c.add_argument("--x-grid", help="extra inversion points, 'lo:hi:n[:log]' or a comma list")

    s = sub.add_parser("sector", parents=[common], help="sector constant report")
    s.add_argument("input")
    s.add_argument("--delta", type=float)
    s.add_argument("--basis", help="rates of the exponential basis")

    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo paths of a quadruplet")
    m.add_argument("input")
    m.add_argument("--paths", type=int, default=10_000)
    m.add_argument("--dt", type=float)
    m.add_argument("--horizon", type=float, default=1.0)
    m.add_argument("--x0", type=float, default=1.0)
    m.add_argument("--stationary", action="store_true", help="start from the stationary law")
    m.add_argument("--lambdas", help="Laplace transform grid")

    i = sub.add_parser("invert", parents=[common], help="Stieltjes-Perron inversion on a grid")
    i.add_argument("input")
    i.add_argument("--x-grid", required=True)

    b = sub.add_parser("boolean", parents=[common], help="Boolean convolution algebra")
    bsub = b.add_subparsers(dest="op", required=True)
    bc = bsub.add_parser("conv", parents=[common])
    bc.add_argument("m1")
    bc.add_argument("m2")
    bp = bsub.add_parser("pow", parents=[common])
    bp.add_argument("m")
    bp.add_argument("--t", type=float, required=True)
    bf = bsub.add_parser("fixed-point", parents=[common])
    bf.add_argument("--q", type=float, default=0.0)
    bf.add_argument("--a", type=float, default=0.0)
    bf.add_argument("--b", type=float, default=0.0)

    v = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    v.add_argument("--only", help="comma list of criterion numbers")
    return p


def _config(ns: argparse.Namespace) -> RunConfig:
    d = vars(ns).copy()
    command = d.pop("command")
    seed = d.pop("seed", DEFAULT_SEED)
    tol = d.pop("tol", None)
    out = d.pop("out", None)
    d.pop("json", None)
    inputs = [d.pop(k) for k in ("input", "m1", "m2", "m") if k in d]
    return RunConfig(command, inputs, seed, tol, out, d)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        cfg = _config(ns)
        em = Emitter(cfg, getattr(ns, "json", False))
        return COMMANDS[cfg.command](cfg, em)
    except (InputError, KeyError, TypeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NotErgodicError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CbciError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

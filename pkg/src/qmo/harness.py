"""
Command-line harness: run a configured problem, compare the two backends, or
run the built-in invariant suite.

    qmo run config.json [--output-dir DIR] [--seed S] [--backend classical|quantum]
    qmo compare config.json [--output-dir DIR] [--seed S]
    qmo validate

Exit codes: 0 clean, 1 bad configuration, 2 line-search failure (``run``),
3 failed checks (``compare`` / ``validate``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from qmo import manifolds as mf
from qmo import problems as pb
from qmo import qstate as qs
from qmo.exceptions import QMOError
from qmo.optim import (
    Backend,
    RunReport,
    SolverConfig,
    Termination,
    backend_gaps,
    make_backend,
    solve,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_LINE_SEARCH = 2
EXIT_CHECK_FAILED = 3

PROBLEMS = ("eigenstate", "pilot", "beamforming", "ris", "grassmann")
GRID = ((2, 2), (4, 3), (8, 5), (16, 4))
TRACE_HEADER = ("iter", "objective", "grad_norm", "step")
DEFAULT_OUTPUT_DIR = "qmo_output"

BACKEND_GAP_TOL = 1e-8
ORACLE_TOL = 1e-6
OFFSET_TOL = 1e-10


class ConfigError(QMOError, ValueError):
    """A run configuration that cannot be used; the message is a one-line diagnostic."""


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    problem: str
    dims: dict[str, int]
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    output_dir: str | None = None
    emit_trace: bool = True

    def objective(self) -> pb.TraceObjective:
        kind = "eigenstate" if self.problem == "grassmann" else self.problem
        prob = pb.generate_scenario(kind, self.dims, self.seed)
        return pb.as_objective(prob, "grassmann" if self.problem == "grassmann" else None)


def _key_line(text: str, key: str) -> int:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else 1


def parse_config(text: str, source: str = "<config>", *, seed: int | None = None,
                 backend: str | None = None) -> RunConfig:
    """Parse and validate a JSON run configuration.

    ``seed`` and ``backend`` override the file. Any problem is reported as a
    :class:`ConfigError` whose message starts with ``source:line:``.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}") from None

    def fail(key: str, msg: str):
        raise ConfigError(f"{source}:{_key_line(text, key)}: {msg}")

    if not isinstance(doc, dict):
        raise ConfigError(f"{source}:1: top level must be a JSON object")
    known = {"problem", "dims", "seed", "solver", "output_dir", "emit_trace"}
    for key in doc:
        if key not in known:
            fail(key, f"unknown key '{key}'")
    for key in ("problem", "dims"):
        if key not in doc:
            raise ConfigError(f"{source}:1: missing required key '{key}'")

    problem = doc["problem"]
    if problem not in PROBLEMS:
        fail("problem", f"'problem' must be one of {', '.join(PROBLEMS)}, got {problem!r}")
    dims = doc["dims"]
    if not isinstance(dims, dict):
        fail("dims", "'dims' must be an object")
    kind = "eigenstate" if problem == "grassmann" else problem
    for key in pb.SCENARIO_DIMS[kind]:
        if key not in dims:
            fail("dims", f"missing required key 'dims.{key}' for problem '{problem}'")

    cfg_seed = doc.get("seed", 0)
    if isinstance(cfg_seed, bool) or not isinstance(cfg_seed, int):
        fail("seed", "'seed' must be an integer")
    if seed is not None:
        cfg_seed = seed
    emit = doc.get("emit_trace", True)
    if not isinstance(emit, bool):
        fail("emit_trace", "'emit_trace' must be true or false")
    out = doc.get("output_dir")
    if out is not None and not isinstance(out, str):
        fail("output_dir", "'output_dir' must be a string")

    solver_doc = doc.get("solver", {})
    if not isinstance(solver_doc, dict):
        fail("solver", "'solver' must be an object")
    solver_doc = dict(solver_doc)
    # the run seed drives the start point unless the solver block pins its own
    if seed is not None or "seed" not in solver_doc:
        solver_doc["seed"] = cfg_seed
    if backend is not None:
        solver_doc["backend"] = backend
    try:
        solver = SolverConfig.from_dict(solver_doc)
    except (TypeError, ValueError) as e:
        fail("solver", f"bad solver options: {e}")

    cfg = RunConfig(problem, dict(dims), int(cfg_seed), solver, out, emit)
    try:
        cfg.objective()
    except pb.MissingDimensionError as e:
        fail("dims", f"missing required key 'dims.{e.key}' for problem '{problem}'")
    except (QMOError, ValueError, TypeError) as e:
        fail("dims", f"dims rejected: {e}")
    return cfg


def load_config(path: str | Path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}:0: cannot read config: {e.strerror}") from None
    return parse_config(text, str(path), **overrides)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


def point_to_json(X: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(X)]


def point_from_json(doc: list) -> np.ndarray:
    return np.array([[complex(re_, im) for re_, im in row] for row in doc])


def result_document(report: RunReport) -> dict[str, Any]:
    return {
        "objective": float(report.objective),
        "termination": report.termination.value,
        "iters": int(report.iters),
        "wall_time_s": float(report.wall_time),
        "final_point": point_to_json(report.final_point.X),
    }


def _num(x: float) -> str:
    # 17 significant digits round-trips every double
    return format(float(x), ".16e")


def trace_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in report.iterates:
        w.writerow([r.iter, _num(r.objective), _num(r.grad_norm), _num(r.step)])
    return buf.getvalue()


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _output_dir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override or cfg.output_dir or DEFAULT_OUTPUT_DIR)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------
# run / compare
# --------------------------------------------------------------------------


def run(cfg: RunConfig) -> RunReport:
    return solve(cfg.objective(), config=cfg.solver)


def cmd_run(config_path, output_dir: str | None = None, seed: int | None = None,
            backend: str | None = None) -> int:
    try:
        cfg = load_config(config_path, seed=seed, backend=backend)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    report = run(cfg)
    out = _output_dir(cfg, output_dir)
    _write_json(out / "result.json", result_document(report))
    if cfg.emit_trace:
        (out / "trace.csv").write_text(trace_csv(report))
    print(f"{cfg.problem}: objective {report.objective:.12g} after {report.iters} iterations "
          f"({report.termination.value})")
    return EXIT_LINE_SEARCH if report.termination is Termination.LINE_SEARCH_FAIL else EXIT_OK


def _oracle_gap(obj: pb.TraceObjective, reports: Iterable[RunReport]) -> float | None:
    if obj.optimum is None:
        return None
    scale = max(abs(obj.optimum), 1e-300)
    return max(abs(r.objective - obj.optimum) / scale for r in reports)


def _pilot_checks(obj: pb.TraceObjective, classical: RunReport, quantum: RunReport, seed: int) -> dict:
    prob = obj.problem
    X0 = mf.random_point(obj.descriptor, seed)
    rows = {}
    for label, X in (("start", X0.X), ("classical_final", classical.final_point.X),
                     ("quantum_final", quantum.final_point.X)):
        s = qs.encode(X)
        dense = pb.pilot_objective_trace(prob, X) - pb.pilot_objective_direct(prob, X)
        register = pb.pilot_trace_quantum(prob, s) - pb.pilot_contamination_quantum(prob, s)
        err = max(abs(dense - prob.offset), abs(register - prob.offset))
        rows[label] = {"offset": prob.offset, "dense": dense, "register": register, "error": err}
    ok = all(r["error"] <= OFFSET_TOL for r in rows.values())
    return {"pilot_offset": {"points": rows, "tol": OFFSET_TOL, "pass": ok}}


def compare(cfg: RunConfig) -> dict[str, Any]:
    """Run both backends from the same start; the result is the compare.json document."""
    obj = cfg.objective()
    a = solve(obj, config=cfg.solver.with_(backend=Backend.CLASSICAL))
    b = solve(obj, config=cfg.solver.with_(backend=Backend.QUANTUM))
    gaps = backend_gaps(a, b)
    max_gap = float(gaps.max())
    oracle_gap = _oracle_gap(obj, (a, b))
    checks = _pilot_checks(obj, a, b, cfg.solver.seed) if obj.name == "pilot" else {}
    ok = (max_gap <= BACKEND_GAP_TOL
          and (oracle_gap is None or oracle_gap <= ORACLE_TOL)
          and all(c["pass"] for c in checks.values()))
    return {
        "problem": cfg.problem,
        "seed": cfg.seed,
        "per_iteration_gap": [float(g) for g in gaps],
        "max_abs_gap": max_gap,
        "oracle_gap": oracle_gap,
        "checks": checks,
        "runs": {
            name: {"objective": r.objective, "termination": r.termination.value, "iters": r.iters}
            for name, r in (("classical", a), ("quantum", b))
        },
        "pass": bool(ok),
    }


def cmd_compare(config_path, output_dir: str | None = None, seed: int | None = None) -> int:
    try:
        cfg = load_config(config_path, seed=seed)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    doc = compare(cfg)
    _write_json(_output_dir(cfg, output_dir) / "compare.json", doc)
    gap = doc["oracle_gap"]
    print(f"{cfg.problem}: max_abs_gap {doc['max_abs_gap']:.3e}, oracle_gap "
          f"{'n/a' if gap is None else f'{gap:.3e}'}: {'PASS' if doc['pass'] else 'FAIL'}")
    return EXIT_OK if doc["pass"] else EXIT_CHECK_FAILED


# --------------------------------------------------------------------------
# validate
# --------------------------------------------------------------------------


def grid_dims(problem: str, n: int, d: int) -> dict[str, int]:
    """Scenario dimensions whose optimization variable is (about) ``n x d``.

    Pilot design needs more users than pilot symbols, so its variable is the
    transposed ``d x n`` (``d x (n + 1)`` when ``n == d``) with ``L = 4`` access points.
    """
    if problem in ("eigenstate", "grassmann"):
        return {"n": n, "p": d}
    if problem == "beamforming":
        return {"n_t": n, "n_r": d}
    if problem == "ris":
        return {"N": n, "M": d}
    if problem == "pilot":
        return {"L": 4, "K_users": n if n > d else d + 1, "T": d}
    raise ValueError(f"unknown problem '{problem}'")


@dataclass
class CheckRow:
    name: str
    size: str
    error: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(self.error <= self.tol)


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def _random_tangent(point: mf.ManifoldPoint, rng) -> mf.TangentVector:
    n, d = point.descriptor.shape
    G = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    if point.descriptor.field is mf.Field.REAL:
        G = G.real
    return mf.project_tangent(point, G)


def _retractions(desc: mf.ManifoldDescriptor) -> list[tuple[str, Callable]]:
    if desc.columnwise:
        return [("normalize", mf.retract_normalize), ("exponential", mf.retract_exp)]
    return [("qr", mf.retract_stiefel)]


def _geometry_checks(n: int, d: int, rng) -> list[tuple[str, float, float]]:
    out = []
    descs = [mf.ManifoldDescriptor.oblique(n, d), mf.ManifoldDescriptor.stiefel(n, d),
             mf.ManifoldDescriptor.grassmann(n, d), mf.ManifoldDescriptor.torus(n)]
    for desc in descs:
        tag = desc.kind.value
        x = mf.random_point(desc, int(rng.integers(2**31)))
        Z = rng.standard_normal(desc.shape) + 1j * rng.standard_normal(desc.shape)
        P1 = mf.project_tangent(x, Z).Z
        P2 = mf.project_tangent(x, P1).Z
        out.append((f"projection_idempotent[{tag}]", _rel(P2, P1), 1e-12))
        out.append((f"projection_tangent[{tag}]", mf.tangent_error(desc, x.X, P1) / max(1.0, np.linalg.norm(P1)), 1e-12))
        v = _random_tangent(x, rng)
        if v.norm <= 1e-12 * np.linalg.norm(Z):
            continue  # Gr(n, n) is a single point
        v = mf.TangentVector(x, v.Z / v.norm)
        for rname, R in _retractions(desc):
            h = 1e-6
            fd = (R(x, v, h).X - R(x, v, -h).X) / (2 * h)
            out.append((f"retraction_zero[{tag}/{rname}]", _rel(R(x, v, 0.0).X, x.X), 1e-12))
            out.append((f"retraction_first_order[{tag}/{rname}]", _rel(fd, v.Z), 1e-4))
            y = R(x, v, float(rng.uniform(0.1, 3.0)))
            out.append((f"retraction_feasible[{tag}/{rname}]", mf.membership_error(desc, y.X), 1e-10))
    x = mf.random_point(descs[0], int(rng.integers(2**31)))
    v = _random_tangent(x, rng)
    herm = ax = 0.0
    for k in range(d):
        A = mf.skew_generator(x.X[:, k], v.Z[:, k])
        herm = max(herm, float(np.max(np.abs(A.conj().T + A))))
        ax = max(ax, _rel(A @ x.X[:, k], v.Z[:, k]))
    out.append(("skew_antihermitian", herm, 0.0))
    out.append(("skew_maps_x_to_v", ax, 1e-12))
    return out


def _encoding_checks(n: int, d: int, rng) -> list[tuple[str, float, float]]:
    out = []
    X = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    Y = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    s, r = qs.encode(X), qs.encode(Y)
    out.append(("encode_decode_roundtrip", _rel(qs.decode(s), X), 1e-12))
    expected_q = int(np.ceil(np.log2(d))) + int(np.ceil(np.log2(n)))
    out.append(("qubit_count", float(abs(s.shape.num_qubits - expected_q)), 0.0))
    out.append(("overlap_inner_product", abs(qs.overlap_inner_product(s, r) - mf.inner(X, Y))
                / max(1.0, abs(mf.inner(X, Y))), 1e-10))
    M1, M2 = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)) for _ in range(2))
    B1, B2 = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) for _ in range(2))
    a, b = complex(rng.standard_normal(), rng.standard_normal()), float(rng.standard_normal())
    e1 = qs.expectation(s, qs.IndexedOperator(M1, B1))
    e2 = qs.expectation(s, qs.IndexedOperator(M2, B2))
    dense = a * qs.IndexedOperator(M1, B1).dense(s.shape) + b * qs.IndexedOperator(M2, B2).dense(s.shape)
    lhs = complex(np.vdot(s.amplitudes, dense @ s.amplitudes))
    out.append(("expectation_linearity", abs(lhs - (a * e1 + b * e2)) / max(1.0, abs(lhs)), 1e-12))
    # <M (x) B> = sum_{k,i} M[k,i] x_k^H B x_i / ||X||^2
    oracle = np.sum(M1 * (X.conj().T @ B1 @ X)) / np.linalg.norm(X) ** 2
    out.append(("expectation_oracle", abs(e1 - oracle) / max(1.0, abs(oracle)), 1e-12))

    desc = mf.ManifoldDescriptor.oblique(n, d)
    x = mf.random_point(desc, int(rng.integers(2**31)))
    Z = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    sx = qs.encode(x.X)
    proj = qs.decode(qs.quantum_project(sx, qs.encode(Z)))
    out.append(("quantum_projection", _rel(proj, mf.project_tangent(x, Z).Z), 1e-10))
    v = mf.project_tangent(x, Z)
    t = float(rng.uniform(0.1, 1.0))
    out.append(("quantum_retraction", _rel(qs.decode(qs.quantum_retract(sx, v, t)), mf.retract_exp(x, v, t).X), 1e-10))
    tor = mf.random_point(mf.ManifoldDescriptor.torus(n), int(rng.integers(2**31)))
    Zt = rng.standard_normal((1, n)) + 1j * rng.standard_normal((1, n))
    st = qs.encode(tor.X)
    vt = mf.project_tangent(tor, Zt)
    out.append(("quantum_projection[torus]",
                _rel(qs.decode(qs.quantum_project(st, qs.encode(Zt), real_tangent=True)), vt.Z), 1e-10))
    out.append(("quantum_retraction[torus]",
                _rel(qs.decode(qs.quantum_retract(st, vt, t)), mf.retract_exp(tor, vt, t).X), 1e-10))
    return out


def _gradient_checks(n: int, d: int, rng) -> list[tuple[str, float, float]]:
    out = []
    for problem in ("eigenstate", "grassmann", "pilot", "beamforming", "ris"):
        if problem == "grassmann" and n == d:
            continue
        cfg = RunConfig(problem, grid_dims(problem, n, d), seed=int(rng.integers(2**31)))
        obj = cfg.objective()
        be = make_backend(obj, SolverConfig())
        x = mf.random_point(obj.descriptor, int(rng.integers(2**31)))
        v = _random_tangent(x, rng)
        v = mf.TangentVector(x, v.Z / v.norm)
        g = be.grad(x)
        R = mf.retract_stiefel if not obj.descriptor.columnwise else mf.retract_exp
        h = 1e-6
        fd = obj.sign * (obj.value(R(x, v, h).X) - obj.value(R(x, v, -h).X)) / (2 * h)
        slope = mf.inner(g.Z, v.Z)
        # the Euclidean gradient sets the scale; the Riemannian one vanishes on Gr(n, n)-like cases
        scale = max(abs(slope), float(np.linalg.norm(obj.egrad(x.X))), 1e-300)
        out.append((f"gradient_fd[{problem}]", abs(fd - slope) / scale, 1e-5))
        fq = obj.value_quantum(qs.encode(x.X))
        out.append((f"objective_register[{problem}]", abs(fq - obj.value(x.X)) / max(1.0, abs(obj.value(x.X))), 1e-10))
    return out


def validation_rows(seed: int = 0) -> list[CheckRow]:
    rows = []
    rng = np.random.default_rng(seed)
    for n, d in GRID:
        size = f"{n}x{d}"
        for group in (_geometry_checks, _encoding_checks, _gradient_checks):
            for name, err, tol in group(n, d, rng):
                rows.append(CheckRow(name, size, float(err), tol))
    return rows


def cmd_validate(tolerance_scale: float = 1.0, seed: int = 0, stream=None) -> int:
    stream = stream or sys.stdout
    start = time.perf_counter()
    rows = validation_rows(seed)
    width = max(len(r.name) for r in rows)
    print(f"{'invariant':<{width}}  {'size':>5}  {'error':>10}  {'tol':>8}  result", file=stream)
    failed = 0
    for r in rows:
        tol = r.tol * tolerance_scale
        ok = r.error <= tol
        failed += not ok
        print(f"{r.name:<{width}}  {r.size:>5}  {r.error:10.3e}  {tol:8.1e}  {'PASS' if ok else 'FAIL'}", file=stream)
    elapsed = time.perf_counter() - start
    print(f"{len(rows) - failed}/{len(rows)} checks passed in {elapsed:.2f} s", file=stream)
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmo", description=__doc__.split("\n\n")[0].strip())
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "solve one configured problem"),
                        ("compare", "solve on both backends and compare traces")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="JSON run configuration")
        p.add_argument("--output-dir", help="directory for reports (default: config or ./qmo_output)")
        p.add_argument("--seed", type=int, help="override the config seed")
        if name == "run":
            p.add_argument("--backend", choices=[b.value for b in Backend])
    p = sub.add_parser("validate", help="run the invariant suite over the standard size grid")
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    p.add_argument("--tolerance-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.output_dir, args.seed, args.backend)
    if args.command == "compare":
        return cmd_compare(args.config, args.output_dir, args.seed)
    return cmd_validate(args.tolerance_scale, args.seed)


if __name__ == "__main__":
    sys.exit(main())

"""Experiment driver: convergence studies, preasymptotic runs and probes.

Configurations are JSON files with the fields of :class:`ExperimentConfig`;
unknown keys are rejected so runs stay reproducible.  Every command writes a
CSV table, a gnuplot-ready ``.dat`` twin and a text summary into ``--out``;
re-running a command with the same config produces byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    DEFAULT_SEED,
    consistency_probe,
    curved_probe,
    curved_rule_degree,
    fit_rate,
    hcurl_error,
    records_to_csv,
)
from .assembly import QuadratureConfig, assemble
from .mesh import structured_cube_mesh
from .problems import catalog
from .quadrature import (
    BUILTIN_LABELS,
    RefQuadratureRule,
    builtin_rule,
    rule_for_degree,
    tensorized_gl,
    verify_exactness,
)
from .solver import solve

__all__ = ["ExperimentConfig", "run_convergence", "run_preasymptotic", "run_probe", "run_quadcheck", "main"]

DEFAULT_MESH_NS = {1: [2, 4, 6, 8, 12, 16, 24], 2: [2, 4, 6, 8, 12]}

_CONFIG_KEYS = {"problem", "order", "mesh_ns", "q1", "q2", "q3", "solver_tol", "label",
                "fit_window", "expect_slope", "slope_tol", "expect_exit_index"}


@dataclass
class ExperimentConfig:
    problem: str = "cube_poly"
    order: int = 1
    mesh_ns: list = field(default_factory=list)
    q1: object = "pt1_offcenter"
    q2: object = "pt1_centroid"
    q3: object = "pt1_centroid"
    solver_tol: float = 1e-10
    label: str = ""
    fit_window: int = 4
    expect_slope: float = None        # asserted by the CLI --assert gate when set
    slope_tol: float = 0.1
    expect_exit_index: int = None     # preasymptotic --assert gate

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if not self.mesh_ns:
            self.mesh_ns = list(DEFAULT_MESH_NS[self.order])
        ns = list(self.mesh_ns)
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("mesh_ns must be strictly increasing")
        if not self.label:
            self.label = f"{self.problem.replace('(', '_').rstrip(')')}_k{self.order}"

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def rules(self) -> QuadratureConfig:
        return QuadratureConfig(resolve_rule(self.q1), resolve_rule(self.q2), resolve_rule(self.q3))


def resolve_rule(spec) -> RefQuadratureRule:
    """A rule from a label, a 'tensorized:n' string, or a required degree."""
    if isinstance(spec, RefQuadratureRule):
        return spec
    if isinstance(spec, int):
        return rule_for_degree(spec)
    if isinstance(spec, str):
        if spec.startswith("tensorized:"):
            return tensorized_gl(int(spec.split(":", 1)[1]))
        if spec.startswith("degree:"):
            return rule_for_degree(int(spec.split(":", 1)[1]))
        return builtin_rule(spec)
    raise TypeError(f"cannot interpret quadrature spec {spec!r}")


def _write(out_dir, name, text) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _emit_records(records, config, out_dir, extra_lines):
    csv_text = records_to_csv(records)
    dat_text = csv_text.replace(",", " ")
    _write(out_dir, f"{config.label}.csv", csv_text)
    _write(out_dir, f"{config.label}.dat", dat_text)
    _write(out_dir, f"{config.label}_summary.txt", "\n".join(extra_lines) + "\n")


def run_convergence(config: ExperimentConfig, out_dir):
    """Mesh sweep: assemble, solve, measure the H(curl) error, fit the rate."""
    entry = catalog(config.problem)
    rules = config.rules()
    records = []
    for n in config.mesh_ns:
        mesh = structured_cube_mesh(n)
        system = assemble(mesh, config.order, entry.coefficients, rules)
        fld, report = solve(system, tol=config.solver_tol)
        if fld is None:
            _emit_records(records, config, out_dir,
                          [f"ABORTED: solver did not converge at n={n} "
                           f"(residual {report.relative_residual:.3e})"])
            raise RuntimeError(f"solver did not converge at n={n}")
        records.append(hcurl_error(fld, (entry.exact, entry.exact_curl), 2 * config.order + 6,
                                   n=n, dofs=system.n_free, iterations=report.iterations))
    fit = fit_rate(records, "dofs", window=config.fit_window)
    lines = [
        f"problem {config.problem} order {config.order}",
        f"rules q1={rules.q1.label} q2={rules.q2.label} q3={rules.q3.label}",
        f"fitted slope vs dofs (last {min(config.fit_window, len(records))}): {fit.slope:.17g}",
        f"fit residual: {fit.residual:.17g}",
    ]
    _emit_records(records, config, out_dir, lines)
    return records, fit


def plateau_exit_index(errors) -> int | None:
    """First index whose error is at least 20% below the previous mesh's."""
    for i in range(1, len(errors)):
        if errors[i] <= 0.8 * errors[i - 1]:
            return i
    return None


def run_preasymptotic(config: ExperimentConfig, out_dir):
    """Convergence sweep plus the plateau-exit report for oscillatory problems."""
    entry = catalog(config.problem)
    rules = config.rules()
    records = []
    for n in config.mesh_ns:
        mesh = structured_cube_mesh(n)
        system = assemble(mesh, config.order, entry.coefficients, rules)
        fld, report = solve(system, tol=config.solver_tol)
        if fld is None:
            _emit_records(records, config, out_dir, [f"ABORTED at n={n}"])
            raise RuntimeError(f"solver did not converge at n={n}")
        records.append(hcurl_error(fld, (entry.exact, entry.exact_curl), 2 * config.order + 6,
                                   n=n, dofs=system.n_free, iterations=report.iterations))
    errs = [r.hcurl_error for r in records]
    exit_idx = plateau_exit_index(errs)
    lines = [
        f"problem {config.problem} order {config.order}",
        f"rules q1={rules.q1.label} q2={rules.q2.label} q3={rules.q3.label}",
        f"plateau exit index: {exit_idx if exit_idx is not None else 'none'}",
        f"plateau exit dofs: {records[exit_idx].dofs if exit_idx is not None else 'none'}",
    ]
    _emit_records(records, config, out_dir, lines)
    return records, exit_idx


def run_probe(kind: str, params: dict, out_dir):
    """Drive the consistency or curved probe and emit data plus fitted slope."""
    out_label = params.get("label", f"probe_{kind}")
    if kind == "consistency":
        order = params.get("order", 1)
        m = params.get("m", 1)
        mesh_ns = params.get("mesh_ns", [2, 4, 8, 12])
        problem = params.get("problem", "cube_oscillatory(1)")
        entry = catalog(problem)
        q1 = resolve_rule(params.get("q1", "pt1_centroid"))
        q2 = resolve_rule(params.get("q2", order + m - 1))
        q3 = resolve_rule(params.get("q3", order + m - 1))
        rows, fit = consistency_probe(order, mesh_ns, entry.coefficients,
                                      QuadratureConfig(q1, q2, q3), seed=params.get("seed", DEFAULT_SEED))
        header = "n h dphi dF"
        body = "\n".join(f"{n} {h:.17g} {dphi:.17g} {dF:.17g}" for n, h, dphi, dF in rows)
        exact = all(r[2] <= 1e-10 for r in rows)
        slope_line = "slope: exact" if exact else f"slope: {fit.slope:.17g}"
        _write(out_dir, f"{out_label}.dat", header + "\n" + body + "\n")
        _write(out_dir, f"{out_label}_summary.txt", slope_line + "\n")
        return rows, fit
    if kind == "curved":
        mode = params.get("mode", "mass")
        order = params.get("order", 1)
        m = params.get("m", 1)
        below = params.get("below", False)
        rows, fit = curved_probe(mode, order, m, below=below)
        degree = curved_rule_degree(mode, order, m) - (1 if below else 0)
        header = "s error"
        body = "\n".join(f"{s:.17g} {e:.17g}" for s, e in rows)
        _write(out_dir, f"{out_label}.dat", header + "\n" + body + "\n")
        _write(out_dir, f"{out_label}_summary.txt",
               f"mode {mode} order {order} m {m} rule degree {degree}\nslope: {fit.slope:.17g}\n")
        return rows, fit
    raise ValueError("probe kind must be 'consistency' or 'curved'")


def _parse_rule_dump(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    rules = []
    pos = 0
    while pos < len(lines):
        parts = lines[pos].split()
        label, degree, npts = parts[0], int(parts[1]), int(parts[2])
        pts, wts = [], []
        for row in lines[pos + 1: pos + 1 + npts]:
            x, y, z, w = (float(t) for t in row.split())
            pts.append([x, y, z])
            wts.append(w)
        rules.append((label, degree, np.array(pts), np.array(wts)))
        pos += 1 + npts
    return rules


def run_quadcheck(out_dir=None, custom_rules_path=None):
    """Certify every built-in rule at its declared degree and declared+1.

    Tensorized rules keep whatever degree their construction certified, so
    only tightness is re-checked for them.  Any failure is fatal.
    """
    lines = []
    ok = True
    to_check = [builtin_rule(lbl) for lbl in BUILTIN_LABELS]
    to_check += [tensorized_gl(n) for n in (2, 3, 4)]
    for rule in to_check:
        if rule.exactness_degree < 0:
            lines.append(f"{rule.label}: degenerate (degree {rule.exactness_degree}), skipped")
            continue
        at = verify_exactness(rule, rule.exactness_degree)
        above = verify_exactness(rule, rule.exactness_degree + 1)
        good = at.ok and not above.ok
        ok = ok and good
        lines.append(
            f"{rule.label}: degree {rule.exactness_degree} "
            f"pass={at.ok} tight={not above.ok} "
            f"worst_above={above.worst_monomial} err={above.worst_error:.3e}"
        )
    if custom_rules_path is not None:
        text = Path(custom_rules_path).read_text()
        customs = _parse_rule_dump(text)
        if not customs:
            lines.append("builtin only")
        for label, degree, pts, wts in customs:
            try:
                rule = RefQuadratureRule(pts, wts, degree, label)
                passed = verify_exactness(rule, degree).ok
                note = ""
            except ValueError as exc:
                passed = False
                note = f" ({exc})"
            ok = ok and passed
            lines.append(f"{label} (custom): degree {degree} pass={passed}{note}")
    else:
        lines.append("builtin only")
    report = "\n".join(lines) + "\n"
    if out_dir is not None:
        _write(out_dir, "quadcheck.txt", report)
    if not ok:
        raise RuntimeError("quadrature certification failed:\n" + report)
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="edgefem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("quad-check", "convergence", "preasymptotic", "probe"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--assert", dest="check", action="store_true",
                       help="exit 2 when the configured expectation is violated")
    args = parser.parse_args(argv)

    if args.command == "quad-check":
        try:
            report = run_quadcheck(args.out, custom_rules_path=args.config)
        except RuntimeError as exc:
            print(exc, file=sys.stderr)
            return 2
        print(report, end="")
        return 0

    if args.config is None:
        print("--config is required for this command", file=sys.stderr)
        return 1
    raw = json.loads(Path(args.config).read_text())

    if args.command == "probe":
        kind = raw.pop("kind", "consistency")
        expect = raw.pop("expect_min_slope", None)
        _, fit = run_probe(kind, raw, args.out)
        if args.check and expect is not None and fit.slope < expect:
            return 2
        return 0

    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        print(f"unknown config keys: {sorted(unknown)}", file=sys.stderr)
        return 1
    config = ExperimentConfig(**raw)

    if args.command == "convergence":
        _, fit = run_convergence(config, args.out)
        print(f"slope vs dofs: {fit.slope:.6f}")
        if args.check and config.expect_slope is not None \
                and abs(fit.slope - config.expect_slope) > config.slope_tol:
            return 2
        return 0

    records, exit_idx = run_preasymptotic(config, args.out)
    print(f"plateau exit index: {exit_idx}")
    if args.check and config.expect_exit_index is not None \
            and exit_idx != config.expect_exit_index:
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

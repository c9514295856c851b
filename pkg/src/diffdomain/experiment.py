"""End-to-end runs: geometry, assembly, time stepping and error norms for one config."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

from .config import ExperimentConfig
from .errors import ConfigurationError
from .extension import ProblemSpec
from .fem import CellQuadrature, QuadratureRule, StructuredGrid, write_coordinate_text
from .fem import assemble_weighted_mass, assemble_weighted_stiffness
from .geometry import ImplicitDomain, PhaseField
from .io import FieldDump, SweepWriter, ensure_directory, write_dump
from .norms import ErrorReport, SweepResult, weighted_errors
from .timestep import TransientSolution, run_transient

log = logging.getLogger(__name__)

FIELD_KINDS = ("omega", "solution", "exact", "error")


@dataclass
class RunOutcome:
    report: ErrorReport
    solution: TransientSolution
    phase: PhaseField
    quadrature: CellQuadrature
    spec: ProblemSpec


class Experiment:
    """Objects shared by every epsilon of a config: grid, domain, problem, quadrature rule."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.warnings = cfg.validate()
        self.domain: ImplicitDomain = cfg.domain()
        self.grid: StructuredGrid = cfg.grid()
        self.spec: ProblemSpec = cfg.problem()
        self.rule = QuadratureRule(cfg.quadrature_order)
        self.timegrid = cfg.timegrid()

    def phase(self, epsilon: float) -> PhaseField:
        return self.cfg.phase_field(self.domain, epsilon)

    def quadrature(self, pf: PhaseField) -> CellQuadrature:
        return CellQuadrature(self.grid, pf, self.rule, workers=self.cfg.workers, bitwise=self.cfg.bitwise)

    def run(self, epsilon: float) -> RunOutcome:
        cfg = self.cfg
        if not self.spec.has_exact:
            raise ConfigurationError(f"problem {self.spec.name!r} has no exact solution to measure errors against")
        tic = time.perf_counter()
        pf = self.phase(epsilon)
        cq = self.quadrature(pf)
        if cfg.debug_matrices:
            self._dump_matrices(pf, cq, epsilon)
        sol = run_transient(self.grid, pf, self.spec, self.timegrid, cfg.solver, rule=self.rule, cq=cq,
                            workers=cfg.workers, bitwise=cfg.bitwise)
        l2, h1, npts = weighted_errors(self.grid, cq, sol.final, self.spec.exact, self.spec.exact_gradient,
                                       self.timegrid.T)
        seconds = time.perf_counter() - tic
        report = ErrorReport(epsilon, l2, h1, npts, seconds, int(sum(sol.iterations)))
        log.info("eps=%g  L2=%.4e  H1=%.4e  (%.1fs, %d CG iterations)", epsilon, l2, h1, seconds,
                 report.iterations)
        return RunOutcome(report, sol, pf, cq, self.spec)

    def _dump_matrices(self, pf, cq, epsilon):
        out = ensure_directory(self.cfg.output_dir)
        M = assemble_weighted_mass(self.grid, pf, cq=cq)
        K = assemble_weighted_stiffness(self.grid, pf, self.spec, cq=cq)
        write_coordinate_text(M, out / f"mass_eps{epsilon:.6g}.txt")
        write_coordinate_text(K, out / f"stiffness_eps{epsilon:.6g}.txt")

    def fields(self, outcome: RunOutcome | None, epsilon: float, what=FIELD_KINDS) -> FieldDump:
        xy = self.grid.node_coordinates()
        pf = outcome.phase if outcome else self.phase(epsilon)
        dump = FieldDump(self.grid)
        T = self.timegrid.T
        for kind in what:
            if kind == "omega":
                dump.add("omega", pf.weight(xy))
            elif outcome is None:
                raise ConfigurationError(f"field {kind!r} needs a solved run")
            elif kind == "solution":
                dump.add("solution", outcome.solution.final)
            elif kind == "exact":
                dump.add("exact", self.spec.exact(T, xy[:, 0], xy[:, 1]))
            elif kind == "error":
                dump.add("error", outcome.solution.final - self.spec.exact(T, xy[:, 0], xy[:, 1]))
            else:
                raise ConfigurationError(f"unknown field {kind!r}; choose from {FIELD_KINDS}")
        return dump


def _tag(epsilon: float) -> str:
    return f"eps{epsilon:.6g}"


def run_single(cfg: ExperimentConfig, epsilon: float | None = None, write: bool = True) -> RunOutcome:
    """Solve for one epsilon (default: the first in the config) and write its outputs."""
    eps = cfg.epsilons[0] if epsilon is None else float(epsilon)
    exp = Experiment(cfg.replace(epsilons=(eps,)))
    if write and cfg.output_format != "none":
        ensure_directory(cfg.output_dir)
    outcome = exp.run(eps)
    if write and cfg.output_format != "none":
        with SweepWriter(cfg.output_dir / f"run_{_tag(eps)}.csv") as w:
            w.add(outcome.report)
        if cfg.output_format == "vtk":
            write_dump(exp.fields(outcome, eps), cfg.output_dir / f"fields_{_tag(eps)}.vtk", "vtk",
                       title=f"{cfg.problem_id} {cfg.domain_kind} eps={eps:g} t={cfg.T:g}")
    return outcome


def run_sweep(cfg: ExperimentConfig, csv_path: Path | None = None) -> SweepResult:
    """All epsilons of the config in order. Rows are flushed as they finish."""
    if len(cfg.epsilons) < 2:
        raise ConfigurationError("a sweep needs at least two epsilon values")
    exp = Experiment(cfg)
    writer = None
    if cfg.output_format != "none":
        writer = SweepWriter(csv_path or cfg.output_dir / "sweep.csv")
    result = SweepResult()
    try:
        for eps in cfg.epsilons:
            outcome = exp.run(eps)
            result.reports.append(outcome.report)
            if writer is not None:
                writer.add(outcome.report)
                if cfg.output_format == "vtk":
                    write_dump(exp.fields(outcome, eps), cfg.output_dir / f"fields_{_tag(eps)}.vtk", "vtk",
                               title=f"{cfg.problem_id} {cfg.domain_kind} eps={eps:g} t={cfg.T:g}")
    finally:
        if writer is not None:
            writer.close()
    return result


def dump_field(cfg: ExperimentConfig, epsilon: float, what: str, path: Path | None = None,
               fmt: str | None = None) -> Path:
    """Write one nodal field at t = T (or omega, which needs no solve)."""
    if what not in FIELD_KINDS:
        raise ConfigurationError(f"unknown field {what!r}; choose from {FIELD_KINDS}")
    fmt = fmt or ("vtk" if cfg.output_format == "vtk" else "csv")
    if fmt not in ("vtk", "csv"):
        raise ConfigurationError(f"field format must be vtk or csv, got {fmt!r}")
    exp = Experiment(cfg.replace(epsilons=(float(epsilon),)))
    path = Path(path) if path else cfg.output_dir / f"{what}_{_tag(epsilon)}.{fmt}"
    ensure_directory(path.parent)
    outcome = None if what == "omega" else exp.run(float(epsilon))
    dump = exp.fields(outcome, float(epsilon), (what,))
    return write_dump(dump, path, fmt, what, title=f"{what} {cfg.problem_id} {cfg.domain_kind} eps={epsilon:g}")


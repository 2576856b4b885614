"""End-to-end optimization pipelines and the experiment harness.

Two pipelines share the OC loop: the classical one computes sensitivities
by adjoint FEM each iteration; the surrogate-driven one asks the network
instead and touches FEM only to log true compliance for the trace. Both
start from the uniform feasible field and end in a binarization step; the
surrogate pipeline additionally runs the morphological filter.

Every pipeline is a pure function of (config, seed, model file); reported
wall times are informational only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cnn import load_model, predict
from .errors import DegenerateSensitivityError, InputError
from .fem import analyze
from .fields import DensityField, density_array
from .io import write_density_csv, write_json, write_pgm
from .mesh import (FemProblem, GridMesh, MaterialParams, anchor_element_mask,
                   bc_from_preset)
from .morphology import FilterConfig, FilterReport, apply_filter_pipeline
from .simp import (OcParams, OptimizationTrace, choose_threshold, oc_update,
                   run_simp, threshold_binarize)

CONFIG_VERSION = 1


def default_problem(nelx: int = 32, nely: int = 16,
                    material: MaterialParams | None = None,
                    preset: str = "cantilever-left-clamp-tip-load") -> FemProblem:
    """The verification problem: a 16x32-element cantilever."""
    mesh = GridMesh(nelx, nely)
    return FemProblem(mesh, material or MaterialParams(),
                      bc_from_preset(preset, mesh), bc_preset=preset)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one optimization run needs."""

    problem: FemProblem
    oc: OcParams
    filter_config: FilterConfig | None = None   # None -> anchors from the BCs
    model_path: str | None = None
    seed: int = 0
    snapshot_iters: tuple[int, ...] = (0, 5)

    def resolved_filter(self) -> FilterConfig:
        if self.filter_config is not None:
            return self.filter_config
        return FilterConfig(anchor_mask=anchor_element_mask(self.problem))


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from the documented JSON schema (version 1)."""
    if data.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise InputError(f"unsupported config version {data.get('version')}")
    try:
        prob = data.get("problem", {})
        material = MaterialParams(**prob.get("material", {}))
        mesh = GridMesh(int(prob.get("nelx", 32)), int(prob.get("nely", 16)))
        if "bc_file" in prob and prob["bc_file"]:
            from .mesh import BoundaryConditions
            bc_path = Path(prob["bc_file"])
            if base_dir is not None and not bc_path.is_absolute():
                bc_path = base_dir / bc_path
            bc = BoundaryConditions.load_json(bc_path)
            preset = None
        else:
            preset = prob.get("preset", "cantilever-left-clamp-tip-load")
            bc = bc_from_preset(preset, mesh)
        problem = FemProblem(mesh, material, bc, bc_preset=preset)
        oc = OcParams(**data.get("oc", {"volume_fraction": 0.5}))
        filter_config = None
        if "filter" in data:
            fdata = dict(data["filter"])
            fdata.setdefault("anchor_mask", anchor_element_mask(problem))
            filter_config = FilterConfig(**fdata)
        model_path = data.get("model_path")
        if model_path and base_dir is not None and not Path(model_path).is_absolute():
            model_path = str(base_dir / model_path)
        return ExperimentConfig(
            problem=problem,
            oc=oc,
            filter_config=filter_config,
            model_path=model_path,
            seed=int(data.get("seed", 0)),
            snapshot_iters=tuple(data.get("snapshot_iters", (0, 5))),
        )
    except TypeError as exc:
        raise InputError(f"malformed experiment config: {exc}") from exc


def evaluate_compliance(field, problem: FemProblem) -> float:
    """Compliance of a field with voids lifted to x_min (keeps K invertible)."""
    lifted = np.maximum(density_array(field), problem.material.x_min)
    return analyze(lifted, problem, with_sensitivity=False).compliance


@dataclass
class SimpRunResult:
    continuous: DensityField
    binary: DensityField
    trace: OptimizationTrace
    threshold: float
    postfilter_compliance: float
    wall_time_s: float


def run_simp_baseline(config: ExperimentConfig,
                      binarize_target: float | None = None) -> SimpRunResult:
    """Classical pipeline: OC loop, then the volume-matching threshold filter.

    ``binarize_target`` sets the binary volume to aim for; by default the
    constraint volume, in paired comparisons the other method's post-filter
    volume.
    """
    t0 = time.perf_counter()
    problem, params = config.problem, config.oc
    initial = DensityField.uniform(problem.mesh, params.volume_fraction)
    final, trace = run_simp(problem, params, initial, config.snapshot_iters)
    target = binarize_target
    if target is None:
        target = params.volume_fraction * problem.mesh.n_elements
    threshold = choose_threshold(final, target)
    binary = threshold_binarize(final, threshold)
    post_c = evaluate_compliance(binary, problem)
    return SimpRunResult(final, binary, trace, threshold, post_c,
                         time.perf_counter() - t0)


@dataclass
class CnnRunResult:
    continuous: DensityField
    binary_prefilter: DensityField
    filtered: DensityField
    trace: OptimizationTrace
    filter_report: FilterReport
    threshold: float
    prefilter_compliance: float
    postfilter_compliance: float
    wall_time_s: float


def run_cnn_to(config: ExperimentConfig) -> CnnRunResult:
    """Surrogate pipeline: {network sensitivity -> OC update}, binarize, filter.

    The network output is clamped to <= 0 before each OC update (compliance
    sensitivities are non-positive); FEM is used only to log the true
    compliance of each iterate.
    """
    if config.model_path is None:
        raise InputError("run_cnn_to requires a model_path")
    t0 = time.perf_counter()
    problem, params = config.problem, config.oc
    mesh = problem.mesh
    spec, net_params = load_model(config.model_path, expect_shape=(mesh.nely, mesh.nelx))
    x = np.full((mesh.nely, mesh.nelx), params.volume_fraction)
    x_min = problem.material.x_min

    trace = OptimizationTrace()
    if 0 in config.snapshot_iters:
        trace.snapshots[0] = x.copy()
    trace.append(0, analyze(x, problem, with_sensitivity=False).compliance,
                 float(x.sum()), 0.0)
    for it in range(1, params.max_iters + 1):
        raw = predict(spec, net_params, x)
        sens = np.minimum(raw, 0.0)
        try:
            x_new = oc_update(x, sens, params, x_min)
        except DegenerateSensitivityError as exc:
            raise DegenerateSensitivityError(
                f"network produced a non-negative sensitivity field at iteration {it}"
            ) from exc
        except NumericalError as exc:
            raise type(exc)(f"OC update failure at iteration {it}: {exc}") from exc
        change = float(np.max(np.abs(x_new - x)))
        x = x_new
        trace.append(it, analyze(x, problem, with_sensitivity=False).compliance,
                     float(x.sum()), change)
        if it in config.snapshot_iters:
            trace.snapshots[it] = x.copy()
        if change < params.convergence_tol:
            break

    continuous = DensityField(x)
    threshold = choose_threshold(continuous, params.volume_fraction * mesh.n_elements)
    binary = threshold_binarize(continuous, threshold)
    filtered, report = apply_filter_pipeline(binary, config.resolved_filter())
    pre_c = evaluate_compliance(binary, problem)
    post_c = evaluate_compliance(filtered, problem)
    return CnnRunResult(continuous, binary, filtered, trace, report, threshold,
                        pre_c, post_c, time.perf_counter() - t0)


@dataclass
class WarmStartResult:
    final: DensityField
    trace: OptimizationTrace
    initial_compliance: float
    final_compliance: float
    linf_change_vs_start: float
    changed_fraction: float


def warm_start_simp(config: ExperimentConfig, initial: DensityField) -> WarmStartResult:
    """Run the classical OC loop from a binary field produced elsewhere.

    Voids are lifted to x_min for the solves and the volume target is the
    warm-start field's own volume fraction, so the start point is feasible
    and the loop only reshapes it.
    """
    problem = config.problem
    lifted = np.maximum(density_array(initial), problem.material.x_min)
    vf = float(lifted.mean())
    params = replace(config.oc, volume_fraction=vf)
    final, trace = run_simp(problem, params, DensityField(lifted), config.snapshot_iters)
    delta = np.abs(final.values - lifted)
    return WarmStartResult(
        final=final,
        trace=trace,
        initial_compliance=trace.records[0].compliance,
        final_compliance=trace.records[-1].compliance,
        linf_change_vs_start=float(delta.max()),
        changed_fraction=float(np.mean(delta > 0.5)),
    )


def _compliance_after(trace: OptimizationTrace, n_updates: int) -> float | None:
    for record in trace.records:
        if record.iteration == n_updates:
            return record.compliance
    return None


def _method_entry(method: str, trace: OptimizationTrace, *, threshold: float,
                  postfilter_compliance: float, postfilter_volume: float,
                  wall_time_s: float, prefilter_compliance: float) -> dict:
    return {
        "method": method,
        "initial_compliance": trace.records[0].compliance,
        "final_prefilter_compliance": prefilter_compliance,
        "postfilter_compliance": postfilter_compliance,
        "postfilter_volume": postfilter_volume,
        "iterations": trace.n_updates,
        "compliance_after_5_updates": _compliance_after(trace, 5),
        "threshold": threshold,
        "wall_time_s": wall_time_s,
        "trace_file": f"trace_{method}.csv",
    }


def _export_fields(out_dir: Path, method: str, trace: OptimizationTrace,
                   final: DensityField) -> None:
    trace.to_csv(out_dir / f"trace_{method}.csv")
    for it, snap in sorted(trace.snapshots.items()):
        write_pgm(out_dir / f"density_{method}_{it:04d}.pgm", snap)
        write_density_csv(out_dir / f"density_{method}_{it:04d}.csv", snap)
    write_pgm(out_dir / f"density_{method}_final.pgm", final)
    write_density_csv(out_dir / f"density_{method}_final.csv", final)


def compare(config: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """Run both pipelines on one problem and report them side by side.

    The surrogate pipeline runs first; the classical threshold then targets
    its post-filter volume so the binary structures carry comparable mass.
    Emits report.json, per-method traces, and density snapshots at
    iterations {0, 5, final} when ``out_dir`` is given.
    """
    methods = []
    cnn_result = None
    simp_target = None
    if config.model_path is not None:
        cnn_result = run_cnn_to(config)
        simp_target = cnn_result.filtered.volume()
        methods.append(_method_entry(
            "cnn", cnn_result.trace,
            threshold=cnn_result.threshold,
            postfilter_compliance=cnn_result.postfilter_compliance,
            postfilter_volume=cnn_result.filtered.volume(),
            wall_time_s=cnn_result.wall_time_s,
            prefilter_compliance=cnn_result.trace.records[-1].compliance,
        ))
    simp_result = run_simp_baseline(config, binarize_target=simp_target)
    methods.insert(0, _method_entry(
        "simp", simp_result.trace,
        threshold=simp_result.threshold,
        postfilter_compliance=simp_result.postfilter_compliance,
        postfilter_volume=simp_result.binary.volume(),
        wall_time_s=simp_result.wall_time_s,
        prefilter_compliance=simp_result.trace.records[-1].compliance,
    ))
    report = {
        "config_seed": config.seed,
        "mesh": {"nelx": config.problem.mesh.nelx, "nely": config.problem.mesh.nely},
        "volume_fraction": config.oc.volume_fraction,
        "methods": methods,
    }
    if cnn_result is not None:
        simp_entry = methods[0]
        cnn_entry = methods[1]
        report["cnn_within_1_25x_simp"] = bool(
            cnn_entry["postfilter_compliance"] <= 1.25 * simp_entry["postfilter_compliance"]
        )
        report["filter_report"] = cnn_result.filter_report.to_dict()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _export_fields(out_dir, "simp", simp_result.trace, simp_result.binary)
        if cnn_result is not None:
            _export_fields(out_dir, "cnn", cnn_result.trace, cnn_result.filtered)
            cnn_result.filter_report.save_json(out_dir / "filter_report.json")
        write_json(out_dir / "report.json", report)
        (out_dir / "report.txt").write_text(format_report_table(report))
    return report


def format_report_table(report: dict) -> str:
    """Human-readable columns of the comparison report."""
    rows = [
        ("method", "c_initial", "c_prefilter", "c_postfilter", "volume", "iters"),
    ]
    for entry in report["methods"]:
        rows.append((
            entry["method"],
            f"{entry['initial_compliance']:.4g}",
            f"{entry['final_prefilter_compliance']:.4g}",
            f"{entry['postfilter_compliance']:.4g}",
            f"{entry['postfilter_volume']:.4g}",
            str(entry["iterations"]),
        ))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"


def run_appendix1(config: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """Cross-filter table: each method's raw result under both filter families.

    The morphological family needs a binary field, so both entries binarize
    at the constraint volume first; the threshold family is that
    binarization alone.
    """
    if config.model_path is None:
        raise InputError("appendix1 needs a trained model")
    problem = config.problem
    target = config.oc.volume_fraction * problem.mesh.n_elements
    fconf = config.resolved_filter()

    cnn_result = run_cnn_to(config)
    simp_result = run_simp_baseline(config)
    cells = []
    for method, raw in (("simp", simp_result.continuous), ("cnn", cnn_result.continuous)):
        threshold = choose_threshold(raw, target)
        binary = threshold_binarize(raw, threshold)
        filtered, report = apply_filter_pipeline(binary, fconf)
        for family, fld, frep in (("threshold", binary, None),
                                  ("morphological", filtered, report)):
            cells.append({
                "method": method,
                "filter_family": family,
                "compliance": evaluate_compliance(fld, problem),
                "volume": fld.volume(),
                "volume_delta_vs_target": fld.volume() - target,
                "filter_report": frep.to_dict() if frep is not None else None,
            })
    result = {"target_volume": target, "cells": cells}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "appendix1.json", result)
    return result


def run_appendix2(config: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """Warm-start the classical loop from the surrogate pipeline's result."""
    if config.model_path is None:
        raise InputError("appendix2 needs a trained model")
    cnn_result = run_cnn_to(config)
    warm = warm_start_simp(config, cnn_result.filtered)
    result = {
        "cnn_postfilter_compliance": cnn_result.postfilter_compliance,
        "warm_start_initial_compliance": warm.initial_compliance,
        "warm_start_final_compliance": warm.final_compliance,
        "linf_change_vs_start": warm.linf_change_vs_start,
        "changed_fraction": warm.changed_fraction,
        "iterations": warm.trace.n_updates,
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "appendix2.json", result)
        warm.trace.to_csv(out_dir / "trace_warm_start.csv")
        write_pgm(out_dir / "density_warm_start_final.pgm", warm.final)
        write_density_csv(out_dir / "density_warm_start_final.csv", warm.final)
    return result


def run_appendix3(config: ExperimentConfig, out_dir: Path | None = None) -> dict:
    """Repeat the surrogate pipeline twice with the same model; fields must match."""
    if config.model_path is None:
        raise InputError("appendix3 needs a trained model")
    first = run_cnn_to(config)
    second = run_cnn_to(config)
    identical = bool(np.array_equal(first.filtered.values, second.filtered.values))
    result = {
        "identical": identical,
        "postfilter_compliance": first.postfilter_compliance,
        "postfilter_volume": first.filtered.volume(),
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / "appendix3.json", result)
        write_pgm(out_dir / "density_run1.pgm", first.filtered)
        write_pgm(out_dir / "density_run2.pgm", second.filtered)
    return result

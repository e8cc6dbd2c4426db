"""Emission of study reports and gallery outputs as JSON and CSV files.

CSV schemas (one header row each):

    summary.csv          statistic, value
    <stat>_ecdf.csv      ecdf_x, ecdf_y
    <stat>_qq.csv        q_theoretical, q_empirical
    <stat>_hist.csv      bin_left, bin_right, count

Gallery entries additionally emit cross-sections of each field:

    fixed_t.csv          y, value          (slice at t = T/2)
    fixed_y.csv          t, value          (column nearest y = 0.5)
    downsample.csv       t, y, value       (strided full-grid thumbnail)

Numbers are written in shortest round-trip decimal form, so files diff
cleanly without losing precision.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .estimate import EstimateRecord
from .fieldfile import FieldWriter, config_sidecar, dump_json
from .model import SpdeParams
from .simulate import GridSpec, simulate_field
from .study import StudyConfig, StudyReport

#: Cross-section thumbnails keep at most this many points per axis.
DOWNSAMPLE_MAX = 129


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str | Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def record_to_dict(rec: EstimateRecord) -> dict:
    return {
        "regime": rec.regime.value,
        "sigma0_sq": rec.sigma0_sq,
        "eta": rec.eta,
        "sigma_sq": rec.sigma_sq,
        "theta2": rec.theta2,
        "theta1": rec.theta1,
        "lambda1": rec.lambda1,
        "theta0": rec.theta0,
        "seed": rec.seed,
        "rep_id": rec.rep_id,
        "flags": rec.flags,
    }


def study_config_to_dict(config: StudyConfig) -> dict:
    doc = config_sidecar(config.grid, config.params_true, config.base_seed)
    doc.pop("seed")
    doc["study"] = {"replications": config.replications,
                    "base_seed": config.base_seed}
    doc["estimation"] = {
        "regime": config.est.regime.value,
        "delta_margin": config.est.delta_margin,
        "m_spatial": config.est.m_spatial,
        "n2_temporal": config.est.n2_temporal,
        "eta_bounds": list(config.est.eta_bounds),
        "sigma0sq_bounds": list(config.est.sigma0sq_bounds),
        "lambda_bounds": list(config.est.lambda_bounds),
    }
    return doc


def report_to_dict(report: StudyReport) -> dict:
    summaries = {}
    for name, s in report.summaries.items():
        summaries[name] = {
            "n": s.n,
            "mean": s.mean,
            "variance": s.variance,
            "ks_stat": s.ks_stat,
            "limit_variance": s.limit_variance,
        }
    return {
        "config": study_config_to_dict(report.config),
        "records": [record_to_dict(r) for r in report.records],
        "failures": [{"rep_id": rep, "error": msg} for rep, msg in report.failures],
        "standardized": {k: v.tolist() for k, v in report.standardized.items()},
        "studentized": {k: [None if not np.isfinite(x) else float(x) for x in v]
                        for k, v in report.studentized.items()},
        "summaries": summaries,
        "limit_variances": report.limit_variances,
        "rate_diagnostics": report.rate_diagnostics,
        "provenance": report.provenance,
    }


def write_study_report(report: StudyReport, outdir: str | Path) -> None:
    """report.json, summary.csv, and the three per-statistic CSV tables."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dump_json(report_to_dict(report), outdir / "report.json")

    rows = []
    for name, s in report.summaries.items():
        rows.extend([
            (f"{name}.n", s.n),
            (f"{name}.mean", s.mean),
            (f"{name}.variance", s.variance),
            (f"{name}.ks_stat", s.ks_stat),
            (f"{name}.limit_variance", s.limit_variance),
        ])
    for name, value in report.rate_diagnostics.items():
        rows.append((f"rate.{name}", value))
    rows.append(("failures", len(report.failures)))
    write_csv(outdir / "summary.csv", ["statistic", "value"], rows)

    for name, s in report.summaries.items():
        write_csv(outdir / f"{name}_ecdf.csv", ["ecdf_x", "ecdf_y"],
                  zip(s.ecdf_x, s.ecdf_y))
        write_csv(outdir / f"{name}_qq.csv", ["q_theoretical", "q_empirical"],
                  zip(s.qq_theoretical, s.qq_empirical))
        write_csv(outdir / f"{name}_hist.csv", ["bin_left", "bin_right", "count"],
                  zip(s.hist_left, s.hist_right, s.hist_count))


def _downsample_indices(n: int, limit: int = DOWNSAMPLE_MAX) -> np.ndarray:
    stride = max(1, -(-n // limit))
    return np.arange(0, n, stride)


def write_gallery_entry(outdir: str | Path, params: SpdeParams, spec: GridSpec,
                        seed: int) -> None:
    """One gallery entry: field file plus the three cross-section CSVs.

    Streams the simulation once, teeing each slice into the field file and
    the cross-section collectors, so no full field is held in memory.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    mid_slice = (spec.n_time + 1) // 2          # nearest to t = T/2
    mid_col = max(1, round(spec.n_space * 0.5))  # grid column nearest y = 0.5
    t_keep = _downsample_indices(spec.n_time + 1)
    y_keep = _downsample_indices(spec.n_space)
    times = spec.time_points()
    y = spec.space_points()

    column = np.empty(spec.n_time + 1)
    fixed_t_row = {}
    thumb = {}
    t_set = set(int(v) for v in t_keep)

    with FieldWriter(outdir / "field.bin", spec, params, seed) as writer:
        def sink(i, values):
            writer(i, values)
            column[i] = values[mid_col - 1]
            if i == mid_slice:
                fixed_t_row["values"] = values.copy()
            if i in t_set:
                thumb[i] = values[y_keep].copy()

        simulate_field(params, spec, seed, sink=sink)

    write_csv(outdir / "fixed_t.csv", ["y", "value"],
              zip(y, fixed_t_row["values"]))
    write_csv(outdir / "fixed_y.csv", ["t", "value"], zip(times, column))
    rows = ((times[i], y[j], thumb[i][jj])
            for i in t_keep for jj, j in enumerate(y_keep))
    write_csv(outdir / "downsample.csv", ["t", "y", "value"], rows)
    dump_json(config_sidecar(spec, params, seed,
                             extra={"cross_sections": {"fixed_t_index": int(mid_slice),
                                                       "fixed_y_column": int(mid_col)}}),
              outdir / "entry.json")

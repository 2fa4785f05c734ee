"""Command-line entry point: ``fodkit <command> [<subcommand>] [options]``.

Every command prints a JSON report on stdout (or writes it to ``--out``).
Usage errors exit with status 2; data and validation errors exit with
status 1 after printing ``{"code": ..., "message": ...}`` on one line of
stderr.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import glob
import json
import logging
import os
import shlex
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .connectome import cohort_kendall_tau, difference_ratios, disparity, edge_paired_tests
from .enhance import (compute_stats, enhance, enhancer_from_spec,
                      fit_linear_enhancer, plan_patches)
from .errors import FodkitError, FormatError, ShapeError
from .fixels import (DEFAULT_MATCH_THRESHOLD_DEG, DEFAULT_MAX_FIXELS, DEFAULT_PEAK_THRESHOLD,
                     extract_fixels, filter_roi_by_fixel_count, fixel_metrics, match_fixels)
from .fod_metrics import roi_fod_report
from .graph import graph_metrics
from .group_stats import (anova_from_sums_of_squares, confusion_vs_reference,
                          fixelwise_group_test, independent_ttest, one_way_anova,
                          pearson_correlation, sample_size_for_power, ttest_power)
from .report import MetricReport, dumps
from .sh import make_icosphere
from .subsample import subsample_rows
from .types import Mask
from .volume_io import (load_volume, read_connmatrix, read_fixels, read_gradients, read_mask,
                        write_fixels, write_fsl_gradients, write_mask, write_mrtrix_gradients,
                        write_native_volume)

log = logging.getLogger("fodkit")

# keys of a graph report that are bookkeeping rather than metrics
_GRAPH_META = {"n_communities", "louvain_seed"}


class UsageError(Exception):
    """Bad flag combination detected after argparse accepted the command line."""


# ---------------------------------------------------------------------------
# small readers


def _read_column(spec: str) -> np.ndarray:
    """Values of one CSV column. ``path`` or ``path:column`` (name or 0-based index)."""
    path, column = spec, None
    if not os.path.exists(spec) and ":" in spec:
        path, column = spec.rsplit(":", 1)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(t.strip() for t in r)]
    if not rows:
        raise FormatError(f"{path}: no data")
    header = None
    try:
        [float(t) for t in rows[0]]
    except ValueError:
        header = [t.strip() for t in rows[0]]
        rows = rows[1:]
    col = 0
    if column is not None:
        if header is not None and column in header:
            col = header.index(column)
        elif column.isdigit():
            col = int(column)
        else:
            raise FormatError(f"{path}: no column {column!r}")
    try:
        return np.array([float(r[col]) for r in rows], dtype=np.float64)
    except (ValueError, IndexError):
        raise FormatError(f"{path}: column {col} is missing or non-numeric") from None


def _named_paths(items: Sequence[str], default_name: str) -> Dict[str, str]:
    out = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = default_name, item
        if name in out:
            raise UsageError(f"duplicate name {name!r}")
        out[name] = path
    return out


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON ({exc})") from None


def _unwrap_results(obj):
    if isinstance(obj, dict) and "results" in obj and "kind" in obj:
        return obj["results"]
    return obj


def _read_sig(path) -> np.ndarray:
    obj = _unwrap_results(_load_json(path))
    if isinstance(obj, dict):
        obj = obj.get("significant")
    if not isinstance(obj, list):
        raise FormatError(f"{path}: expected a list of booleans or an object with 'significant'")
    return np.asarray(obj, dtype=bool)


def _metric_values(path) -> Dict[str, float]:
    obj = _unwrap_results(_load_json(path))
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: expected a JSON object of metric values")
    return {k: v for k, v in obj.items()
            if k not in _GRAPH_META and isinstance(v, (int, float)) and not isinstance(v, bool)}


def _csv_files(directory) -> Dict[str, str]:
    if not os.path.isdir(directory):
        raise FormatError(f"{directory}: not a directory")
    return {os.path.basename(p): p for p in sorted(glob.glob(os.path.join(directory, "*.csv")))}


# ---------------------------------------------------------------------------
# command implementations; each returns a JSON-serialisable object


def cmd_fod_metrics(args):
    gt = load_volume(args.gt)
    est = load_volume(args.est)
    masks = {name: read_mask(path) for name, path in _named_paths(args.mask, "mask").items()}
    return roi_fod_report(gt, est, masks, include_l0=args.include_l0)


def cmd_fixel_extract(args):
    vol = load_volume(args.input)
    mask = read_mask(args.mask) if args.mask else None
    mesh = make_icosphere(args.mesh_subdiv)
    if args.mesh_obj:
        mesh.to_obj(args.mesh_obj)
    fx = extract_fixels(vol, mask, mesh, args.peak_threshold, args.max_fixels)
    write_fixels(fx, args.fixels)
    counts = fx.count_map()
    considered = mask.data if mask is not None else np.ones(vol.dims, dtype=bool)
    hist = np.bincount(counts[considered].ravel(), minlength=1)
    return MetricReport("fixel-extract", {
        "n_fixels": len(fx),
        "n_voxels": int(considered.sum()),
        "fixels_per_voxel": {str(k): int(v) for k, v in enumerate(hist)},
        "fixels_path": args.fixels,
    }, {"peak_threshold": args.peak_threshold, "mesh_subdiv": args.mesh_subdiv,
        "max_fixels": args.max_fixels})


def cmd_fixel_match(args):
    gt, est = read_fixels(args.gt), read_fixels(args.est)
    m = match_fixels(gt, est, args.threshold_deg)
    if args.pairs_csv:
        with open(args.pairs_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gt_index", "est_index", "angular_error_deg"])
            for g, e, a in zip(m.gt_index, m.est_index, m.angular_error_deg):
                w.writerow([int(g), int(e), repr(float(a))])
    return MetricReport("fixel-match", {
        "n_matched": m.n_matched,
        "n_missing": len(m.missing),
        "n_extra": len(m.extra),
        "mean_angular_error_deg": float(np.mean(m.angular_error_deg)) if m.n_matched else float("nan"),
        "pairs_csv_path": args.pairs_csv,
    }, {"threshold_deg": args.threshold_deg})


def cmd_fixel_metrics(args):
    gt, est = read_fixels(args.gt), read_fixels(args.est)
    m = match_fixels(gt, est, args.threshold_deg)
    results = {}
    for name, path in _named_paths(args.roi, "roi").items():
        roi = read_mask(path)
        if args.expected_count is not None:
            roi = filter_roi_by_fixel_count(roi, gt, args.expected_count)
        results[name] = fixel_metrics(m, gt, est, roi, normalized=not args.raw_sums).to_dict()
    return MetricReport("fixel-metrics", results,
                        {"threshold_deg": args.threshold_deg, "normalized": not args.raw_sums,
                         "expected_count": args.expected_count})


def cmd_fixel_filter_roi(args):
    roi = read_mask(args.roi)
    gt = read_fixels(args.gt)
    kept = filter_roi_by_fixel_count(roi, gt, args.expected)
    write_mask(kept, args.mask_out)
    return MetricReport("fixel-filter-roi", {"n_voxels_in": roi.n_voxels, "n_voxels_out": kept.n_voxels,
                                             "mask_path": args.mask_out}, {"expected": args.expected})


def cmd_connectome_compare(args):
    gt_files, est_files = _csv_files(args.gt_dir), _csv_files(args.est_dir)
    if not gt_files:
        raise FormatError(f"{args.gt_dir}: no .csv connectivity matrices")
    if set(gt_files) != set(est_files):
        only = sorted(set(gt_files) ^ set(est_files))
        raise ShapeError(f"subject files differ between directories: {only}")
    names = sorted(gt_files)
    gt = [read_connmatrix(gt_files[n]) for n in names]
    est = [read_connmatrix(est_files[n]) for n in names]
    mat, mu = disparity(gt, est)
    taus = cohort_kendall_tau(gt, est)
    edges = edge_paired_tests(gt, est, args.alpha) if len(names) >= 3 else None
    if edges is None:
        log.warning("fewer than 3 subjects; edge-wise paired tests skipped")
    if args.per_edge_csv:
        labels = gt[0].labels
        with open(args.per_edge_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "label_i", "label_j", "mean_abs_disparity", "p_value", "significant"])
            for i, j in zip(*np.triu_indices(len(mat), 1)):
                p = edges.p_values[i, j] if edges is not None else float("nan")
                sig = bool(edges.significant[i, j]) if edges is not None else False
                w.writerow([i, j, labels[i], labels[j], repr(float(mat[i, j])),
                            "" if np.isnan(p) else repr(float(p)), int(sig)])
    return MetricReport("connectome-compare", {
        "n_subjects": len(names),
        "mu_disparity": mu,
        "kendall_tau_mean": float(np.mean(taus)),
        "kendall_tau": taus,
        "significant_edge_fraction": edges.fraction if edges is not None else float("nan"),
        "n_edges_tested": edges.n_tested if edges is not None else 0,
        "n_edges_significant": edges.n_significant if edges is not None else 0,
        "per_edge_csv_path": args.per_edge_csv,
    }, {"alpha": args.alpha})


def cmd_connectome_graph(args):
    m = read_connmatrix(args.input)
    g = graph_metrics(m, seed=args.seed, restarts=args.restarts,
                      normalized_betweenness=args.normalized,
                      weighted_assortativity=args.weighted_assortativity)
    if g.disconnected:
        log.warning("%s: graph is disconnected; unreachable pairs contribute 0 efficiency", args.input)
    return MetricReport("connectome-graph", g.to_dict(), {"seed": args.seed, "restarts": args.restarts})


def cmd_connectome_dr(args):
    est, gt = _metric_values(args.est), _metric_values(args.gt)
    table = difference_ratios(est, gt)
    if not table:
        raise FodkitError("no metrics in common between the two files")
    return MetricReport("connectome-dr", table)


def cmd_subsample(args):
    if args.grad:
        table = read_gradients(mrtrix_path=args.grad)
    elif args.bvecs and args.bvals:
        table = read_gradients(args.bvecs, args.bvals)
    else:
        raise UsageError("give either --grad or both --bvecs and --bvals")
    rows = subsample_rows(table, args.shell, args.k)
    sub = table.subset(rows)
    if table.source_format == "mrtrix":
        if not args.out_grad:
            raise UsageError("--out-grad is required for an MRtrix gradient table")
        write_mrtrix_gradients(sub, args.out_grad)
        written = [args.out_grad]
    else:
        if not (args.out_bvecs and args.out_bvals):
            raise UsageError("--out-bvecs and --out-bvals are required for FSL gradients")
        write_fsl_gradients(sub, args.out_bvecs, args.out_bvals)
        written = [args.out_bvecs, args.out_bvals]
    return MetricReport("subsample", {
        "n_rows_in": len(table),
        "n_rows_out": len(sub),
        "n_b0": len(table.b0_indices()),
        "rows": rows,
        "written": written,
    }, {"shell": args.shell, "k": args.k, "format": table.source_format})


def cmd_enhance(args):
    vol = load_volume(args.input)
    mask = read_mask(args.mask)
    enhancer = enhancer_from_spec(args.enhancer)
    if args.stats_source == "model":
        stats = getattr(enhancer, "stats", None)
        if stats is None:
            raise UsageError("--stats-source model needs a linear model that stores stats")
    else:
        stats = compute_stats(vol, mask)
    grid = plan_patches(vol.dims, mask)
    out = enhance(vol, mask, stats, enhancer, threads=args.threads, grid=grid)
    write_native_volume(out, args.output)
    return MetricReport("enhance", {"n_patches": len(grid), "n_masked_voxels": mask.n_voxels,
                                    "output_path": args.output},
                        {"enhancer": args.enhancer, "stats_source": args.stats_source})


def cmd_fit_linear(args):
    lq, gt = load_volume(args.lq), load_volume(args.gt)
    mask = read_mask(args.mask)
    model = fit_linear_enhancer(lq, gt, mask)
    model.save(args.model)
    x = lq.data[mask.data].astype(np.float64)
    y = gt.data[mask.data].astype(np.float64)
    s = model.stats
    pred = (((x - s.mean) / s.std) @ model.W.T + model.b) * s.std + s.mean
    return MetricReport("fit-linear", {
        "ncoef": model.ncoef,
        "n_voxels": mask.n_voxels,
        "mse_identity": float(np.mean((x - y) ** 2)),
        "mse_fitted": float(np.mean((pred - y) ** 2)),
        "model_path": args.model,
    })


def _fixel_cohort(directory):
    paths = sorted(glob.glob(os.path.join(directory, "*.fxf")))
    if not paths:
        raise FormatError(f"{directory}: no .fxf fixel files")
    return paths, [read_fixels(p) for p in paths]


def cmd_fba_test(args):
    pa, a = _fixel_cohort(args.group_a)
    pb, b = _fixel_cohort(args.group_b)
    ref = a[0]
    for path, fx in zip(pa + pb, a + b):
        if fx.dims != ref.dims or len(fx) != len(ref) or not np.array_equal(fx.voxel, ref.voxel):
            raise ShapeError(f"{path}: fixel index differs from {pa[0]}; subjects must share a template fixel index")
    keep = np.arange(len(ref))
    if args.mask:
        mask = read_mask(args.mask)
        mask.check_dims(ref.dims, "fixel template")
        keep = np.flatnonzero(ref.in_mask(mask))
    fa = np.stack([fx.fd[keep] for fx in a]).astype(np.float64)
    fb = np.stack([fx.fd[keep] for fx in b]).astype(np.float64)
    res = fixelwise_group_test(fa, fb, args.alpha, fdr=not args.no_fdr)
    return MetricReport("fba-test", {
        "n_subjects_a": len(a),
        "n_subjects_b": len(b),
        "n_fixels_tested": len(keep),
        "n_significant": int(res.significant.sum()),
        "fixel_index": keep,
        "t": res.t,
        "p_values": res.p_values,
        "significant": res.significant,
    }, {"alpha": args.alpha, "fdr": not args.no_fdr})


def cmd_fba_score(args):
    return MetricReport("fba-score", confusion_vs_reference(_read_sig(args.reference),
                                                            _read_sig(args.method)).to_dict())


def cmd_stats_ttest(args):
    res = independent_ttest(_read_column(args.a), _read_column(args.b), welch=not args.student)
    return MetricReport("ttest", res.to_dict())


def cmd_stats_anova(args):
    if args.groups:
        groups = [_read_column(g) for g in args.groups.split(",") if g]
        res = one_way_anova(groups)
    elif None not in (args.ss_between, args.df_between, args.ss_within, args.df_within):
        res = anova_from_sums_of_squares(args.ss_between, args.df_between, args.ss_within, args.df_within)
    else:
        raise UsageError("give --groups or all of --ss-between/--df-between/--ss-within/--df-within")
    return MetricReport("anova", res.to_dict())


def cmd_stats_pearson(args):
    return MetricReport("pearson", pearson_correlation(_read_column(args.x), _read_column(args.y)).to_dict())


def cmd_stats_power(args):
    if args.n is not None:
        return MetricReport("power", {"power": ttest_power(args.d, args.n, args.alpha), "n_per_group": args.n},
                            {"d": args.d, "alpha": args.alpha})
    n = sample_size_for_power(args.d, args.power, args.alpha)
    return MetricReport("power", {"n_per_group": n, "achieved_power": ttest_power(args.d, n, args.alpha)},
                        {"d": args.d, "power": args.power, "alpha": args.alpha})


def cmd_convert_nifti_import(args):
    vol = load_volume(args.input)
    if args.as_mask:
        m = Mask(vol.data[..., 0] > 0, vol.voxel_size)
        write_mask(m, args.output)
        return MetricReport("nifti-import", {"dims": list(m.dims), "n_voxels": m.n_voxels,
                                             "output_path": args.output}, {"as_mask": True})
    write_native_volume(vol, args.output)
    return MetricReport("nifti-import", {"dims": list(vol.dims), "ncoef": vol.ncoef,
                                         "output_path": args.output}, {"as_mask": False})


def cmd_convert_volume_info(args):
    vol = load_volume(args.input)
    d = vol.data
    return MetricReport("volume-info", {
        "dims": list(vol.dims),
        "ncoef": vol.ncoef,
        "lmax": vol.lmax,
        "voxel_size": list(vol.voxel_size),
        "affine": vol.affine.ravel(),
        "min": float(d.min()) if d.size else float("nan"),
        "max": float(d.max()) if d.size else float("nan"),
    })


# ---------------------------------------------------------------------------
# parser


def _common(threads=False) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("output")
    g.add_argument("--out", metavar="PATH", help="write the JSON report here instead of stdout")
    g.add_argument("--pretty", action="store_true", help="indent the JSON report for reading")
    g.add_argument("--timestamp", action="store_true", help="add a UTC timestamp to the report")
    g.add_argument("--config", metavar="PATH",
                   help="key=value file supplying flags; command-line flags take precedence")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    if threads:
        g.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $FODKIT_THREADS or all cores)")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fodkit", description="FOD enhancement evaluation toolkit.")
    parser.add_argument("--version", action="version", version=f"fodkit {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    common = _common()
    threaded = _common(threads=True)

    def leaf(subparsers, name, func, help, threads=False):
        p = subparsers.add_parser(name, help=help, description=help,
                                  parents=[threaded if threads else common])
        p.set_defaults(func=func)
        return p

    def group(name, help):
        p = sub.add_parser(name, help=help, description=help)
        return p.add_subparsers(dest="subcommand", metavar="SUBCOMMAND", required=True)

    p = leaf(sub, "fod-metrics", cmd_fod_metrics, "PSNR and angular correlation per named mask")
    p.add_argument("--gt", required=True, help="reference SH volume (.fvf or .nii[.gz])")
    p.add_argument("--est", required=True, help="estimated SH volume")
    p.add_argument("--mask", action="append", required=True, metavar="NAME=PATH",
                   help="named mask file; repeat for several regions")
    p.add_argument("--include-l0", action="store_true", help="include the l=0 term in r_Angular")

    fixel = group("fixel", "fixel segmentation, matching and error metrics")
    p = leaf(fixel, "extract", cmd_fixel_extract, "segment FODs into fixels")
    p.add_argument("--in", dest="input", required=True, help="SH volume")
    p.add_argument("--mask", help="voxels to process (default: all)")
    p.add_argument("--fixels", required=True, help="output fixel file (.fxf)")
    p.add_argument("--peak-threshold", type=float, default=DEFAULT_PEAK_THRESHOLD,
                   help="drop lobes whose peak amplitude is below this (default %(default)s)")
    p.add_argument("--mesh-subdiv", type=int, default=4, help="icosphere subdivisions (default %(default)s)")
    p.add_argument("--max-fixels", type=int, default=DEFAULT_MAX_FIXELS,
                   help="keep at most this many fixels per voxel (default %(default)s)")
    p.add_argument("--mesh-obj", help="also write the sampling mesh as a Wavefront OBJ file")

    for name, func, help in (("match", cmd_fixel_match, "match estimated fixels to reference fixels"),
                             ("metrics", cmd_fixel_metrics, "angular, peak and FD errors per ROI")):
        p = leaf(fixel, name, func, help)
        p.add_argument("--gt", required=True, help="reference fixel file")
        p.add_argument("--est", required=True, help="estimated fixel file")
        p.add_argument("--threshold-deg", type=float, default=DEFAULT_MATCH_THRESHOLD_DEG,
                       help="largest angular error of a matched pair (default %(default)s)")
        if name == "match":
            p.add_argument("--pairs-csv", help="write matched pairs to this CSV")
        else:
            p.add_argument("--roi", action="append", required=True, metavar="[NAME=]PATH",
                           help="ROI mask; repeat for several regions")
            p.add_argument("--expected-count", type=int,
                           help="keep only ROI voxels whose reference has this many fixels")
            norm = p.add_mutually_exclusive_group()
            norm.add_argument("--normalized", dest="raw_sums", action="store_false",
                              help="divide peak/FD error sums by the fixel count (default)")
            norm.add_argument("--raw-sums", dest="raw_sums", action="store_true",
                              help="report unnormalized peak/FD error sums")

    p = leaf(fixel, "filter-roi", cmd_fixel_filter_roi, "restrict an ROI to voxels with a given fixel count")
    p.add_argument("--roi", required=True, help="ROI mask")
    p.add_argument("--gt", required=True, help="reference fixel file")
    p.add_argument("--expected", type=int, required=True, help="required fixel count")
    p.add_argument("--mask-out", required=True, help="output mask file")

    conn = group("connectome", "connectome comparison and graph metrics")
    p = leaf(conn, "compare", cmd_connectome_compare, "disparity, Kendall tau and edge-wise tests")
    p.add_argument("--gt-dir", required=True, help="directory of reference connectome CSVs")
    p.add_argument("--est-dir", required=True, help="directory of estimated CSVs (same file names)")
    p.add_argument("--alpha", type=float, default=0.05, help="FDR level (default %(default)s)")
    p.add_argument("--per-edge-csv", help="write per-edge disparity and p-values here")
    p = leaf(conn, "graph", cmd_connectome_graph, "ten graph-theory metrics of one connectome")
    p.add_argument("--in", dest="input", required=True, help="connectome CSV")
    p.add_argument("--seed", type=int, default=0, help="first Louvain seed (default %(default)s)")
    p.add_argument("--restarts", type=int, default=10, help="Louvain restarts (default %(default)s)")
    p.add_argument("--normalized", action="store_true",
                   help="divide betweenness by (n-1)(n-2)/2")
    p.add_argument("--weighted-assortativity", action="store_true",
                   help="correlate node strengths instead of degrees")
    p = leaf(conn, "dr", cmd_connectome_dr, "difference ratio of every shared metric")
    p.add_argument("--est", required=True, help="JSON metrics of the estimate")
    p.add_argument("--gt", required=True, help="JSON metrics of the reference")

    p = leaf(sub, "subsample", cmd_subsample, "Kennard-Stone thinning of one gradient shell")
    p.add_argument("--bvecs", help="FSL bvecs")
    p.add_argument("--bvals", help="FSL bvals")
    p.add_argument("--grad", help="MRtrix 4-column gradient table")
    p.add_argument("--shell", type=float, required=True, help="b-value of the shell to thin")
    p.add_argument("--k", type=int, required=True, help="directions to keep")
    p.add_argument("--out-bvecs", help="output bvecs (FSL input)")
    p.add_argument("--out-bvals", help="output bvals (FSL input)")
    p.add_argument("--out-grad", help="output gradient table (MRtrix input)")

    p = leaf(sub, "enhance", cmd_enhance, "patch-wise enhancement of an SH volume", threads=True)
    p.add_argument("--in", dest="input", required=True, help="low-quality SH volume")
    p.add_argument("--mask", required=True, help="brain mask")
    p.add_argument("--enhancer", default="identity",
                   help="identity | linear:<model.json> | exec:<command> (default %(default)s)")
    p.add_argument("--output", required=True, help="enhanced volume (.fvf)")
    p.add_argument("--stats-source", choices=("input", "model"), default="input",
                   help="standardize with the input's own statistics or those stored in the model")

    p = leaf(sub, "fit-linear", cmd_fit_linear, "fit the closed-form linear reference enhancer")
    p.add_argument("--lq", required=True, help="low-quality SH volume")
    p.add_argument("--gt", required=True, help="target SH volume")
    p.add_argument("--mask", required=True, help="training mask")
    p.add_argument("--model", required=True, help="output model JSON")

    fba = group("fba", "fixel-based group analysis")
    p = leaf(fba, "test", cmd_fba_test, "fixel-wise Welch t-tests between two cohorts")
    p.add_argument("--group-a", required=True, help="directory of .fxf files, one per subject")
    p.add_argument("--group-b", required=True, help="directory of .fxf files, one per subject")
    p.add_argument("--mask", help="tract mask; only fixels in it are tested")
    p.add_argument("--alpha", type=float, default=0.05, help="significance / FDR level (default %(default)s)")
    p.add_argument("--no-fdr", action="store_true", help="skip Benjamini-Hochberg correction")
    p = leaf(fba, "score", cmd_fba_score, "score a significance map against a reference map")
    p.add_argument("--reference", required=True, help="reference significance JSON")
    p.add_argument("--method", required=True, help="method significance JSON")

    stats = group("stats", "t-test, ANOVA, correlation and power")
    p = leaf(stats, "ttest", cmd_stats_ttest, "independent two-sample t-test with Cohen's d")
    p.add_argument("--a", required=True, metavar="CSV[:COLUMN]", help="first sample")
    p.add_argument("--b", required=True, metavar="CSV[:COLUMN]", help="second sample")
    p.add_argument("--student", action="store_true", help="pooled-variance t-test instead of Welch")
    p = leaf(stats, "anova", cmd_stats_anova, "one-way ANOVA")
    p.add_argument("--groups", metavar="CSV,CSV,...", help="comma-separated sample files")
    p.add_argument("--ss-between", type=float, help="between-group sum of squares")
    p.add_argument("--df-between", type=int, help="between-group degrees of freedom")
    p.add_argument("--ss-within", type=float, help="within-group sum of squares")
    p.add_argument("--df-within", type=int, help="within-group degrees of freedom")
    p = leaf(stats, "pearson", cmd_stats_pearson, "Pearson correlation")
    p.add_argument("--x", required=True, metavar="CSV[:COLUMN]")
    p.add_argument("--y", required=True, metavar="CSV[:COLUMN]")
    p = leaf(stats, "power", cmd_stats_power, "sample size (or power) of a two-sample t-test")
    p.add_argument("--d", type=float, required=True, help="effect size (Cohen's d)")
    p.add_argument("--power", type=float, default=0.8, help="target power (default %(default)s)")
    p.add_argument("--alpha", type=float, default=0.05, help="two-sided level (default %(default)s)")
    p.add_argument("--n", type=int, help="report the power at this per-group n instead")

    conv = group("convert", "format conversion and inspection")
    p = leaf(conv, "nifti-import", cmd_convert_nifti_import, "convert NIfTI-1 to the native format")
    p.add_argument("--in", dest="input", required=True, help=".nii or .nii.gz file")
    p.add_argument("--output", required=True, help="output .fvf file")
    p.add_argument("--as-mask", action="store_true", help="write a mask of voxels > 0")
    p = leaf(conv, "volume-info", cmd_convert_volume_info, "print dimensions and header of a volume")
    p.add_argument("--in", dest="input", required=True, help=".fvf, .nii or .nii.gz file")
    return parser


# ---------------------------------------------------------------------------
# config files and entry point


def read_config(path) -> List[str]:
    """Turn a ``key = value`` file into command-line tokens.

    Keys are flag names without dashes (``peak-threshold`` or
    ``peak_threshold``). ``true``/``false`` toggle switches; any other value
    is split shell-style, so repeated flags can be given as one line.
    """
    tokens = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            flag = "--" + key.strip().replace("_", "-")
            value = value.strip()
            if value.lower() in ("true", "yes", "on"):
                tokens.append(flag)
            elif value.lower() in ("false", "no", "off"):
                continue
            else:
                parts = shlex.split(value)
                for part in parts if flag in ("--mask", "--roi") else [value]:
                    tokens.extend([flag, part])
    return tokens


def _expand_config(argv: List[str]) -> List[str]:
    if "--config" not in argv and not any(a.startswith("--config=") for a in argv):
        return argv
    path = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif a.startswith("--config="):
            path = a.split("=", 1)[1]
    if path is None:
        return argv
    # config tokens go right after the command words so explicit flags win
    n_words = 0
    while n_words < len(argv) and not argv[n_words].startswith("-"):
        n_words += 1
    return argv[:n_words] + read_config(path) + argv[n_words:]


def _resolve_threads(value: Optional[int]) -> int:
    if value is None:
        env = os.environ.get("FODKIT_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError:
                raise UsageError(f"FODKIT_THREADS must be an integer, got {env!r}") from None
        else:
            value = os.cpu_count() or 1
    if value < 1:
        raise UsageError(f"--threads must be at least 1, got {value}")
    return value


def _fail(code: str, message: str, status: int) -> int:
    sys.stderr.write(json.dumps({"code": code, "message": message}, sort_keys=True) + "\n")
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _expand_config(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except OSError as exc:
        return _fail("io", str(exc), 1)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="fodkit: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if hasattr(args, "threads"):
            args.threads = _resolve_threads(args.threads)
        report = args.func(args)
        obj = report.to_dict() if isinstance(report, MetricReport) else report
        if args.timestamp:
            obj = dict(obj, timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat())
        text = dumps(obj, pretty=args.pretty) + "\n"
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail("usage", str(exc), 2)
    except FodkitError as exc:
        return _fail(exc.code, str(exc), 1)
    except OSError as exc:
        return _fail("io", str(exc), 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())

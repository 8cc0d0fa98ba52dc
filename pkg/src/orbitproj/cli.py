"""Command-line interface.

Subcommands: weights, sample, density, hciz, mult, spline, compare.  Every
run writes a ``record.json`` (command, parameters, seed, artifact paths,
wall-clock) next to its artifacts; CSV/JSON payloads are deterministic for a
fixed seed, with volatile data confined to the run record.

Exit codes: 0 success, 2 validation error, 3 numerical alarm, 4 cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import uuid
from pathlib import Path

import numpy as np

from .alternant import hciz_value, mc_hciz
from .boxspline import BoxSpline, ExactEvaluator
from .compare import run_compare
from .density import (
    DensityGrid,
    NonGenericSpectrumError,
    QuadratureParams,
    density_grid,
    normalization_check,
)
from .multiplicity import RecoveryError, recover_multiplicity, restrict_decompose
from .sampler import NumericalAlarm, Spectrum, run_histogram, support_box
from .weights import CapExceededError, Setting, SettingError, WeightSystem

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_CAP = 4

SEED_ENV = "ORBITPROJ_SEED"


class RunRecord:
    def __init__(self, command: str, params: dict):
        self.id = uuid.uuid4().hex[:12]
        self.command = command
        self.params = params
        self.artifacts: list[str] = []
        self.t0 = time.time()

    def finish(self, out_dir: Path) -> Path:
        payload = {
            "id": self.id,
            "command": self.command,
            "parameters": self.params,
            "artifacts": self.artifacts,
            "tool_version": _version(),
            "wall_clock_seconds": time.time() - self.t0,
        }
        path = out_dir / "record.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True))
        return path


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("orbitproj")
    except Exception:
        return "unknown"


def _parse_lambda(args, ws: WeightSystem) -> Spectrum:
    if args.lambda_file:
        data = json.loads(Path(args.lambda_file).read_text())
        values = data["lambda"] if isinstance(data, dict) else data
    elif getattr(args, "lam", None):
        values = [float(x) for x in args.lam.split(",")]
    else:
        raise SettingError("provide --lambda or --lambda-file")
    values = np.asarray(values, dtype=float)
    if len(values) != ws.N:
        raise SettingError(
            f"lambda has length {len(values)}; setting {ws.setting.label} needs {ws.N}"
        )
    return Spectrum.make(values)


def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        return int(env)
    return args.seed


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path("runs") / time.strftime("%Y%m%d-%H%M%S")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _quad_params(args) -> QuadratureParams:
    kw = {}
    if args.cutoff is not None:
        kw["cutoff"] = args.cutoff
    if args.nodes is not None:
        kw["nodes_per_axis"] = args.nodes
    return QuadratureParams(**kw)


def _write_json(path: Path, payload, record: RunRecord):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    record.artifacts.append(str(path))


def _write_grid_csv(path: Path, grid: DensityGrid, record: RunRecord):
    axes = grid.axes
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i+1}" for i in range(len(axes))] + ["value", "err"])
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack([m.ravel() for m in mesh], axis=1)
        for c, v in zip(coords, grid.values.ravel()):
            w.writerow([f"{x:.12g}" for x in c] + [f"{v:.12g}", f"{grid.truncation_error:.3g}"])
    record.artifacts.append(str(path))


def _write_hist_csv(path: Path, hist, record: RunRecord):
    edges = hist.edges
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        dims = len(edges)
        header = []
        for i in range(dims):
            header += [f"bin_low{i+1}", f"bin_high{i+1}"]
        w.writerow(header + ["count"])
        it = np.ndindex(hist.counts.shape)
        for idx in it:
            row = []
            for i, j in enumerate(idx):
                row += [f"{edges[i][j]:.12g}", f"{edges[i][j+1]:.12g}"]
            w.writerow(row + [int(hist.counts[idx])])
    record.artifacts.append(str(path))


# -- subcommands -----------------------------------------------------------


def cmd_weights(args) -> int:
    setting = Setting.parse(args.setting)
    ws = WeightSystem(setting)
    record = RunRecord("weights", {"setting": args.setting})
    out = _out_dir(args)
    _write_json(out / "weights.json", ws.to_json_dict(), record)
    record.finish(out)
    print(json.dumps(ws.to_json_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sample(args) -> int:
    setting = Setting.parse(args.setting)
    ws = WeightSystem(setting)
    lam = _parse_lambda(args, ws)
    seed = _seed(args)
    record = RunRecord("sample", {
        "setting": args.setting, "lambda": lam.values.tolist(),
        "samples": args.samples, "seed": seed, "grid": args.grid,
        "workers": args.workers,
    })
    raw = [] if args.raw else None
    hist = run_histogram(ws, lam, args.samples, seed=seed, bins=args.grid,
                         workers=args.workers, raw_samples_out=raw)
    out = _out_dir(args)
    if args.format == "csv":
        _write_hist_csv(out / "histogram.csv", hist, record)
    else:
        _write_json(out / "histogram.json", hist.to_json_dict(), record)
    if raw is not None:
        pts = np.concatenate(raw, axis=0)
        with (out / "samples.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i+1}" for i in range(pts.shape[1])])
            for p in pts:
                w.writerow([f"{x:.12g}" for x in p])
        record.artifacts.append(str(out / "samples.csv"))
    record.finish(out)
    print(f"total={hist.total} overflow={hist.overflow} -> {out}")
    return EXIT_OK


def cmd_density(args) -> int:
    setting = Setting.parse(args.setting)
    ws = WeightSystem(setting)
    lam = _parse_lambda(args, ws)
    record = RunRecord("density", {
        "setting": args.setting, "lambda": lam.values.tolist(),
        "grid": args.grid, "cutoff": args.cutoff, "nodes": args.nodes,
        "evaluator": args.evaluator,
    })
    box = support_box(ws, lam)
    axes = []
    for lo, hi in box:
        h = (hi - lo) / args.grid
        axes.append(np.linspace(lo + h / 2, hi - h / 2, args.grid))
    if args.evaluator == "exact":
        lam_int = np.round(lam.values - ws.rho_g).astype(int)
        if np.max(np.abs(lam.values - ws.rho_g - lam_int)) > 1e-9:
            raise SettingError(
                "exact evaluator needs an integral-shifted spectrum "
                "(centered dominant integral plus the ambient staircase)"
            )
        ev = ExactEvaluator.build(setting, tuple(lam_int - lam_int.min()))
        grid = DensityGrid(
            axes=axes,
            values=ev.density_grid_reduced(axes),
            truncation_error=0.0,
            meta={"setting": setting.label, "evaluator": "exact",
                  "lambda": lam.values.tolist()},
        )
        mass = None
    else:
        params = _quad_params(args)
        grid = density_grid(ws, lam, axes, params)
        mass = normalization_check(ws, lam, params)
    out = _out_dir(args)
    if args.format == "csv":
        _write_grid_csv(out / "density.csv", grid, record)
    else:
        _write_json(out / "density.json", grid.to_json_dict(), record)
    record.finish(out)
    msg = f"peak={grid.values.max():.6g}"
    if mass is not None:
        msg += f" mass={mass:.6f}"
    print(msg + f" -> {out}")
    return EXIT_OK


def cmd_hciz(args) -> int:
    a = np.array([float(x) for x in args.a.split(",")])
    b = np.array([float(x) for x in args.b.split(",")])
    if len(a) != len(b):
        raise SettingError("--a and --b must have equal length")
    analytic = hciz_value(a, b)
    print(f"analytic = {analytic:.10g}")
    if args.mc:
        mean, err = mc_hciz(a, b, args.mc, seed=_seed(args))
        print(f"mc       = {mean:.10g} +- {err:.3g}  ({args.mc} samples)")
    return EXIT_OK


def cmd_mult(args) -> int:
    setting = Setting.parse(args.setting)
    lam = tuple(int(x) for x in args.lam.split(","))
    table = restrict_decompose(setting, lam)
    record = RunRecord("mult", {"setting": args.setting, "lambda": list(lam),
                                "recover": args.recover})
    out = _out_dir(args)
    payload = table.to_json_dict()
    if args.recover:
        ws = WeightSystem(setting)
        ev = ExactEvaluator.build(setting, lam, table=table)
        jvals = ev.j_values_on_lattice()
        recovered = []
        for mu, m in sorted(table.entries.items()):
            res = recover_multiplicity(ws, lam, mu, jvals,
                                       torus_grid=args.torus_grid,
                                       spline=ev.spline)
            recovered.append({
                "mu": [list(f) for f in mu], "true": m,
                "recovered": res.rounded, "residual": res.residual,
            })
        payload["recovered"] = recovered
    _write_json(out / "multiplicities.json", payload, record)
    record.finish(out)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_spline(args) -> int:
    setting = Setting.parse(args.setting)
    ws = WeightSystem(setting)
    bs = BoxSpline.for_weight_system(ws)
    if args.at:
        x = np.array([float(v) for v in args.at.split(",")])
        print(f"{bs(x):.12g}")
    else:
        print(json.dumps({
            "directions": [list(map(float, d)) for d in bs.dirs],
            "support_radius": bs.support_radius(),
        }, indent=2))
    return EXIT_OK


def cmd_compare(args) -> int:
    setting = Setting.parse(args.setting)
    ws = WeightSystem(setting)
    lam = _parse_lambda(args, ws)
    seed = _seed(args)
    record = RunRecord("compare", {
        "setting": args.setting, "lambda": lam.values.tolist(),
        "samples": args.samples, "seed": seed, "grid": args.grid,
        "evaluator": args.evaluator, "cutoff": args.cutoff,
        "nodes": args.nodes, "workers": args.workers,
    })
    params = _quad_params(args)
    report = run_compare(ws, lam, samples=args.samples, bins=args.grid,
                         seed=seed, evaluator=args.evaluator, params=params,
                         workers=args.workers)
    out = _out_dir(args)
    _write_hist_csv(out / "histogram.csv", report.histogram, record)
    _write_grid_csv(out / "density.csv", report.grid, record)
    with (out / "comparison.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["smoothed_empirical", "smoothed_analytic", "abs_diff"])
        for e, a in zip(report.smoothed_empirical.ravel(),
                        report.smoothed_analytic.ravel()):
            w.writerow([f"{e:.12g}", f"{a:.12g}", f"{abs(e-a):.12g}"])
    record.artifacts.append(str(out / "comparison.csv"))
    summary = {
        "sup_discrepancy": report.sup_discrepancy,
        "l1_discrepancy": report.l1_discrepancy,
        "peak_density": report.peak_density,
        "sup_over_peak": report.sup_discrepancy / report.peak_density,
        "passed": report.passed,
        "singular_lines": sorted(
            [{"family": f, "offset": c} for f, c in report.line_equations],
            key=lambda d: (d["family"], d["offset"]),
        ),
        "meta": report.meta,
    }
    _write_json(out / "report.json", summary, record)
    record.finish(out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_NUMERICAL


def _add_common(p, lam_opt=True):
    p.add_argument("--setting", required=True, help="dst:n1,n2[,..] | bos:n,k | fer:n,k")
    if lam_opt:
        p.add_argument("--lambda", dest="lam", help="comma-separated spectrum")
        p.add_argument("--lambda-file", help="JSON file with the spectrum")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default runs/<timestamp>)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orbitproj", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("weights", help="emit weight-system JSON")
    p.add_argument("--setting", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("sample", help="Monte Carlo marginal-spectrum histogram")
    _add_common(p)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--raw", action="store_true", help="also dump raw samples")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("density", help="analytic density on a grid")
    _add_common(p)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--nodes", type=int)
    p.add_argument("--evaluator", choices=["quad", "exact"], default="quad")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("hciz", help="closed-form vs Monte Carlo Haar average")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--mc", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_hciz)

    p = sub.add_parser("mult", help="restriction multiplicities")
    p.add_argument("--setting", required=True)
    p.add_argument("--lambda", dest="lam", required=True,
                   help="dominant integral ambient weight, comma-separated")
    p.add_argument("--recover", action="store_true",
                   help="also invert the convolution by the torus integral")
    p.add_argument("--torus-grid", type=int, default=16)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mult)

    p = sub.add_parser("spline", help="box-spline info / evaluation")
    p.add_argument("--setting", required=True)
    p.add_argument("--at", help="evaluate at reduced coordinates c1,c2,...")
    p.set_defaults(func=cmd_spline)

    p = sub.add_parser("compare", help="MC vs analytic comparison harness")
    _add_common(p)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--nodes", type=int)
    p.add_argument("--evaluator", choices=["quad", "exact"], default="quad")
    p.set_defaults(func=cmd_compare)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SettingError, ValueError) as exc:
        if isinstance(exc, CapExceededError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CAP
        if isinstance(exc, (NonGenericSpectrumError,)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalAlarm, RecoveryError) as exc:
        print(f"numerical alarm: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())

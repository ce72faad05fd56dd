"""Command-line driver: ``pdduq {build,mcs,sweep,gridinfo}``.

Exit codes: 0 success, 2 configuration error, 3 model or engine failure,
4 evaluation budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import RankingError, audit_lines, build_truncated, run_adaptive
from .config import Campaign, ConfigError, adaptive_config, dump_config, load_config
from .evaluation import BudgetExceeded, ModelEvaluationError
from .fsi import FsiLevelError
from .models import ExternalModelError
from .orthopoly import build_basis
from .postproc import crude_mcs, economy_comparison, embedded_mcs, tolerance_sweep, truncated_sweep
from .quadrature import OrderTooHighError, grid_point_count
from .random_input import RandomInput, StandardizationError
from .store import CoefficientStore, SurrogateModel, count_adaptive, count_truncated

__all__ = ["main", "write_surrogates", "read_surrogates", "EXIT_OK", "EXIT_CONFIG", "EXIT_MODEL", "EXIT_BUDGET"]

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_BUDGET = 0, 2, 3, 4
SURROGATE_FORMAT = "pdduq-surrogate"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


class _Run:
    """Collects emitted files and phase timings for the manifest."""

    def __init__(self, command: str, doc: dict, outdir: Path):
        self.command = command
        self.doc = doc
        self.outdir = outdir
        outdir.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self.phases: list[dict] = []
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        p = self.outdir / name
        self.files.append(p)
        return p

    def phase(self, name: str, evals: int, seconds: float):
        self.phases.append({"phase": name, "eval_count": int(evals), "seconds": seconds})

    def finish(self):
        manifest = {
            "tool": "pdduq",
            "version": __version__,
            "command": self.command,
            "config": self.doc,
            "wall_time_seconds": time.perf_counter() - self.t0,
            "phases": self.phases,
            "files": [{"name": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size} for p in self.files],
        }
        _write_json(self.outdir / "manifest.json", manifest)
        return manifest


# surrogate files --------------------------------------------------------------
def write_surrogates(path, surrogates, max_order: int):
    ri: RandomInput = surrogates[0].input
    conv = {getattr(m, "convention", None) for m in ri.marginals} - {None}
    doc = {
        "format": SURROGATE_FORMAT,
        "version": 1,
        "input": ri.to_list(),
        "uniform_convention": conv.pop() if conv else "unit",
        "basis_max_order": int(max_order),
        "outputs": [s.store.to_dict() for s in surrogates],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def read_surrogates(path) -> list[SurrogateModel]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"surrogate file {str(p)!r} not found", "mcs.surrogate")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"surrogate file is not valid JSON: {exc}", "mcs.surrogate") from exc
    if doc.get("format") != SURROGATE_FORMAT:
        raise ConfigError("not a surrogate file", "mcs.surrogate")
    ri = RandomInput.from_list(doc["input"], doc.get("uniform_convention", "unit"))
    bases = [build_basis(m, doc["basis_max_order"]) for m in ri.marginals]
    return [SurrogateModel(CoefficientStore.from_dict(s), bases, ri) for s in doc["outputs"]]


# commands --------------------------------------------------------------------
def _n_outputs(campaign, engine) -> int:
    n = getattr(campaign.model, "n_outputs", None)
    return int(n) if n is not None else engine.n_outputs


def _moments(store: CoefficientStore) -> dict:
    mean, var = store.y_empty, store.variance()
    return {"mean": mean, "variance": var, "std": math.sqrt(var), "second_moment": mean * mean + var}


def _build(campaign: Campaign, run: _Run):
    doc = campaign.doc
    method = doc["method"]
    engine = campaign.engine
    N = campaign.input.dim
    t = time.perf_counter()
    surrogates, outputs, audits = [], [], []
    for k in range(_n_outputs(campaign, engine)):
        if method["kind"] == "truncated":
            sur = build_truncated(engine, method["S"], method["m"], k)
            entry = {
                "output": k,
                "method": "truncated",
                "S": method["S"],
                "m": method["m"],
                "coefficient_count": count_adaptive(sur.store),
                "truncated_count": count_truncated(N, method["S"], method["m"]),
                "component_variances": [
                    {"u": [i + 1 for i in u], "variance": v} for u, v in sur.store.component_variances().items()
                ],
            }
        else:
            res = run_adaptive(engine, adaptive_config(doc), k, campaign.input)
            sur = res.surrogate
            entry = dict(res.report)
            entry["method"] = method["kind"]
            audits.extend(audit_lines(res.state))
        entry.update(_moments(sur.store))
        if campaign.exact_variance is not None:
            entry["reference_variance"] = campaign.exact_variance
            entry["relative_variance_error"] = abs(entry["variance"] - campaign.exact_variance) / campaign.exact_variance
        entry.pop("eval_count", None)
        surrogates.append(sur)
        outputs.append(entry)
    run.phase("coefficients", engine.eval_count, time.perf_counter() - t)
    report = {"N": N, "eval_count": engine.eval_count, "outputs": outputs}
    _write_json(run.path("report.json"), report)
    write_surrogates(run.path("surrogate.json"), surrogates, doc["method"]["max_order"])
    if audits:
        run.path("audit.jsonl").write_text("\n".join(audits) + "\n")
    return surrogates, report


def cmd_build(campaign: Campaign, run: _Run):
    _, report = _build(campaign, run)
    for o in report["outputs"]:
        print(f"output {o['output']}: mean={o['mean']:.10g} variance={o['variance']:.10g} "
              f"coefficients={o['coefficient_count']}")
    print(f"model evaluations: {report['eval_count']}")


def cmd_mcs(campaign: Campaign, run: _Run, surrogate_path=None):
    doc = campaign.doc
    mcs = doc["mcs"]
    t = time.perf_counter()
    if mcs["source"] == "model":
        res = crude_mcs(campaign.model, campaign.input, mcs["L"], doc["seed"], threads=doc["threads"],
                        budget=doc["budget"])
        run.phase("crude_mcs", res.eval_count, time.perf_counter() - t)
    else:
        path = surrogate_path or mcs["surrogate"]
        if path is not None:
            surrogates = read_surrogates(path)
        else:
            surrogates, _ = _build(campaign, run)
            run.phase("build", campaign.engine.eval_count, time.perf_counter() - t)
            t = time.perf_counter()
        res = embedded_mcs(surrogates, mcs["L"], doc["seed"], threads=doc["threads"])
        run.phase("embedded_mcs", 0, time.perf_counter() - t)
    for k in range(res.n_outputs):
        res.write_cdf_csv(run.path(f"cdf_y{k + 1}.csv"), k, mcs["cdf_rows"])
        res.write_histogram_csv(run.path(f"histogram_y{k + 1}.csv"), k)
    if mcs["paired"] and res.n_outputs > 1:
        res.write_paired_csv(run.path("paired_y1_y2.csv"), 0, 1, max_rows=mcs["cdf_rows"])
    _write_json(run.path("moments.json"), res.summary())
    for k in range(res.n_outputs):
        print(f"output {k}: mean={res.mean[k]:.10g} variance={res.variance[k]:.10g} (L={res.n}, {res.source})")


def cmd_sweep(campaign: Campaign, run: _Run, tolerances=None):
    doc = campaign.doc
    sw = doc["sweep"]
    reference = sw["reference_variance"]
    label = "configured reference"
    if reference is None:
        if campaign.exact_variance is None:
            raise ConfigError("no closed-form variance for this model; set sweep.reference_variance",
                              "sweep.reference_variance")
        reference, label = campaign.exact_variance, "closed form"
    tols = tolerances if tolerances is not None else sw["tolerances"]
    cfg = adaptive_config(doc)
    t = time.perf_counter()
    engine = campaign.engine
    result = tolerance_sweep(engine, tols, reference, label, cfg, sw["output"])
    if sw["truncated_S"] and sw["truncated_m"]:
        trunc = truncated_sweep(engine, sw["truncated_S"], sw["truncated_m"], reference, label, sw["output"])
        result.rows.extend(trunc.rows)
        if sw["targets"]:
            adaptive_rows = type(result)(reference, label, [r for r in result.rows if r.method == "adaptive"])
            econ = economy_comparison(adaptive_rows, trunc, sw["targets"])
            _write_json(run.path("economy.json"), econ)
    run.phase("sweep", engine.eval_count, time.perf_counter() - t)
    result.to_csv(run.path("sweep.csv"))
    for r in result.rows:
        print(f"{r.method} {r.setting}: rel_error={r.rel_error:.3e} coefficients={r.coefficient_count}")


def cmd_gridinfo(kind: str, dims, levels, out=None):
    rows = []
    for d in dims:
        rows.append([d] + [grid_point_count(kind, d, lev) for lev in levels])
    header = ["dim"] + [f"l={lev}" for lev in levels]
    w = csv.writer(out or sys.stdout)
    w.writerow(header)
    w.writerows(rows)
    return rows


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    return out


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdduq", description="Adaptive-sparse polynomial dimensional decomposition")
    p.add_argument("--version", action="version", version=f"pdduq {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML campaign configuration")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
        sp.add_argument("--output", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
        sp.add_argument("--threads", type=int, help="worker threads (overrides the config)")

    common(sub.add_parser("build", help="build a PDD surrogate"))
    sp = sub.add_parser("mcs", help="embedded or crude Monte Carlo simulation")
    common(sp)
    sp.add_argument("--surrogate", help="surrogate.json from a previous build")
    sp = sub.add_parser("sweep", help="tolerance sweep against a reference variance")
    common(sp)
    sp.add_argument("--tolerances", help="comma-separated tolerances")
    sp = sub.add_parser("gridinfo", help="integration point counts")
    sp.add_argument("--kind", choices=["fsi", "fullgrid"], required=True)
    sp.add_argument("--dims", default="1-10", help="dimensions, e.g. 1-10 or 2,4")
    sp.add_argument("--levels", default="1-5", help="levels, e.g. 1-5")
    sp.add_argument("--output", help="write the table to this CSV file")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "gridinfo":
            dims, levels = _int_list(args.dims), _int_list(args.levels)
            if args.output:
                with open(args.output, "w", newline="") as fh:
                    cmd_gridinfo(args.kind, dims, levels, fh)
            else:
                cmd_gridinfo(args.kind, dims, levels)
            return EXIT_OK
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.threads is not None:
            overrides.append(f"threads={args.threads}")
        if args.output is not None:
            overrides.append(f"output={json.dumps(args.output)}")
        doc = load_config(args.config, overrides)
        tolerances = None
        if args.command == "sweep" and args.tolerances:
            try:
                tolerances = [float(t) for t in args.tolerances.split(",") if t]
            except ValueError as exc:
                raise ConfigError(f"bad tolerance list: {exc}", "--tolerances") from exc
            if any(t < 0 for t in tolerances):
                raise ConfigError("tolerances must be non-negative", "--tolerances")
        campaign = Campaign(doc)
        run = _Run(args.command, doc, Path(doc["output"]))
        (run.outdir / "config.yaml").write_text(dump_config(doc))
        run.files.append(run.outdir / "config.yaml")
        try:
            if args.command == "build":
                cmd_build(campaign, run)
            elif args.command == "mcs":
                cmd_mcs(campaign, run, args.surrogate)
            else:
                cmd_sweep(campaign, run, tolerances)
        finally:
            campaign.close()
        run.finish()
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ModelEvaluationError, ExternalModelError, RankingError, OrderTooHighError, StandardizationError,
            FsiLevelError) as exc:
        print(f"campaign failed: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except ValueError as exc:
        if args.command == "gridinfo":
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"campaign failed: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())

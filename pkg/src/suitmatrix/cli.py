"""Command-line front end: ``analyze``, ``fit``, ``suitability``, ``generate``, ``simulate``.

Parameters come from built-in defaults, then an optional flat ``key=value``
config file (``--config``), then explicit flags. The merged parameters are
written to ``<out>/run_manifest.txt``; passing that file back via
``--config`` reproduces the run.

Exit codes: 0 success, 2 usage or input error, 1 internal error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable

from . import __version__
from .errors import InvalidArgument, MissingInput, SuitMatrixError, TooFewReps
from .metrics import (
    METRICS,
    ratio_histogram,
    summarize_by_operation,
    summary_csv,
    summary_to_csv,
    threshold_table,
    metric_value,
)
from .rng import derive_seed
from .simcore import ClusterConfig, parse_cluster_spec, run_sim
from .suitability import (
    FuzzyParams,
    NaiveParams,
    TradeoffPreference,
    naive_matrix,
    naive_to_csv,
    suitability_matrix,
    threshold_gap,
    threshold_gap_from_cost,
)
from .timemodel import (
    DEFAULT_BASE_FIT,
    EtcMatrix,
    QuadraticFit,
    build_etc,
    fit_quadratic,
    load_etc,
    trace_points,
)
from .workload import (
    default_vm_catalog,
    generate_workload,
    load_trace,
    load_workload,
    parse_mix,
    serialize_workload,
)

MANIFEST = "run_manifest.txt"


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise InvalidArgument(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text in (None, "") else float(text)


def _allowance(text) -> float:
    value = float(text)  # accepts "inf"
    if math.isnan(value):
        raise InvalidArgument("allowance must not be NaN")
    return value


def _path(text):
    return "" if text in (None, "") else str(Path(text).resolve())


# name -> (converter, default, help)
Param = tuple[Callable, object, str]

SHARED: dict[str, Param] = {
    "seed": (int, 0, "master seed"),
}

COMMANDS: dict[str, tuple[str, dict[str, Param]]] = {
    "analyze": (
        "ratio histograms, threshold tables and per-operation means of a trace",
        {
            "trace": (_path, "", "trace CSV"),
            "baseline": (str, "gpu", "baseline VM type"),
            "thresholds": (str, "<1.0,<=1.2", "comma list of <θ (strict) or <=θ"),
            "bin_width": (float, 0.1, "histogram bin width (ratio units)"),
            "operation": (str, "", "restrict histograms to one operation"),
            "per_video": (_flag, False, "also group the summary by video_id"),
        },
    ),
    "fit": (
        "quadratic regression of transcoding time",
        {
            "trace": (_path, "", "trace CSV"),
            "predictor": (str, "frame_count", "frame_count or gop_size_mb"),
            "vm_type": (str, "gpu", "VM type whose times are fitted"),
            "operation": (str, "", "restrict to one operation (default: pooled)"),
        },
    ),
    "suitability": (
        "suitability (or naive) score matrix",
        {
            "etc": (_path, "", "ETC CSV"),
            "trace": (_path, "", "trace CSV (converted to an ETC)"),
            "operation": (str, "", "operation filter when reading a trace"),
            "method": (str, "suitability", "suitability or naive"),
            "p": (float, 0.5, "performance preference in (0,1)"),
            "cost_pref": (_opt_float, None, "use the cost-preference threshold form instead of p"),
            "delta_th": (_opt_float, None, "threshold gap in seconds (overrides p)"),
            "alpha": (float, 1.0, "membership scale"),
            "beta": (float, 5.0, "membership offset"),
            "k": (float, 0.5, "naive time weight"),
            "baseline": (str, "gpu", "baseline VM type"),
            "literal": (_flag, False, "subtract the max in the normalization"),
        },
    ),
    "generate": (
        "synthetic workload and ETC matrix",
        {
            "n": (int, 100, "number of GOP tasks"),
            "mix": (str, "slow=0.25,fast=0.25,mixed=0.5", "content-type fractions"),
            "window": (float, 600.0, "arrival window (s)"),
            "gops_per_video": (int, 1, "GOPs per video stream"),
            "fps": (float, 30.0, "frames per second"),
            "arrival": (str, "uniform", "uniform or poisson"),
            "fit": (_path, "", "fit.txt for the baseline time model"),
        },
    ),
    "simulate": (
        "replicated discrete-event simulation",
        {
            "workload": (_path, "", "workload CSV (default: generate per replication)"),
            "etc": (_path, "", "ETC CSV (required with --workload)"),
            "n": (int, 500, "tasks per generated replication"),
            "mix": (str, "slow=0.25,fast=0.25,mixed=0.5", "content-type fractions"),
            "window": (float, 1800.0, "arrival window (s)"),
            "gops_per_video": (int, 1, "GOPs per video stream"),
            "fps": (float, 30.0, "frames per second"),
            "arrival": (str, "uniform", "uniform or poisson"),
            "fit": (_path, "", "fit.txt for the baseline time model"),
            "cluster": (str, "gpu=2,cpu_opt=4,general=4", "VM counts"),
            "policy": (str, "suitability", "suitability, naive, fastest_vm or random"),
            "p": (float, 0.4, "performance preference"),
            "delta_th": (_opt_float, None, "threshold gap in seconds (overrides p)"),
            "alpha": (float, 1.0, "membership scale"),
            "beta": (float, 5.0, "membership offset"),
            "k": (float, 0.5, "naive time weight"),
            "reps": (int, 30, "replications"),
            "allowance": (_allowance, 5.0, "startup allowance in seconds, or inf"),
            "quantum": (float, 3600.0, "billing quantum (s)"),
            "billing": (str, "span", "span or busy"),
            "window_k": (int, 10, "scheduler look-ahead"),
            "estimate_noise": (float, 0.0, "lognormal sigma of scheduler time estimates"),
            "parallel": (int, 1, "worker processes"),
            "emit_events": (_flag, False, "write per-replication event logs"),
        },
    ),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="suitmatrix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, params) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value parameter file")
        p.add_argument("--out", default=None, help="output directory (default: current)")
        for key, (conv, default, h) in {**SHARED, **params}.items():
            flag = "--" + key.replace("_", "-")
            if conv is _flag:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=h)
            else:
                p.add_argument(flag, dest=key, default=None, help=f"{h} (default: {default})")
    return parser


def read_config(path: str) -> dict[str, str]:
    if not os.path.isfile(path):
        raise MissingInput(f"config file not found: {path}")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InvalidArgument(f"{path}:{lineno}: expected key=value")
            out[key.strip()] = value.strip()
    return out


def resolve_params(command: str, args: argparse.Namespace) -> dict:
    params = {**SHARED, **COMMANDS[command][1]}
    merged = {k: default for k, (_, default, _) in params.items()}
    if args.config:
        conf = read_config(args.config)
        conf.pop("command", None)
        unknown = set(conf) - set(params)
        if unknown:
            raise InvalidArgument(f"unknown config keys for {command}: {sorted(unknown)}")
        merged.update(conf)
    for key in params:
        value = getattr(args, key)
        if value is not None:
            merged[key] = value
    out = {}
    for key, (conv, default, _) in params.items():
        value = merged[key]
        try:
            out[key] = None if value is None else conv(value)
        except ValueError as exc:
            raise InvalidArgument(f"bad value for {key}: {value!r} ({exc})") from None
    return out


def _fmt_param(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_manifest(out_dir: Path, command: str, params: dict) -> None:
    lines = [f"command={command}"] + [f"{k}={_fmt_param(params[k])}" for k in sorted(params)]
    (out_dir / MANIFEST).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _require_file(path: str, what: str) -> str:
    if not path:
        raise MissingInput(f"--{what} is required")
    if not os.path.isfile(path):
        raise MissingInput(f"{what} file not found: {path}")
    return path


def _write(out_dir: Path, name: str, text: str) -> None:
    (out_dir / name).write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def _parse_thresholds(text: str) -> list[tuple[float, bool, str]]:
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if part.startswith("<="):
            value, strict, tag = part[2:], False, "le"
        elif part.startswith("<"):
            value, strict, tag = part[1:], True, "lt"
        else:
            value, strict, tag = part, True, "lt"
        try:
            theta = float(value)
        except ValueError:
            raise InvalidArgument(f"bad threshold {part!r}") from None
        out.append((theta, strict, f"{tag}{value}"))
    if not out:
        raise InvalidArgument("no thresholds given")
    return out


def cmd_analyze(params: dict, out_dir: Path) -> None:
    catalog = default_vm_catalog()
    trace = load_trace(_require_file(params["trace"], "trace"), catalog)
    baseline = params["baseline"]
    for theta, strict, tag in _parse_thresholds(params["thresholds"]):
        table = threshold_table(trace, baseline, theta, strict)
        _write(out_dir, f"threshold_table_{tag}.csv", table.to_csv())
    op = params["operation"] or None
    _write(out_dir, "histogram.csv", ratio_histogram(trace, baseline, params["bin_width"], operation=op).to_csv())
    for vm in catalog:
        if vm.name == baseline or not any(r.vm_type == vm.name for r in trace):
            continue
        hist = ratio_histogram(trace, baseline, params["bin_width"], vm_type=vm.name, operation=op)
        _write(out_dir, f"histogram_{vm.name}.csv", hist.to_csv())
    order = [vm.name for vm in catalog]
    _write(out_dir, "operation_summary.csv", summary_to_csv(summarize_by_operation(trace), order))
    if params["per_video"]:
        per_video = summarize_by_operation(trace, per_video=True)
        _write(out_dir, "operation_summary_per_video.csv", summary_to_csv(per_video, order))
        print(f"videos={len({k[0] for k in per_video})}")


def cmd_fit(params: dict, out_dir: Path) -> None:
    trace = load_trace(_require_file(params["trace"], "trace"))
    points = trace_points(trace, params["predictor"], params["vm_type"], params["operation"] or None)
    fit = fit_quadratic(points, params["predictor"])
    _write(out_dir, "fit.txt", fit.to_text())
    sys.stdout.write(fit.to_text())


def etc_from_trace(trace, vm_types, operation: str | None = None) -> EtcMatrix:
    """One ETC row per (video_id, gop_index, operation) measured on every VM type."""
    times: dict[tuple, dict[str, list[float]]] = {}
    for r in trace:
        if operation is not None and r.operation.value != operation:
            continue
        times.setdefault((r.video_id, r.gop_index, r.operation.value), {}).setdefault(r.vm_type, []).append(
            r.transcode_time_s
        )
    rows = []
    for per_vm in times.values():
        if all(vm in per_vm for vm in vm_types):
            rows.append([sum(per_vm[vm]) / len(per_vm[vm]) for vm in vm_types])
    if not rows:
        raise InvalidArgument("no trace key is measured on every VM type")
    return EtcMatrix(tuple(range(len(rows))), tuple(vm_types), rows)


def cmd_suitability(params: dict, out_dir: Path) -> None:
    catalog = default_vm_catalog()
    if params["etc"]:
        etc = load_etc(_require_file(params["etc"], "etc"))
    elif params["trace"]:
        trace = load_trace(_require_file(params["trace"], "trace"), catalog)
        etc = etc_from_trace(trace, [vm.name for vm in catalog], params["operation"] or None)
        _write(out_dir, "etc_from_trace.csv", etc.to_csv())
    else:
        raise MissingInput("one of --etc or --trace is required")

    if params["method"] == "naive":
        scores = naive_matrix(etc, catalog, NaiveParams(params["k"]))
        _write(out_dir, "suitability.csv", naive_to_csv(etc, scores))
        return
    if params["method"] != "suitability":
        raise InvalidArgument(f"unknown method {params['method']!r}")
    fuzzy = FuzzyParams(params["alpha"], params["beta"])
    if params["delta_th"] is not None:
        delta_th = params["delta_th"]
    elif params["cost_pref"] is not None:
        delta_th = threshold_gap_from_cost(params["cost_pref"], fuzzy)
    else:
        delta_th = threshold_gap(TradeoffPreference(params["p"]), fuzzy)
    matrix = suitability_matrix(
        etc, catalog, delta_th=delta_th, baseline=params["baseline"], literal=params["literal"]
    )
    _write(out_dir, "suitability.csv", matrix.to_csv())
    print(f"delta_th={delta_th!r}")


def _base_fit(path: str) -> QuadraticFit:
    if not path:
        return DEFAULT_BASE_FIT
    with open(_require_file(path, "fit"), encoding="utf-8") as fh:
        return QuadraticFit.from_text(fh.read())


def _generate(params: dict, seed: int, base_fit: QuadraticFit):
    workload = generate_workload(
        params["n"],
        parse_mix(params["mix"]),
        params["window"],
        seed,
        gops_per_video=params["gops_per_video"],
        fps=params["fps"],
        arrival=params["arrival"],
    )
    return workload, build_etc(workload, base_fit, seed=seed)


def cmd_generate(params: dict, out_dir: Path) -> None:
    workload, etc = _generate(params, params["seed"], _base_fit(params["fit"]))
    _write(out_dir, "workload.csv", serialize_workload(workload))
    _write(out_dir, "etc.csv", etc.to_csv())


def _simulate_rep(job):
    rep, seed, params, cluster, base_fit, fixed = job
    if fixed is None:
        workload, etc = _generate(params, seed, base_fit)
    else:
        workload, etc = fixed
    result = run_sim(
        workload,
        etc,
        cluster,
        params["policy"],
        TradeoffPreference(params["p"]) if params["delta_th"] is None else None,
        FuzzyParams(params["alpha"], params["beta"]),
        seed,
        naive=NaiveParams(params["k"]),
        window_k=params["window_k"],
        delta_th=params["delta_th"],
        estimate_noise=params["estimate_noise"],
        record_events=params["emit_events"],
    )
    return rep, result


def cmd_simulate(params: dict, out_dir: Path) -> None:
    if params["reps"] < 2:
        raise TooFewReps(f"need at least 2 replications, got {params['reps']}")
    cluster = parse_cluster_spec(
        params["cluster"],
        billing_quantum_s=params["quantum"],
        startup_allowance_s=params["allowance"],
        billing_mode=params["billing"],
    )
    fixed = None
    if params["workload"]:
        workload = load_workload(_require_file(params["workload"], "workload"))
        etc = load_etc(_require_file(params["etc"], "etc"))
        fixed = (workload, etc)
    base_fit = _base_fit(params["fit"])
    jobs = [
        (rep, derive_seed(params["seed"], rep), params, cluster, base_fit, fixed)
        for rep in range(params["reps"])
    ]
    if params["parallel"] > 1:
        with ProcessPoolExecutor(max_workers=params["parallel"]) as pool:
            results = list(pool.map(_simulate_rep, jobs))
    else:
        results = [_simulate_rep(job) for job in jobs]
    results.sort(key=lambda rr: rr[0])

    rep_dir = out_dir / "reps"
    rep_dir.mkdir(exist_ok=True)
    rows = ["rep,seed," + ",".join(METRICS)]
    for rep, result in results:
        rows.append(
            f"{rep},{result.replication_seed},"
            + ",".join(f"{metric_value(result, m):.6f}" for m in METRICS)
        )
        _write(rep_dir, f"rep_{rep:03d}_tasks.csv", result.per_task_csv())
        if params["emit_events"]:
            _write(rep_dir, f"rep_{rep:03d}_events.csv", result.events_csv())
    _write(out_dir, "replications.csv", "\n".join(rows) + "\n")
    summary = summary_csv([r for _, r in results])
    _write(out_dir, "summary.csv", summary)
    sys.stdout.write(summary)


HANDLERS = {
    "analyze": cmd_analyze,
    "fit": cmd_fit,
    "suitability": cmd_suitability,
    "generate": cmd_generate,
    "simulate": cmd_simulate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        params = resolve_params(args.command, args)
        out_dir = Path(args.out or ".")
        out_dir.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](params, out_dir)
        write_manifest(out_dir, args.command, params)
    except SuitMatrixError as exc:
        print(f"{exc.name}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"MissingInput: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"InternalError: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

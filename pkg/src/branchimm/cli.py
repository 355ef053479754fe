"""Command-line runner: ``branchimm run`` and ``branchimm list``.

Exit status is 0 on success, 2 when a statistical verdict fails and 1 on any
error (bad configuration, inadmissible kernel, numerical failure).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from importlib import metadata

import numpy as np

from . import config as cfg
from . import experiments as ex
from . import io as bio
from .errors import BranchimmError, ConfigError
from .laplace import process_transform
from .model import build_generator
from .moments import conv_asymptote, moment_csv, moment_report
from .presets import list_experiments, preset_document
from .simulation import replicate_rng, simulate_batch

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("branchimm", "numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


class _Writer:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.files = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out_dir, name)

    def text(self, name, content):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(content)

    def json(self, name, obj):
        self.text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _run_simulate(conf, w):
    p = conf.params
    horizon = float(p["horizon"])
    snaps = p["snapshots"] if p["snapshots"] is not None else [horizon]
    Z = simulate_batch(conf.spec, conf.immigration, horizon, p["n_rep"], conf.seed,
                       snapshots=snaps, threads=conf.threads,
                       founding_immigrant=bool(p["founding_immigrant"]))
    if conf.out_format in ("csv", "both"):
        w.text("batch.csv", bio.batch_csv(Z, snaps))
    if conf.out_format in ("binary", "both"):
        bio.write_batch_binary(w.path("batch.bin"), Z, snaps)
    rows = []
    n = Z.shape[0]
    for q, t in enumerate(snaps):
        for i in range(conf.spec.d):
            col = Z[:, q, i].astype(float)
            se = col.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
            rows.append((float(t), i, float(col.mean()), float(se)))
    w.text("summary.csv", bio.table_csv(["snapshot_t", "type", "mean", "std_error"], rows))
    return None


def _run_moments(conf, w):
    gen = build_generator(conf.spec)
    reports = [moment_report(conf.spec, gen, conf.immigration, float(t))
               for t in conf.params["t_grid"]]
    w.text("moments.csv", moment_csv(reports))
    return None


def _run_transform(conf, w):
    p = conf.params
    d = conf.spec.d
    rows = []
    idx = 0
    for t in p["t_grid"]:
        for s in p["s_grid"]:
            svec = np.broadcast_to(np.asarray(s, dtype=float), (d,))
            res = process_transform(conf.spec, conf.immigration, float(t), svec, p["mode"],
                                    n_rep=p["n_rep"], rng=replicate_rng(conf.seed, idx, 7))
            idx += 1
            se = getattr(res, "std_error", getattr(res, "error", 0.0))
            rows.append((float(t), *map(float, svec), float(res.value), float(se), res.method))
    header = ["t", *[f"s{i}" for i in range(d)], "value", "std_error", "method"]
    w.text("transform.csv", bio.table_csv(header, rows))
    return None


def _conv_functions(case):
    if case == "exp_decay":
        return (lambda x: math.exp(0.3 * x)), (lambda x: math.exp(-0.2 * x)), {"delta": 0.3}
    if case == "linear_exp":
        return (lambda x: math.exp(0.3 * x)), (lambda x: x * math.exp(-0.1 * x)), {"delta": 0.3}
    return (lambda x: 1.0), (lambda x: 1.0), {"alpha_inf": 1.0, "beta_inf": 1.0}


def _run_conv(conf, w):
    alpha, beta, kw = _conv_functions(conf.params["case"])
    diag = conv_asymptote(alpha, beta, conf.params["t_grid"], **kw)
    rows = list(zip(diag.t, diag.integral, diag.predictor, diag.ratio))
    w.text("conv.csv", bio.table_csv(["t", "integral", "predictor", "ratio"], rows))
    gap = abs(float(diag.ratio[-1]) - 1.0)
    return ex.ExperimentVerdict(
        f"conv_{conf.params['case']}", {"final_ratio_gap": gap}, {"final_ratio_gap": 0.01},
        gap < 0.01, 0, conf.seed,
    )


def _run_experiment(conf, w):
    p = conf.params
    spec = conf.spec
    gen = build_generator(spec)
    kernel = ex.as_kernel(conf.immigration)
    common = {"seed": conf.seed, "threads": conf.threads}
    if conf.kind == "rescaled_limit":
        v = ex.experiment_rescaled_limit(spec, gen, kernel, p["t_grid"], p["s_grid"], p["n_rep"],
                                         horizon=p["horizon"], **common)
    elif conf.kind == "l2_rates":
        v = ex.experiment_l2_rates(spec, gen, kernel, p["regime"], p["t_grid"], p["n_rep"],
                                   final_tol=p["final_tol"], **common)
    elif conf.kind == "gamma_limit":
        v = ex.experiment_gamma_limit(spec, gen, kernel, float(p["t"]), p["n_rep"], **common)
    else:
        v = ex.experiment_subcritical_limit(spec, gen, kernel, p["t_pair"], p["s_grid"],
                                            p["n_rep"], **common)
    if p["dump_samples"]:
        for name, Z in v.samples.items():
            Z = np.asarray(Z)
            rows = [(r, i, int(Z[r, i])) for r in range(Z.shape[0]) for i in range(Z.shape[1])]
            w.text(f"samples_{name}.csv", bio.table_csv(["replicate", "type", "count"], rows))
    return v


_RUNNERS = {
    "simulate": _run_simulate,
    "moments": _run_moments,
    "transform": _run_transform,
    "conv_asymptote": _run_conv,
}


def run(conf):
    """Execute a validated configuration; returns ``(exit_status, verdict or None)``."""
    start = time.perf_counter()
    w = _Writer(conf.out_dir)
    runner = _RUNNERS.get(conf.kind, _run_experiment)
    verdict = runner(conf, w)
    if verdict is not None:
        w.json("verdict.json", verdict.record())
        w.text("summary.txt", verdict.summary() + "\n")
    manifest = {
        "config_sha256": conf.config_hash(),
        "seed": conf.seed,
        "kind": conf.kind,
        "versions": _versions(),
        "outputs": {name: bio.sha256_file(os.path.join(conf.out_dir, name))
                    for name in sorted(w.files)},
    }
    with open(os.path.join(conf.out_dir, "manifest.json"), "w") as fh:
        fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    # wall time and thread count vary between runs; keep them out of the manifest
    with open(os.path.join(conf.out_dir, "timing.json"), "w") as fh:
        fh.write(json.dumps({"wall_time_s": time.perf_counter() - start,
                             "threads": conf.threads}, indent=2) + "\n")
    if verdict is not None and not verdict.passed:
        return EXIT_FAIL, verdict
    return EXIT_OK, verdict


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="branchimm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run one configured computation or experiment")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="PATH", help="TOML experiment configuration")
    src.add_argument("--preset", metavar="NAME", help="built-in preset (see 'list')")
    r.add_argument("--seed", type=int, metavar="U64", help="override the master seed")
    r.add_argument("--threads", type=int, metavar="N", help="worker threads")
    r.add_argument("--out", metavar="DIR", help="output directory")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set a dotted config field, e.g. experiment.n_rep=500")
    lst = sub.add_parser("list", help="list built-in experiment presets")
    lst.add_argument("--json", action="store_true", help="machine-readable catalog")
    return parser


def load_config(args):
    if args.preset:
        try:
            doc = preset_document(args.preset)
        except KeyError:
            raise ConfigError("--preset", f"unknown preset {args.preset!r}") from None
    else:
        doc = cfg.load_document(args.config)
    for assignment in args.override:
        cfg.apply_override(doc, assignment)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.threads is not None:
        doc["threads"] = args.threads
    return cfg.validate(doc, out_dir=args.out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list":
        catalog = list_experiments()
        if args.json:
            print(json.dumps(catalog, indent=2, sort_keys=True))
        else:
            width = max(len(e["name"]) for e in catalog)
            for e in catalog:
                print(f"{e['name']:<{width}}  {e['description']}")
        return EXIT_OK
    try:
        conf = load_config(args)
        status, verdict = run(conf)
    except BranchimmError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if verdict is not None:
        print(verdict.summary())
    return status


if __name__ == "__main__":
    sys.exit(main())

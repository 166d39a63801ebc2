"""Command-line interface: simulate, summary, fit, post, predict, bench.

Exit codes: 0 success, 2 usage or input error, 3 artifact mismatch,
4 numerical failure.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, chain_io, gibbs, postprocess, simdata
from .bench import run_bench
from .errors import ArtifactMismatch, NumericalError, PglmmError
from .model_spec import ModelSpec, compile_data, compile_new_data, load_spec, read_table, summarize
from .predict import POSTERIOR_MEAN_PROB, REPRESENTATIVE, predict
from .priors import default_priors, fingerprint, priors_from_dict

log = logging.getLogger("pglmm")

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH, EXIT_NUMERICAL = 0, 2, 3, 4

SCENARIOS = {
    "exposure": (simdata.ExposureConfig, simdata.gen_exposure, simdata.EXPOSURE_SPEC),
    "piecewise": (simdata.PiecewiseConfig, simdata.gen_piecewise, simdata.PIECEWISE_SPEC),
    "bench": (simdata.BenchConfig, simdata.gen_bench, simdata.BENCH_SPEC),
}


class UsageError(PglmmError):
    pass


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _chain_paths(out, n_chains):
    out = Path(out)
    if n_chains == 1:
        return [out]
    return [out.with_name(f"{out.stem}_{k}{out.suffix}") for k in range(n_chains)]


def _load_model(spec_path, data_path, priors_path):
    spec = load_spec(spec_path)
    data = compile_data(spec, read_table(data_path))
    if priors_path:
        with open(priors_path) as fh:
            priors = priors_from_dict(spec, data, json.load(fh))
    else:
        priors = default_priors(spec, data)
    return spec, data, priors


def _fit_one(job):
    spec_path, data_path, priors_path, n_it, n_burn_in, seed, out, progress = job
    spec, data, priors = _load_model(spec_path, data_path, priors_path)
    chain = gibbs.fit(spec, data, priors, n_it, n_burn_in, seed=seed, progress_every=progress)
    manifest = chain_io.save_chain(chain, out)
    return str(out), manifest["n_draws"]


# -- subcommands ------------------------------------------------------------------

def cmd_simulate(args):
    cfg_cls, gen, spec = SCENARIOS[args.scenario]
    cfg = cfg_cls(seed=args.seed)
    size = args.n
    if size is not None:
        field = "n_individuals" if args.scenario == "exposure" else "n_obs"
        setattr(cfg, field, size)
    result = gen(cfg)
    table, truth = result if isinstance(result, tuple) else (result, None)
    out = Path(args.out)
    table.to_csv(out, index=False, float_format="%.17g")
    print(f"wrote {len(table)} rows to {out}")
    if truth is not None:
        tpath = Path(args.truth) if args.truth else out.with_suffix(".truth.json")
        _write_json(tpath, truth)
        print(f"wrote generator truth to {tpath}")
    if args.spec_out:
        _write_json(args.spec_out, spec)
        print(f"wrote model spec to {args.spec_out}")
    return EXIT_OK


def cmd_summary(args):
    spec = load_spec(args.spec)
    data = compile_data(spec, read_table(args.data))
    print(summarize(spec, data))
    return EXIT_OK


def cmd_fit(args):
    if args.n_burn_in >= args.n_it:
        raise UsageError(f"--n-burn-in ({args.n_burn_in}) must be smaller than --n-it ({args.n_it})")
    if args.chains < 1:
        raise UsageError("--chains must be at least 1")
    paths = _chain_paths(args.out, args.chains)
    jobs = [(args.spec, args.data, args.priors, args.n_it, args.n_burn_in, args.seed + k,
             p, args.progress_every) for k, p in enumerate(paths)]
    if args.chains == 1:
        results = [_fit_one(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(args.chains, args.jobs or args.chains)) as ex:
            results = list(ex.map(_fit_one, jobs))
    for path, n_draws in results:
        print(f"wrote chain with {n_draws} retained draws to {path}")
    return EXIT_OK


def _parse_k(text):
    if text in ("auto", "modal"):
        return text
    try:
        k = int(text)
    except ValueError:
        raise UsageError(f"--k must be 'auto', 'modal' or an integer, got {text!r}") from None
    if k < 1:
        raise UsageError("--k must be positive")
    return k


def cmd_post(args):
    chain = chain_io.load_chain(args.chain)
    if args.spec:
        expected = fingerprint(load_spec(args.spec).to_dict())
        got = chain.meta.get("fingerprints", {}).get("spec")
        if got != expected:
            raise ArtifactMismatch(
                f"{args.chain}: chain was fitted with spec fingerprint {got}, "
                f"but {args.spec} has {expected}")
    fit = postprocess.postprocess(chain, method=args.method, k=_parse_k(args.k),
                                  level=args.level, seed=args.seed)
    Path(args.out).write_text(fit.to_json())
    print(f"representative clustering ({fit.method}): {fit.k} clusters, sizes "
          f"{fit.clusters.size.tolist()}")
    print(f"wrote fit to {args.out}")
    if args.trace:
        chain_io.write_trace_csv(chain, args.trace)
        print(f"wrote trace of {len(chain)} draws to {args.trace}")
    if args.S_csv:
        np.savetxt(args.S_csv, fit.S, delimiter=",", fmt="%.17g")
        print(f"wrote co-occurrence matrix to {args.S_csv}")
    return EXIT_OK


def cmd_predict(args):
    with open(args.fit) as fh:
        fit = postprocess.FitResult.from_dict(json.load(fh))
    if "spec" not in fit.meta or "data" not in fit.meta:
        raise ArtifactMismatch(f"{args.fit}: fit file lacks the model description")
    spec = ModelSpec.from_dict(fit.meta["spec"])
    new = compile_new_data(spec, fit.meta["data"], read_table(args.newdata))
    chain = None
    if args.mode == POSTERIOR_MEAN_PROB:
        if not args.chain:
            raise UsageError("--mode posterior_mean_prob needs --chain")
        chain = chain_io.load_chain(args.chain)
        if chain.meta.get("fingerprints") != fit.meta.get("fingerprints"):
            raise ArtifactMismatch(f"{args.chain} does not belong to {args.fit}")
    pred = predict(fit, new, mode=args.mode, weights=args.weights, chain=chain)
    pred.to_frame().to_csv(args.out, index=False, float_format="%.17g")
    print(f"wrote {len(pred.y)} predictions to {args.out}")
    return EXIT_OK


def cmd_bench(args):
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    if args.n_burn_in >= args.n_it:
        raise UsageError("--n-burn-in must be smaller than --n-it")
    rows = run_bench(sizes, reps=args.reps, n_it=args.n_it, n_burn_in=args.n_burn_in,
                     seed=args.seed)
    table = pd.DataFrame(rows, columns=["size", "mean_seconds", "sd_seconds"])
    print(table.to_string(index=False))
    if args.out:
        table.to_csv(args.out, index=False)
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="pglmm", description=(
        "Profile-regression mixed models: Dirichlet-process clustering linked to "
        "a linear or probit mixed outcome model."))
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress messages")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a simulated dataset")
    s.add_argument("--scenario", choices=sorted(SCENARIOS), required=True)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--n", type=int, help="individuals (exposure) or observations")
    s.add_argument("--out", required=True, help="CSV path")
    s.add_argument("--truth", help="truth JSON path (default: <out>.truth.json)")
    s.add_argument("--spec-out", help="also write the scenario's model spec JSON")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("summary", help="print the data summary of a model")
    s.add_argument("spec")
    s.add_argument("data")
    s.set_defaults(func=cmd_summary)

    s = sub.add_parser("fit", help="run the Gibbs sampler")
    s.add_argument("spec", help="model spec JSON")
    s.add_argument("data", help="data CSV")
    s.add_argument("--priors", help="prior overrides JSON")
    s.add_argument("--n-it", type=int, default=2000)
    s.add_argument("--n-burn-in", type=int, default=500)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--chains", type=int, default=1,
                   help="independent chains with seeds seed, seed+1, ...")
    s.add_argument("--jobs", type=int, help="worker processes for --chains")
    s.add_argument("--progress-every", type=int, default=100)
    s.add_argument("--out", required=True, help="chain file; manifest goes to <out>.json")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("post", help="representative clustering and summaries")
    s.add_argument("chain")
    s.add_argument("--method", choices=[postprocess.NG, postprocess.LS], default=postprocess.NG)
    s.add_argument("--k", default="auto", help="'auto', 'modal' or a cluster count")
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--seed", type=int, help="k-means seed (default: the chain seed)")
    s.add_argument("--spec", help="refuse the chain unless it was fitted with this spec")
    s.add_argument("--trace", help="write a CSV trace of zeta, sigma2 and beta")
    s.add_argument("--S-csv", dest="S_csv", help="write the co-occurrence matrix")
    s.add_argument("--out", required=True, help="fit JSON path")
    s.set_defaults(func=cmd_post)

    s = sub.add_parser("predict", help="predict clusters and outcomes for new data")
    s.add_argument("fit")
    s.add_argument("newdata")
    s.add_argument("--mode", choices=[REPRESENTATIVE, POSTERIOR_MEAN_PROB], default=REPRESENTATIVE)
    s.add_argument("--weights", choices=["size", "pi"], default="size")
    s.add_argument("--chain", help="chain file (needed for posterior_mean_prob)")
    s.add_argument("--out", required=True, help="prediction CSV path")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("bench", help="time the sampler on the benchmark scenario")
    s.add_argument("--sizes", default="1200,6000,12000")
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--n-it", type=int, default=2000)
    s.add_argument("--n-burn-in", type=int, default=500)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--out", help="also write the table as CSV")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ArtifactMismatch as exc:
        print(f"pglmm: artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except NumericalError as exc:
        print(f"pglmm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PglmmError, ValueError, KeyError, OSError) as exc:
        print(f"pglmm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

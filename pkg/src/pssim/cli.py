"""``pssim`` command line: sample, diagnose, dbar and validate.

Exit codes: 0 success, 1 validation failure, 2 invalid configuration,
3 supercritical model without a step cap, 4 internal consistency failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import sys
from collections import Counter
from typing import List, Optional

import numpy as np

from .assign import ConsistencyError, initial_from_config, sample_replicas
from .config import ConfigError, RunConfig, load_config, parse_sites, site_label
from .decomposition import DecompositionError, GammaError, KalikowDecomposition, RangeCapExceeded
from .diagnostics import bounds_report
from .sketch import SupercriticalError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SUPERCRITICAL, EXIT_CONSISTENCY = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@contextlib.contextmanager
def _open_out(path: Optional[str]):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _setup(args) -> tuple[RunConfig, KalikowDecomposition]:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.sampler.seed = args.seed
    model = cfg.build_model()
    decomp = KalikowDecomposition(model, range_cap=cfg.sampler.range_cap)
    return cfg, decomp


def _gamma(decomp) -> float:
    try:
        return decomp.gamma()
    except GammaError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from exc


def _require_seed(cfg: RunConfig) -> int:
    if cfg.sampler.seed is None:
        raise ConfigError("a seed is required (sampler.seed or --seed)")
    return cfg.sampler.seed


# ---------------------------------------------------------------------------
# commands


def cmd_sample(args) -> int:
    cfg, decomp = _setup(args)
    seed = _require_seed(cfg)
    s = cfg.sampler
    g = _gamma(decomp)
    if g >= 1.0 and s.step_cap is None:
        raise CliError(EXIT_SUPERCRITICAL, f"supercritical: gamma = {g:.6g} >= 1 and no step_cap given")
    F = s.sites
    init = None
    if s.t is not None:
        spec = s.initial
        init = lambda aux: initial_from_config(spec, decomp, aux, s.backend)
    results = sample_replicas(F, decomp, seed, s.replicas, step_cap=s.step_cap, t=s.t, initial=init,
                              backend=s.backend)
    out_path = args.out or cfg.output.get("path")
    nstops = Counter()
    truncated = 0
    sums = np.zeros(len(F))
    with _open_out(out_path) as fh:
        for r, res in enumerate(results):
            line = {"replica": r, "sites": {site_label(i): _jsonable(res.spins[i]) for i in F},
                    "n_stop": res.n_stop}
            if s.t is not None:
                line["t_stop"] = res.t_stop
                line["residual"] = res.residual_size
            if s.step_cap is not None:
                line["restarts"] = res.restarts
                line["truncated"] = res.truncated
                line["bias_bound"] = res.bias_bound
            fh.write(json.dumps(line, separators=(",", ":")) + "\n")
            nstops[res.n_stop] += 1
            truncated += res.truncated
            vals = [res.spins[i] for i in F]
            if all(isinstance(v, (int, float)) for v in vals):
                sums += np.asarray(vals, dtype=float)
    summary = {"replicas": s.replicas, "gamma": g, "mean": {site_label(i): sums[n] / s.replicas
                                                            for n, i in enumerate(F)},
               "n_stop_histogram": dict(sorted(nstops.items())), "truncated": truncated}
    if s.step_cap is not None:
        summary["steps_bias_bound"] = bounds_report(decomp).steps_bias(s.step_cap) if g < 1 else None
    print(json.dumps({"summary": summary}, separators=(",", ":")), file=sys.stderr)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg, decomp = _setup(args)
    g = _gamma(decomp)
    rep = bounds_report(decomp)
    d = cfg.d
    K = args.L
    if K is None:
        K = decomp.effective_range(0)
        if K is None:
            K = 32
    N = args.N if args.N is not None else 20
    t = args.t if args.t is not None else 1.0
    nF = len(cfg.sampler.sites)
    lines = [
        f"model            {cfg.model.get('model')} d={d}",
        f"gamma            {g:.12g}" + ("" if g < 1 else "  (supercritical: no guarantee)"),
        f"M_underbar       {rep.M_underbar:.12g}",
        f"beta_c           {rep.beta_c if rep.beta_c is not None else 'n/a'}",
        f"nstop_tail(N={N})  {rep.nstop_tail(N, nF):.6g}",
        f"convergence(t={t}) {rep.convergence(t, nF):.6g}",
        f"steps_bias(N={N})  {rep.steps_bias(N):.6g}",
        f"range_bias(L={K})  {rep.range_bias(K):.6g}",
    ]
    buf = io.StringIO()
    for o in decomp.model.orbits:
        rows = decomp.ladder_rows(o, K)
        w = csv.writer(buf, lineterminator="\n")
        if o == decomp.model.orbits[0]:
            w.writerow(["orbit", "k", "alpha", "lambda", "partial_sum", "|V(k)|", "gamma_contribution"])
        for row in rows:
            w.writerow([o, row["k"], repr(row["alpha"]), repr(row["lambda"]), repr(row["partial_sum"]), row["V"],
                        repr(row["gamma_contribution"])])
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        print("\n".join(lines))
    else:
        print("\n".join(lines))
        print()
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_dbar(args) -> int:
    from .coupling import CoupledIsingModel, estimate_dbar

    cfg, decomp = _setup(args)
    if not isinstance(decomp.model, CoupledIsingModel):
        raise ConfigError("dbar needs a model block with \"model\": \"ising-pair\"")
    seed = _require_seed(cfg)
    g = _gamma(decomp)
    if g >= 1.0:
        raise CliError(EXIT_SUPERCRITICAL, f"supercritical pair model: gamma = {g:.6g} >= 1")
    sites = cfg.sampler.sites
    if args.sites:
        sites = parse_sites(json.loads(args.sites), cfg.d)
    n = args.n or cfg.sampler.replicas
    est = estimate_dbar(sites, decomp, n, seed, backend=cfg.sampler.backend)
    if est.order_violations:
        raise CliError(EXIT_CONSISTENCY, f"{est.order_violations} order violations")
    with _open_out(args.out or cfg.output.get("path")) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site", "estimate", "ci_low", "ci_high", "half_gap"])
        for row in est.rows():
            w.writerow([site_label(row["site"]), repr(row["estimate"]), repr(row["ci_low"]), repr(row["ci_high"]),
                        repr(row["half_gap"])])
        w.writerow(["sup", repr(est.sup), repr(est.sup_ci[0]), repr(est.sup_ci[1]), ""])
    return EXIT_OK


def cmd_validate(args) -> int:
    from . import validate

    cfg, decomp = _setup(args)
    seed = cfg.sampler.seed if cfg.sampler.seed is not None else 0
    suites = {"ladder": validate.suite_ladder, "law": validate.suite_law, "bounds": validate.suite_bounds}
    checks = suites[args.suite](cfg, decomp, seed)
    ok = True
    with _open_out(args.out) as fh:
        for c in checks:
            ok &= c.passed
            fh.write(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}\n")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pssim", description="Perfect sampling for lattice spin dynamics.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", required=True, help="JSON run configuration")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="overrides sampler.seed")
        sp.add_argument("--out", default=None, help="output path (default: stdout)")

    sp = sub.add_parser("sample", help="perfect or finite-horizon samples as JSONL")
    common(sp)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("diagnose", help="ladder CSV and closed-form bounds")
    common(sp, seed=False)
    sp.add_argument("--L", type=int, default=None, help="range for the ladder table and range bias")
    sp.add_argument("--N", type=int, default=None, help="step count for tail and step bias")
    sp.add_argument("--t", type=float, default=None, help="horizon for the convergence bound")
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("dbar", help="d-bar distance of an ordered Ising pair")
    common(sp)
    sp.add_argument("--sites", default=None, help="JSON list of sites, overrides the config")
    sp.add_argument("--n", type=int, default=None, help="replicas, overrides the config")
    sp.set_defaults(func=cmd_dbar)

    sp = sub.add_parser("validate", help="engine against oracle comparisons")
    common(sp)
    sp.add_argument("--suite", choices=("ladder", "law", "bounds"), default="ladder")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"pssim: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"pssim: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SupercriticalError as exc:
        print(f"pssim: {exc}", file=sys.stderr)
        return EXIT_SUPERCRITICAL
    except (ConsistencyError, DecompositionError) as exc:
        print(f"pssim: internal consistency failure: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except RangeCapExceeded as exc:
        print(f"pssim: range cap exceeded (space-time truncation): {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY


if __name__ == "__main__":
    sys.exit(main())

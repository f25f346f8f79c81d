"""
Command-line front end.

    impc simulate|certify|bench [--preset NAME | --config FILE] [--case SPEC]...
                                [--out DIR] [--coeff theorem|proof] [--h STEP] [--T HORIZON]

Case specs: ``mpc``, ``impc:<alpha>,<beta>``, ``impc_gamma:<alpha>,<beta>,<gamma>``,
``impc_proj:<alpha>,<beta>``. Exit codes: 0 success, 1 runtime failure,
2 usage or configuration error.
"""

import argparse
import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__
from .certify import CertificateInputs, build_Q_all, check_negative_definite, search_delta
from .errors import ConfigError, ImpcError
from .flow import FlowParams
from .presets import PRESETS, Experiment, get_preset, load_config
from .report import gnuplot_script, write_csv
from .sim import SimConfig, benchmark_latency, simulate, tracking_metrics

PAPER_LATENCY_MS = {"mpc (quadprog)": 9.80, "impc (10,10)": 0.331, "impc (10,1000)": 0.185}


@dataclass(frozen=True)
class Case:
    controller: str
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma: float = 0.0

    @property
    def label(self):
        if self.controller == "baseline_mpc":
            return "mpc"
        nums = [self.alpha, self.beta] + ([self.gamma] if self.controller == "impc_gamma" else [])
        prefix = {"impc": "impc", "impc_projected": "impc_proj", "impc_gamma": "impc_gamma"}
        return prefix[self.controller] + "_" + "_".join(format(v, "g") for v in nums)

    @property
    def params(self):
        if self.controller == "baseline_mpc":
            return None
        return FlowParams(self.alpha, self.beta, self.gamma)


def parse_case(spec):
    """Parse a case spec such as ``impc:10,1000``."""
    spec = spec.strip()
    if spec == "mpc":
        return Case("baseline_mpc")
    kind, _, rest = spec.partition(":")
    arity = {"impc": 2, "impc_proj": 2, "impc_gamma": 3}
    if kind not in arity or not rest:
        raise ConfigError(f"bad case spec {spec!r}")
    try:
        nums = [float(v) for v in rest.split(",")]
    except ValueError:
        raise ConfigError(f"bad numbers in case spec {spec!r}") from None
    if len(nums) != arity[kind]:
        raise ConfigError(f"case {kind!r} takes {arity[kind]} numbers, got {len(nums)}")
    if not nums[0] > 0:
        raise ConfigError("α must be positive")
    if nums[1] < 0:
        raise ConfigError("β must be nonnegative")
    if kind == "impc_gamma" and nums[2] < 0:
        raise ConfigError("γ must be nonnegative")
    controller = {"impc": "impc", "impc_proj": "impc_projected", "impc_gamma": "impc_gamma"}[kind]
    return Case(controller, *nums)


def _experiment(args):
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config, not both")
    doc = load_config(args.config) if args.config else get_preset(args.preset or "dc-motor")
    return Experiment(doc)


def _cases(args, ex):
    specs = args.case or ex.cases or ["mpc", "impc:10,10"]
    cases = [parse_case(s) for s in specs]
    if getattr(args, "controller", None):
        if args.controller not in ("impc", "impc_projected", "impc_gamma"):
            raise ConfigError(f"--controller must be an iMPC variant, got {args.controller!r}")
        cases = [c if c.controller == "baseline_mpc" else
                 Case(args.controller, c.alpha, c.beta, c.gamma) for c in cases]
    return cases


def _workers(n_jobs):
    cap = os.environ.get("IMPC_THREADS")
    try:
        cap = int(cap) if cap else (os.cpu_count() or 1)
    except ValueError:
        raise ConfigError("IMPC_THREADS must be an integer") from None
    return max(1, min(cap, n_jobs))


def _sim_config(args, ex, case):
    s = ex.sim
    return SimConfig(
        T=args.T if args.T is not None else float(s.get("T", 5.0)),
        h=args.h if args.h is not None else float(s.get("h", 1e-3)),
        controller=case.controller,
        x0=np.asarray(s.get("x0", np.zeros(ex.plant.n)), dtype=float),
        log_stride=args.log_stride if args.log_stride is not None else int(s.get("log_stride", 10)),
    )


def _cert_inputs(ex, case, coeff, delta=None, rho=None):
    return CertificateInputs(ex.qsr, ex.prob, case.alpha, case.beta,
                             delta=ex.delta if delta is None else delta,
                             rho=ex.rho if rho is None else rho, coefficient_mode=coeff)


def _run_case(doc, case, cfg, coeff):
    ex = Experiment(doc)
    inputs = None if case.params is None else _cert_inputs(ex, case, coeff)
    log = simulate(ex.plant, ex.prob, ex.shift, cfg, case.params, inputs)
    return log


def cmd_simulate(args):
    ex = _experiment(args)
    out = args.out
    if not os.path.isdir(out):
        raise ConfigError(f"output directory does not exist: {out}")
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory is not writable: {out}")
    cases = _cases(args, ex)
    jobs = [(ex.doc, c, _sim_config(args, ex, c), args.coeff) for c in cases]
    workers = _workers(len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(_run_case, *zip(*jobs)))
    else:
        logs = [_run_case(*j) for j in jobs]

    r = ex.shift.r
    summary = {
        "impc_version": __version__,
        "preset": ex.name,
        "note": ("x0, T, h, log_stride and zero initial controller state are implementation "
                 "defaults, not values taken from the source experiment"),
        "coefficient_mode": args.coeff,
        "cases": [],
    }
    files = []
    mpc_log = next((lg for c, lg in zip(cases, logs) if c.controller == "baseline_mpc"), None)
    for case, log in zip(cases, logs):
        path = os.path.join(out, f"{case.label}.csv")
        write_csv(log, path)
        files.append(os.path.basename(path))
        tm = tracking_metrics(log, r)
        entry = {
            "case": case.label, "csv": os.path.basename(path), "controller": case.controller,
            "substeps": log.substeps,
            "ise": tm.ise, "final_error": tm.final_error, "settling_time": tm.settling_time,
            "max_eq_feas": float(log.eq_feas.max()),
            "latency_per_step_mean_s": float(np.mean(log.latencies)) if len(log.latencies) else None,
        }
        if case.params is not None:
            inputs = _cert_inputs(ex, case, args.coeff)
            ok, top = check_negative_definite(build_Q_all(inputs))
            entry["certificate"] = {"delta": inputs.delta, "max_eig_Q_all": top,
                                    "verdict": "CERTIFIED" if ok else "NOT CERTIFIED"}
            if mpc_log is not None and len(mpc_log) == len(log):
                gap = np.linalg.norm(log.x - mpc_log.x, axis=1).max()
                entry["sup_gap_to_mpc_rel"] = float(gap / np.linalg.norm(r))
        summary["cases"].append(entry)

    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
        fh.write("\n")
    text = _summary_text(summary)
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(text)
    if args.plot:
        with open(os.path.join(out, "plot.gp"), "w") as fh:
            fh.write(gnuplot_script(files, ex.plant.n))
    print(text, end="")
    return 0


def _summary_text(summary):
    lines = [f"# impc {summary['impc_version']} simulate, preset {summary['preset']}",
             f"# {summary['note']}",
             f"{'case':<22}{'ISE':>12}{'final err':>12}{'settle [s]':>12}{'max feas':>12}  certificate"]
    for c in summary["cases"]:
        cert = c.get("certificate")
        verdict = f"{cert['verdict']} (max eig {cert['max_eig_Q_all']:.4g})" if cert else "-"
        lines.append(f"{c['case']:<22}{c['ise']:>12.5g}{c['final_error']:>12.3e}"
                     f"{c['settling_time']:>12.4g}{c['max_eq_feas']:>12.3e}  {verdict}")
    for c in summary["cases"]:
        if "sup_gap_to_mpc_rel" in c:
            lines.append(f"sup-norm state gap {c['case']} vs mpc: {100 * c['sup_gap_to_mpc_rel']:.3g}% of |r|")
    return "\n".join(lines) + "\n"


def cmd_certify(args):
    ex = _experiment(args)
    cases = [c for c in _cases(args, ex) if c.controller != "baseline_mpc"]
    if not cases:
        raise ConfigError("no iMPC cases to certify")
    delta = ex.delta if args.delta is None else args.delta
    if not delta > 0:
        raise ConfigError("δ must be positive")
    print(f"# certificate report, preset {ex.name}, rho={ex.rho:g}, delta={delta:g}, "
          f"verdict mode={args.coeff}")
    for case in cases:
        inputs = _cert_inputs(ex, case, args.coeff, delta=delta)
        tops = {mode: check_negative_definite(build_Q_all(inputs, mode))[1]
                for mode in ("theorem", "proof")}
        ok = tops[args.coeff] < 0
        found = search_delta(inputs, mode=args.coeff)
        print(f"case {case.label} (alpha={case.alpha:g}, beta={case.beta:g}) [{inputs.label}]")
        print(f"  max eig Q_all, theorem coefficient: {tops['theorem']:.6g}")
        print(f"  max eig Q_all, proof coefficient:   {tops['proof']:.6g}")
        if found.certified:
            print(f"  delta search ({args.coeff}): certified at delta={found.delta:.4g} "
                  f"(max eig {found.max_eigenvalue:.6g})")
        else:
            print(f"  delta search ({args.coeff}): no certifying delta on the grid "
                  f"(best delta={found.best_delta:.4g}, max eig {found.max_eigenvalue:.6g})")
        print(f"  verdict: {'CERTIFIED' if ok else 'NOT CERTIFIED'}")
    return 0


def cmd_bench(args):
    ex = _experiment(args)
    cases = [c for c in _cases(args, ex) if c.controller != "baseline_mpc"]
    case = cases[0] if cases else Case("impc", 10.0, 10.0)
    if args.repetitions < 1:
        raise ConfigError("--repetitions must be positive")
    x = -ex.shift.r if np.any(ex.shift.r) else np.ones(ex.plant.n)
    rep = benchmark_latency(ex.plant, ex.prob, case.params, repetitions=args.repetitions, x=x,
                            h=args.h if args.h is not None else 1e-3)
    print(f"# latency per control decision, preset {ex.name}, {args.repetitions} repetitions")
    print(f"# hardware: {platform.machine()} {platform.processor() or ''} "
          f"python {platform.python_version()}, numpy {np.__version__}; single worker")
    print(f"{'controller':<34}{'mean [ms]':>12}{'median [ms]':>13}{'p95 [ms]':>12}{'samples':>9}")
    rows = [("baseline_mpc (KKT solve, package LU)", rep.baseline),
            (f"{case.label} (rhs + RK4 step)", rep.impc),
            ("reference: KKT solve, LAPACK", rep.lapack_reference)]
    for name, st in rows:
        print(f"{name:<34}{1e3 * st.mean:>12.4g}{1e3 * st.median:>13.4g}{1e3 * st.p95:>12.4g}"
              f"{len(st):>9d}")
    print(f"ratio baseline/iMPC (mean): {rep.ratio:.3g}")
    print(f"ratio LAPACK reference/iMPC (mean): {rep.lapack_ratio:.3g}")
    print("paper-reported, not reproduced: " +
          ", ".join(f"{k} {v} ms" for k, v in PAPER_LATENCY_MS.items()))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="impc", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"impc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        src = p.add_mutually_exclusive_group()
        src.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment")
        src.add_argument("--config", metavar="FILE", help="JSON experiment document")
        p.add_argument("--case", action="append", metavar="SPEC",
                       help="mpc | impc:A,B | impc_gamma:A,B,G | impc_proj:A,B (repeatable)")
        p.add_argument("--out", default=".", metavar="DIR", help="output directory (must exist)")
        p.add_argument("--coeff", choices=("theorem", "proof"), default="theorem",
                       help="state coefficient used in Q_all")
        p.add_argument("--h", type=float, default=None, help="integrator step [s]")
        p.add_argument("--T", type=float, default=None, help="simulated horizon [s]")

    p = sub.add_parser("simulate", help="run closed-loop cases and write CSV logs")
    common(p)
    p.add_argument("--controller", default=None,
                   help="override the iMPC variant for all impc cases (e.g. impc_projected)")
    p.add_argument("--log-stride", type=int, default=None, dest="log_stride")
    p.add_argument("--plot", action="store_true", help="also write a gnuplot script")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("certify", help="report the stability certificate per case")
    common(p)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("bench", help="measure per-decision latency")
    common(p)
    p.add_argument("--repetitions", type=int, default=1000)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"impc: error: {exc}", file=sys.stderr)
        return 2
    except ImpcError as exc:
        print(f"impc: runtime failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"impc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands:
  simulate  run one experiment config (exit 0 ok, 2 audit failure, 1 error)
  check     model diagnostics only: conservativity, gradient, Lyapunov
  sweep     repeat an experiment over a list of parameter values
  catalog   list built-in scenarios (or dump one as JSON)
"""

from __future__ import annotations

import argparse
import json
import sys

from . import diagnostics, harness
from .controller import ControllerKind
from .dynamics import NetworkSystem
from .errors import SgalignError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgalign",
        description="Speed-gradient alignment of conserved outputs: "
                    "simulation and verification toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one experiment config")
    p_sim.add_argument("--config", required=True, help="path to a JSON config")
    p_sim.add_argument("--csv", help="write the trajectory CSV here")
    p_sim.add_argument("--report", help="write the JSON report here")

    p_chk = sub.add_parser("check", help="run model diagnostics for a config")
    p_chk.add_argument("--config", required=True, help="path to a JSON config")
    p_chk.add_argument("--samples", type=int, default=1000,
                       help="sample count per check (default 1000)")

    p_swp = sub.add_parser("sweep", help="sweep one numeric config parameter")
    p_swp.add_argument("--config", required=True, help="path to a JSON config")
    p_swp.add_argument("--param", required=True,
                       help="dotted path, e.g. controller.gamma")
    p_swp.add_argument("--values", required=True,
                       help="comma-separated list of values")
    p_swp.add_argument("--out", help="write the combined CSV here")

    p_cat = sub.add_parser("catalog", help="list built-in scenarios")
    p_cat.add_argument("--show", metavar="NAME",
                       help="print the named scenario as JSON")
    return parser


def _cmd_simulate(args) -> int:
    cfg = harness.load_config(args.config)
    if args.csv or args.report:
        from dataclasses import replace

        cfg = replace(cfg, outputs=harness.OutputConfig(
            csv_path=args.csv or cfg.outputs.csv_path,
            report_path=args.report or cfg.outputs.report_path,
        ))
    _, metrics, audits = harness.run_experiment(cfg)
    print(f"run '{cfg.name}': Q {metrics.q_initial:.6g} -> {metrics.q_final:.6g}, "
          f"spread {metrics.final_output_spread:.3g}, "
          f"branch {metrics.theorem1_branch}")
    ok = True
    for name, rep in audits.items():
        status = "PASS" if rep.passed else "FAIL"
        extra = f" ({rep.detail})" if rep.detail else ""
        print(f"  audit {name}: {status}{extra} worst={rep.worst:.3g}")
        ok = ok and rep.passed
    return 0 if ok else 2


def _cmd_check(args) -> int:
    cfg = harness.load_config(args.config)
    models, _ = harness.build_models(cfg)
    box = diagnostics.BoxSampler(low=(-3.0,), high=(3.0,), count=args.samples,
                                 seed=cfg.seed)
    ok = True
    for model in models:
        for rep in (
            diagnostics.check_conservative(model, box),
            diagnostics.check_gradient(model, box),
        ):
            status = "PASS" if rep.passed else "FAIL"
            print(f"  {rep.name}: {status} worst={rep.worst:.3g}")
            ok = ok and rep.passed
    if len(models) >= 2:
        net = NetworkSystem(tuple(models))
        rep = diagnostics.check_lyapunov_decrease(
            net, diagnostics.goal_candidate(net),
            diagnostics.BoxSampler(low=(-3.0,), high=(3.0,),
                                   count=min(args.samples, 200), seed=cfg.seed),
        )
        status = "PASS" if rep.passed else "FAIL"
        print(f"  {rep.name}: {status} worst={rep.worst:.3g}")
        ok = ok and rep.passed
    return 0 if ok else 2


def _cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config)
    values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    rows = harness.run_sweep(cfg, args.param, values, out_path=args.out)
    print(f"{args.param}: {len(rows)} runs")
    for value, metrics in rows:
        print(f"  {value:g}: Q_final={metrics.q_final:.6g} "
              f"spread={metrics.final_output_spread:.3g} "
              f"branch={metrics.theorem1_branch}")
    return 0


def _cmd_catalog(args) -> int:
    if args.show:
        cfg = harness.catalog_config(args.show)
        print(json.dumps(harness.serialize_config(cfg), indent=2))
        return 0
    for name in harness.catalog_names():
        cfg = harness.catalog_config(name)
        kind = cfg.controller.kind
        print(f"{name}: {len(cfg.subsystems)} subsystem(s), {kind}, "
              f"T={cfg.integrator.horizon:g}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "check": _cmd_check,
        "sweep": _cmd_sweep,
        "catalog": _cmd_catalog,
    }
    try:
        return handlers[args.command](args)
    except SgalignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

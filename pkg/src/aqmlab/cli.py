"""Command-line front end: reproducible experiments emitting CSV data files.

Subcommands: equilibrium, stability-chart, hopf-classify, fluid-sim,
bifurcation-diagram, packet-sim, compare-policies. Exit codes: 0 success,
1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .errors import (
    BracketError,
    ConfigError,
    ConvergenceError,
    DomainError,
    IntegrationError,
)
from .fluid import (
    FluidSystemKind,
    default_history,
    equilibrium_no_averaging,
    equilibrium_threshold,
    equilibrium_with_averaging,
    integrate_dde,
    oscillation_metrics,
    threshold_bifurcation_sweep,
)
from .normalform import classification_report, classify_at_hopf
from .packetsim import (
    DropTail,
    PacketRed,
    PacketThreshold,
    compute_afct,
    desk_config,
    paper_config,
    parse_scenario,
    run_simulation,
    write_metrics_csv,
)
from .params import NetworkParams, ProtocolSpec, RedParams, ThresholdParams
from .stability import chart_to_csv, trace_stability_chart

_KINDS = {
    "with-averaging": FluidSystemKind.WITH_AVERAGING,
    "no-averaging": FluidSystemKind.NO_AVERAGING,
    "threshold": FluidSystemKind.THRESHOLD,
}

PAPER_DEFAULTS = {
    "alpha": 0.125,
    "k": 0.75,
    "beta": 0.5,
    "gamma": 1e-4,
    "b_min": 50.0,
    "b_max": 550.0,
    "p_max": 0.1,
    "c": 100.0,
}


def _parse_sweep(text: str):
    """name=start:stop:count -> (name, [values])."""
    try:
        name, rng = text.split("=", 1)
        start_s, stop_s, count_s = rng.split(":")
        start, stop, count = float(start_s), float(stop_s), int(count_s)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"sweep must look like name=start:stop:count, got {text!r}"
        ) from None
    if count < 1:
        raise argparse.ArgumentTypeError("sweep count must be >= 1")
    if count == 1:
        return name.strip(), [start]
    step = (stop - start) / (count - 1)
    return name.strip(), [start + i * step for i in range(count)]


def _protocol(args) -> ProtocolSpec:
    return ProtocolSpec.compound_tcp(alpha=args.alpha, k=args.k, beta=args.beta)


def _red(args) -> RedParams:
    return RedParams(
        gamma=args.gamma, b_min=args.b_min, b_max=args.b_max, p_max=args.p_max
    )


def _write_params_sidecar(args, path_hint: str | None):
    if getattr(args, "profile", "desk") != "paper":
        return
    out = path_hint or "params.txt"
    base = os.path.dirname(out) or "."
    side = os.path.join(base, "params.txt")
    with open(side, "w") as fh:
        for key, val in PAPER_DEFAULTS.items():
            fh.write(f"{key} = {val:g}\n")
        for key in ("tau", "qth", "seed"):
            if getattr(args, key, None) is not None:
                fh.write(f"{key} = {getattr(args, key)}\n")


def _add_common(p, tau_default=None):
    p.add_argument("--c", type=float, default=100.0, help="per-flow capacity, pkts/s")
    p.add_argument("--tau", type=float, default=tau_default, help="round-trip time, s")
    p.add_argument("--alpha", type=float, default=0.125)
    p.add_argument("--k", type=float, default=0.75)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=1e-4)
    p.add_argument("--b-min", type=float, default=50.0)
    p.add_argument("--b-max", type=float, default=550.0)
    p.add_argument("--p-max", type=float, default=0.1)
    p.add_argument("--qth", type=float, default=15.0)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")


def _cmd_equilibrium(args) -> int:
    kind = _KINDS[args.system]
    spec = _protocol(args)
    net = NetworkParams(c_per_flow=args.c, rtt=args.tau, kappa=args.kappa)
    if kind is FluidSystemKind.THRESHOLD:
        eq = equilibrium_threshold(spec, net, ThresholdParams(args.qth))
    elif kind is FluidSystemKind.NO_AVERAGING:
        eq = equilibrium_no_averaging(spec, _red(args), net)
    else:
        eq = equilibrium_with_averaging(spec, _red(args), net)
    print(f"w_star = {eq.w_star:.12g}")
    if eq.q_star is not None:
        print(f"q_star = {eq.q_star:.12g}")
    print(f"p_star = {eq.p_star:.12g}")
    print(f"residual = {eq.residual:.3e}")
    print(f"in_band = {eq.in_band}")
    if eq.wk1_closed_form is not None:
        print(f"wk1_closed_form = {eq.wk1_closed_form:.12g}")
    _write_params_sidecar(args, args.out)
    return 0


_SWEEP_ALIASES = {"qth": "q_th", "bmin": "b_min", "bmax": "b_max", "pmax": "p_max"}


def _cmd_stability_chart(args) -> int:
    kind = _KINDS[args.system]
    name, values = args.sweep
    name = _SWEEP_ALIASES.get(name, name)
    spec = _protocol(args)
    net = NetworkParams(c_per_flow=args.c, rtt=args.tau or 0.1, kappa=args.kappa)
    red = _red(args) if kind is not FluidSystemKind.THRESHOLD else None
    th = ThresholdParams(args.qth) if kind is FluidSystemKind.THRESHOLD else None
    points = trace_stability_chart(
        kind, name, values, args.solve, spec, net, red=red, th=th,
        workers=args.workers,
    )
    failures = [p for p in points if p.error is not None]
    out = args.out or "chart.csv"
    chart_to_csv(points, out)
    print(f"wrote {len(points) - len(failures)} boundary points to {out}")
    for p in failures:
        print(f"failed at {p.x_param}={p.x_value:g}: {p.error}", file=sys.stderr)
    _write_params_sidecar(args, out)
    if len(failures) == len(points):
        return 1
    return 0


def _cmd_hopf_classify(args) -> int:
    spec = _protocol(args)
    red = _red(args)
    net = NetworkParams(c_per_flow=args.c, rtt=args.tau or 0.1, kappa=args.kappa)
    result, _, _ = classify_at_hopf(
        spec, red, net, tau_c=args.at_tau, tau_bracket=(args.tau_min, args.tau_max)
    )
    report = classification_report(result)
    print(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report + "\n")
    _write_params_sidecar(args, args.out)
    return 0


def _cmd_fluid_sim(args) -> int:
    kind = _KINDS[args.system]
    spec = _protocol(args)
    net = NetworkParams(c_per_flow=args.c, rtt=args.tau, kappa=args.kappa)
    red = _red(args) if kind is not FluidSystemKind.THRESHOLD else None
    th = ThresholdParams(args.qth) if kind is FluidSystemKind.THRESHOLD else None
    if kind is FluidSystemKind.THRESHOLD:
        eq = equilibrium_threshold(spec, net, th)
    elif kind is FluidSystemKind.NO_AVERAGING:
        eq = equilibrium_no_averaging(spec, red, net)
    else:
        eq = equilibrium_with_averaging(spec, red, net)
    traj = integrate_dde(
        kind, spec, net, red=red, th=th,
        initial_history=default_history(eq, args.perturb),
        horizon=args.horizon * net.rtt,
        steps_per_delay=args.steps_per_delay,
    )
    out = args.out or "trajectory.csv"
    traj.to_csv(out)
    metrics = oscillation_metrics(traj, args.transient * net.rtt)
    print(f"wrote {len(traj.times)} samples to {out}")
    print(
        f"post-transient: min={metrics.minimum:.6g} max={metrics.maximum:.6g} "
        f"amplitude={metrics.amplitude:.6g} period={metrics.period}"
    )
    _write_params_sidecar(args, out)
    return 0


def _cmd_bifurcation(args) -> int:
    if args.system != "threshold":
        print("bifurcation-diagram supports the threshold system", file=sys.stderr)
        return 2
    name, values = args.sweep
    if name != "qth":
        print("bifurcation-diagram sweeps qth", file=sys.stderr)
        return 2
    spec = _protocol(args)
    net = NetworkParams(c_per_flow=args.c, rtt=args.tau or 1.0, kappa=args.kappa)
    rows = threshold_bifurcation_sweep(
        spec, net, values,
        horizon_delays=args.horizon, transient_delays=args.transient,
        steps_per_delay=args.steps_per_delay,
    )
    out = args.out or "bifurcation.csv"
    with open(out, "w") as fh:
        fh.write("qth,w_star,minimum,maximum,amplitude,period\n")
        for q_th, eq, m in rows:
            period = f"{m.period:.12g}" if m.period is not None else ""
            fh.write(
                f"{q_th:.12g},{eq.w_star:.12g},{m.minimum:.12g},"
                f"{m.maximum:.12g},{m.amplitude:.12g},{period}\n"
            )
    print(f"wrote {len(rows)} sweep points to {out}")
    _write_params_sidecar(args, out)
    return 0


def _packet_policy(args):
    if args.policy == "red":
        return PacketRed(
            b_min=args.red_bmin, b_max=args.red_bmax, p_max=args.red_pmax,
            w_q=args.red_wq,
        )
    if args.policy == "threshold":
        return PacketThreshold(q_th=int(args.qth))
    return DropTail()


def _cmd_packet_sim(args) -> int:
    if args.scenario:
        with open(args.scenario) as fh:
            cfg = parse_scenario(fh.read())
        cfg = replace(cfg, seed=args.seed if args.seed is not None else cfg.seed)
    else:
        builder = paper_config if args.profile == "paper" else desk_config
        cfg = builder(_packet_policy(args), args.rtt_ms / 1e3, args.seed or 1)
    metrics = run_simulation(cfg)
    outdir = args.out or "packet-sim-out"
    write_metrics_csv(metrics, outdir)
    print(f"wrote queue.csv, flows.csv, util.csv, summary.csv to {outdir}/")
    print(
        f"loss = {metrics.loss_pct:.3f}%  throughput = "
        f"{metrics.throughput_bps / 1e6:.3f} Mbps  "
        f"mean queueing delay = {metrics.mean_queueing_delay * 1e3:.3f} ms"
    )
    _write_params_sidecar(args, os.path.join(outdir, "x"))
    return 0


def _cmd_compare(args) -> int:
    red = PacketRed(
        b_min=args.red_bmin, b_max=args.red_bmax, p_max=args.red_pmax,
        w_q=args.red_wq,
    )
    th = PacketThreshold(q_th=int(args.qth))
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = []
    for seed in seeds:
        for name, pol in (("red", red), ("threshold", th)):
            cfg = desk_config(
                pol, args.rtt_ms / 1e3, seed=seed,
                bytes_to_send=args.mb_per_flow * 1_000_000 if args.mb_per_flow else None,
                duration=args.duration, overload=args.overload,
            )
            m = run_simulation(cfg)
            afct = compute_afct(m) if args.mb_per_flow else None
            rows.append(
                (
                    seed, name, m.loss_pct, m.throughput_bps / 1e6,
                    m.mean_queueing_delay * 1e3,
                    max(max(q) for q in m.queue_len), afct,
                )
            )
    out = args.out or "compare.csv"
    with open(out, "w") as fh:
        fh.write("seed,policy,loss_pct,throughput_mbps,mean_qd_ms,max_queue,afct_s\n")
        for r in rows:
            afct = f"{r[6]:.12g}" if r[6] is not None else ""
            fh.write(
                f"{r[0]},{r[1]},{r[2]:.12g},{r[3]:.12g},{r[4]:.12g},{r[5]},{afct}\n"
            )
    print(f"wrote {len(rows)} rows to {out}")
    for r in rows:
        afct = f" afct={r[6]:.1f}s" if r[6] is not None else ""
        print(
            f"seed {r[0]} {r[1]:>9}: loss={r[2]:.2f}% thr={r[3]:.2f}Mbps "
            f"qd={r[4]:.2f}ms maxq={r[5]}{afct}"
        )
    _write_params_sidecar(args, out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="aqmlab",
        description="Fluid-model stability analysis and packet-level "
        "simulation of TCP under RED and threshold queue policies",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", help="print a fluid equilibrium")
    p.add_argument("--system", choices=sorted(_KINDS), required=True)
    _add_common(p, tau_default=0.1)
    p.set_defaults(func=_cmd_equilibrium)

    p = sub.add_parser("stability-chart", help="trace a Hopf boundary curve")
    p.add_argument("--system", choices=sorted(_KINDS), required=True)
    p.add_argument("--sweep", type=_parse_sweep, required=True,
                   metavar="name=start:stop:count")
    p.add_argument("--solve", required=True,
                   choices=("tau", "c", "gamma", "b_min", "q_th", "alpha", "kappa"))
    p.add_argument("--workers", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_stability_chart)

    p = sub.add_parser("hopf-classify", help="normal-form classification at the "
                       "instantaneous-feedback Hopf point")
    p.add_argument("--at-tau", type=float, default=None,
                   help="classify at this delay instead of solving for it")
    p.add_argument("--tau-min", type=float, default=1e-3)
    p.add_argument("--tau-max", type=float, default=5.0)
    _add_common(p)
    p.set_defaults(func=_cmd_hopf_classify)

    p = sub.add_parser("fluid-sim", help="integrate one fluid system")
    p.add_argument("--system", choices=sorted(_KINDS), required=True)
    p.add_argument("--horizon", type=float, default=300.0, help="in delays")
    p.add_argument("--transient", type=float, default=200.0, help="in delays")
    p.add_argument("--perturb", type=float, default=1.1)
    p.add_argument("--steps-per-delay", type=int, default=500)
    _add_common(p, tau_default=0.1)
    p.set_defaults(func=_cmd_fluid_sim)

    p = sub.add_parser("bifurcation-diagram", help="oscillation amplitude sweep")
    p.add_argument("--system", choices=("threshold",), default="threshold")
    p.add_argument("--sweep", type=_parse_sweep, required=True,
                   metavar="qth=start:stop:count")
    p.add_argument("--horizon", type=float, default=300.0, help="in delays")
    p.add_argument("--transient", type=float, default=200.0, help="in delays")
    p.add_argument("--steps-per-delay", type=int, default=200)
    _add_common(p, tau_default=1.0)
    p.set_defaults(func=_cmd_bifurcation)

    p = sub.add_parser("packet-sim", help="run the packet-level simulator")
    p.add_argument("--scenario", type=str, default=None,
                   help="flat key = value scenario file")
    p.add_argument("--policy", choices=("red", "threshold", "droptail"),
                   default="red")
    p.add_argument("--rtt-ms", type=float, default=10.0)
    p.add_argument("--red-bmin", type=float, default=50.0)
    p.add_argument("--red-bmax", type=float, default=100.0)
    p.add_argument("--red-pmax", type=float, default=0.1)
    p.add_argument("--red-wq", type=float, default=0.002)
    p.add_argument("--qth", type=float, default=15.0)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.set_defaults(func=_cmd_packet_sim)

    p = sub.add_parser("compare-policies", help="RED vs threshold at matched "
                       "desk-scale configurations")
    p.add_argument("--rtt-ms", type=float, default=150.0)
    p.add_argument("--red-bmin", type=float, default=8.0)
    p.add_argument("--red-bmax", type=float, default=15.0)
    p.add_argument("--red-pmax", type=float, default=0.1)
    p.add_argument("--red-wq", type=float, default=1.2e-4)
    p.add_argument("--qth", type=float, default=15.0)
    p.add_argument("--seeds", type=str, default="1,2,3")
    p.add_argument("--mb-per-flow", type=int, default=None)
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--overload", type=float, default=1.4)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.set_defaults(func=_cmd_compare)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (BracketError, ConvergenceError, IntegrationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        # invalid scenario/configuration content is a usage error
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

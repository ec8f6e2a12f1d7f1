"""Scenario-driven command line: simulate, analyze, observe, synthesize,
control.

Each command loads a scenario file, runs the corresponding pipeline, and
writes deterministic CSV time series plus a plain-text report into the
output directory.  All floats are printed with 17 significant digits so
files are byte-reproducible and round-trip exactly through the reader in
this module; row order is fixed (time-major, node-minor).

Output files by command:
    simulate    trajectory_<k>.csv (t,node,s,x,r), report.txt
    analyze     rho_tilde_<k>.csv (t,rho), report.txt
    observe     observer_error.csv (t,virus,node,e; plus per-step
                aggregate rows), lstar_<k>.csv (t,lstar),
                gains_<k>.csv (node,L), eta_sweep.csv (with --eta-sweep),
                report.txt
    synthesize  gains_<k>.csv for feasible viruses, report.txt
    control     trajectory_<k>.csv under feedback control, report.txt
    run         every configured pipeline, each in its own subdirectory

Exit codes: 0 success, 1 scenario/validation failure, 2 runtime or
numerical failure.  The environment variable SIRNET_OUT overrides the
output directory.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, control, estimator, model, observability, synthesis
from .config import (ConfigError, ScenarioConfig, dump_scenario, load_scenario)

ENV_OUT_DIR = "SIRNET_OUT"


def fmt(x) -> str:
    """Canonical float formatting: 17 significant digits, round-trip exact."""
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Companion reader; returns (header, raw string rows)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _write_report(out_dir: Path, lines: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _trajectory_rows(traj: model.Trajectory, k: int):
    labels = traj.model.node_labels
    for t, st in enumerate(traj.states):
        for i, label in enumerate(labels):
            yield [str(t), label, fmt(st.s[i]), fmt(st.x[k, i]), fmt(st.r[i])]


def _write_trajectories(out_dir: Path, traj: model.Trajectory) -> None:
    for k in range(traj.model.m):
        write_csv(out_dir / f"trajectory_{k + 1}.csv",
                  ["t", "node", "s", "x", "r"], _trajectory_rows(traj, k))


def _resolve_gains(cfg: ScenarioConfig):
    """Explicit per-virus gains, or gains synthesized per the directive."""
    obs_cfg = cfg.observer
    if obs_cfg is None:
        raise ConfigError(f"{cfg.source}: scenario has no observer block")
    if obs_cfg.gains is not None:
        return obs_cfg.gains, "explicit gains from the scenario file"
    if obs_cfg.synthesize is None:
        raise ConfigError(
            f"{cfg.source}: observer block needs either gains or a "
            f"synthesize directive")
    certs = _synthesize_certs(cfg)
    rows = []
    for k, (_, diag_cert) in enumerate(certs):
        if diag_cert is None or not diag_cert.feasible:
            reason = diag_cert.reason if diag_cert is not None else "infeasible"
            raise RuntimeError(
                f"gain synthesis infeasible for virus {k + 1}: {reason}")
        rows.append(np.diag(diag_cert.L))
    return estimator.ObserverGain(np.array(rows)), "gains synthesized from the LMI"


def _synthesize_certs(cfg: ScenarioConfig, tau_override=None, l_override=None):
    """Per virus: the unstructured certificate, then the per-node (diagonal)
    restriction of its gain re-certified over Q alone.

    Returns a list of (certificate, diagonal_certificate_or_None) pairs;
    the diagonal stage only runs when the unstructured problem is
    feasible, since the observer applies one scalar gain per node.
    """
    obs_cfg = cfg.observer
    if obs_cfg is None or obs_cfg.synthesize is None:
        if tau_override is None or l_override is None:
            raise ConfigError(
                f"{cfg.source}: no synthesize directive; pass --tau and "
                f"--lipschitz-l or add observer.synthesize to the scenario")
    synth = obs_cfg.synthesize if obs_cfg is not None else None
    l_value = l_override if l_override is not None else synth.l
    certs = []
    for k in range(cfg.model.m):
        M = analysis.build_M(cfg.model, k)
        C = np.diag(cfg.model.c[k])
        if tau_override is not None:
            tau_k = tau_override
        elif synth is not None and synth.tau != "grid":
            tau_k = synth.tau[k]
        else:
            tau_k = None
        if tau_k is None:
            cert = synthesis.solve_feasibility_tau_grid(M, C, l=l_value)
        else:
            cert = synthesis.solve_feasibility(
                synthesis.LmiProblem(M=M, C=C, tau=float(tau_k), l=l_value))
        diag_cert = None
        if cert.feasible:
            problem = synthesis.LmiProblem(M=M, C=C, tau=cert.tau, l=l_value)
            diag_cert = synthesis.solve_feasibility_fixed_gain(
                problem, np.diag(np.diag(cert.L)))
        certs.append((cert, diag_cert))
    return certs


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: ScenarioConfig, out_dir: Path, horizon=None) -> None:
    T = horizon if horizon is not None else cfg.run.horizon
    traj = model.simulate(cfg.model, cfg.initial, T)
    _write_trajectories(out_dir, traj)
    report = [f"scenario: {cfg.source}", f"command: simulate", f"horizon: {T}"]
    report.append("assumption checks:")
    for check in model.validate(cfg.model, cfg.initial).checks:
        report.append(f"  {check}")
    for k in range(cfg.model.m):
        tot = traj.total_infection(k)
        report.append(
            f"virus {k + 1} ({cfg.virus_names[k]}): peak total infection "
            f"{fmt(tot.max())} at t={int(tot.argmax())}, final {fmt(tot[-1])}")
    worst = max(st.simplex_residual() for st in traj.states)
    report.append(f"worst per-node simplex residual: {fmt(worst)}")
    _write_report(out_dir, report)


def cmd_analyze(cfg: ScenarioConfig, out_dir: Path, horizon=None) -> None:
    T = horizon if horizon is not None else cfg.run.horizon
    traj = model.simulate(cfg.model, cfg.initial, T)
    report = [f"scenario: {cfg.source}", "command: analyze", f"horizon: {T}"]
    for k in range(cfg.model.m):
        cert = analysis.eradication_certificate(cfg.model, k)
        trace = analysis.effective_R_trace(cfg.model, traj, k)
        write_csv(out_dir / f"rho_tilde_{k + 1}.csv", ["t", "rho"],
                  ([str(t), fmt(r)] for t, r in enumerate(trace.rho)))
        name = cfg.virus_names[k]
        report.append(f"virus {k + 1} ({name}):")
        report.append(f"  basic reproduction number rho(M) = {fmt(cert.rho_M)}")
        if cert.schur_stable:
            report.append(
                f"  Schur stable: yes; decay rate bound {fmt(cert.rate_bound)} "
                f"(sigma1={fmt(cert.sigma1)}, sigma2={fmt(cert.sigma2)}, "
                f"sigma3={fmt(cert.sigma3)})")
        else:
            report.append("  Schur stable: no (virus takes off before dying out)")
        peak = int(traj.total_infection(k).argmax())
        cross = trace.threshold_time
        report.append(
            f"  effective reproduction number crosses 1 at t="
            f"{cross if cross is not None else 'never'}; "
            f"total infection peaks at t={peak}")
        report.append(f"  min per-step contraction margin {fmt(trace.min_epsilon)}")
    ob = observability.observability_at_zero(cfg.model)
    report.append(
        f"observability at the all-recovered state: rank "
        f"{ob.numerical_rank} of {ob.matrix_dim[0]} "
        f"({'full' if ob.full_rank else 'deficient'})")
    if ob.offending_nodes:
        report.append(
            f"  equal healing rates at nodes: {list(ob.offending_nodes)}")
    if ob.near_degenerate_nodes:
        report.append(
            f"  near-degenerate healing rates at nodes: "
            f"{list(ob.near_degenerate_nodes)}")
    _write_report(out_dir, report)


def cmd_observe(cfg: ScenarioConfig, out_dir: Path, horizon=None,
                eta_sweep=None) -> None:
    T = horizon if horizon is not None else cfg.run.horizon
    gains, gain_source = _resolve_gains(cfg)
    traj = model.simulate(cfg.model, cfg.initial, T)
    obs0 = estimator.initial_observer_state(cfg.model, cfg.observer.x_hat0,
                                            cfg.observer.r_hat0)
    _, trace = estimator.run_observer(cfg.model, gains, traj, obs0)

    rows = []
    for t in range(len(trace.e)):
        for k in range(cfg.model.m):
            for i, label in enumerate(cfg.model.node_labels):
                rows.append([str(t), str(k + 1), label, fmt(trace.e[t, k, i])])
        rows.append([str(t), "aggregate", "all", fmt(trace.aggregated[t])])
    write_csv(out_dir / "observer_error.csv", ["t", "virus", "node", "e"], rows)

    for k in range(cfg.model.m):
        write_csv(out_dir / f"lstar_{k + 1}.csv", ["t", "lstar"],
                  ([str(t), fmt(trace.lstar[t, k])
                    if trace.lstar_defined[t, k] else "undefined"]
                   for t in range(trace.lstar.shape[0])))
        write_csv(out_dir / f"gains_{k + 1}.csv", ["node", "L"],
                  ([label, fmt(gains.L[k, i])]
                   for i, label in enumerate(cfg.model.node_labels)))

    report = [f"scenario: {cfg.source}", "command: observe", f"horizon: {T}",
              f"gains: {gain_source}"]
    agg = trace.aggregated
    if trace.diverged is not None:
        finite = agg[np.isfinite(agg)]
        report.append(
            f"ESTIMATES DIVERGED at t={trace.diverged} (left [-10, 10] or "
            f"non-finite); the gains are too aggressive for this system")
        report.append(
            f"aggregated error before divergence: initial {fmt(agg[0])}, "
            f"max finite {fmt(finite.max())}")
    else:
        report.append(f"aggregated error: initial {fmt(agg[0])}, "
                      f"max {fmt(agg.max())}, final {fmt(agg[-1])}")
    defined = trace.lstar[trace.lstar_defined]
    if defined.size:
        report.append(f"residual-to-error ratio: max {fmt(defined.max())} "
                      f"over {defined.size} defined points")
    else:
        report.append("residual-to-error ratio: undefined everywhere")

    if eta_sweep is not None:
        # the sweep scales a unit per-node gain, so eta is the actual
        # innovation coefficient applied at every node
        unit = estimator.ObserverGain(np.ones((cfg.model.m, cfg.model.n)))
        points = estimator.gain_sweep(cfg.model, traj, unit, eta_sweep, obs0)
        write_csv(out_dir / "eta_sweep.csv", ["eta", "t_star", "diverged"],
                  ([fmt(p.eta),
                    "" if p.t_star is None else str(p.t_star),
                    "yes" if p.diverged else "no"] for p in points))
        report.append("gain sweep over unit gains (eta, t*, diverged):")
        for p in points:
            t_star = "none" if p.t_star is None else str(p.t_star)
            report.append(f"  eta={fmt(p.eta)}: t*={t_star}, "
                          f"diverged={'yes' if p.diverged else 'no'}")
    _write_report(out_dir, report)


def cmd_synthesize(cfg: ScenarioConfig, out_dir: Path, tau=None, l=None) -> None:
    certs = _synthesize_certs(cfg, tau_override=tau, l_override=l)
    report = [f"scenario: {cfg.source}", "command: synthesize"]
    for k, (cert, diag_cert) in enumerate(certs):
        name = cfg.virus_names[k]
        report.append(f"virus {k + 1} ({name}): tau={fmt(cert.tau)}")
        if not cert.feasible:
            report.append(f"  infeasible: {cert.reason}; best lambda_max = "
                          f"{fmt(cert.lambda_max_F)}")
            continue
        ver = synthesis.verify_certificate(
            synthesis.LmiProblem(M=analysis.build_M(cfg.model, k),
                                 C=np.diag(cfg.model.c[k]),
                                 tau=cert.tau, l=_resolved_l(cfg, l)),
            cert.Q, R=cert.R)
        report.append(
            f"  feasible in {cert.iterations} iteration(s); "
            f"lambda_max = {fmt(cert.lambda_max_F)}, "
            f"lambda_min(Q) = {fmt(cert.lambda_min_Q)}")
        report.append(
            f"  verification: assembled form "
            f"{'<0' if ver.assembled_negative_definite else 'not <0'}, "
            f"Schur form "
            f"{'<0' if ver.schur_negative_definite else 'not <0'}, "
            f"verdicts agree: {ver.verdicts_agree}")
        if diag_cert.feasible:
            write_csv(out_dir / f"gains_{k + 1}.csv", ["node", "L"],
                      ([label, fmt(np.diag(diag_cert.L)[i])]
                       for i, label in enumerate(cfg.model.node_labels)))
            report.append(
                f"  per-node restriction certified: lambda_max = "
                f"{fmt(diag_cert.lambda_max_F)} "
                f"in {diag_cert.iterations} iteration(s)")
        else:
            report.append(
                f"  per-node restriction NOT certified "
                f"(best lambda_max = {fmt(diag_cert.lambda_max_F)}); "
                f"no gains file written")
    _write_report(out_dir, report)


def _resolved_l(cfg: ScenarioConfig, l_override) -> float:
    if l_override is not None:
        return l_override
    return cfg.observer.synthesize.l


def cmd_control(cfg: ScenarioConfig, out_dir: Path, horizon=None) -> None:
    settings = cfg.control
    mode = settings.mode if settings is not None else control.MODE_TRUE_STATE
    T = horizon if horizon is not None else (
        settings.horizon if settings is not None else 200)
    obs0 = None
    gain = None
    if mode == control.MODE_ESTIMATED_STATE:
        gain, _ = _resolve_gains(cfg)
        obs0 = estimator.initial_observer_state(cfg.model, cfg.observer.x_hat0,
                                                cfg.observer.r_hat0)
    policy = control.ControlPolicy(mode=mode, gain=gain)
    traj, run_report = control.run_controlled(cfg.model, cfg.initial, policy,
                                              T, obs0=obs0)
    _write_trajectories(out_dir, traj)
    report = [f"scenario: {cfg.source}", "command: control",
              f"mode: {mode}", f"horizon: {T}"]
    for k in range(cfg.model.m):
        name = cfg.virus_names[k]
        report.append(f"virus {k + 1} ({name}):")
        report.append(f"  certified per-step decay factor "
                      f"{fmt(run_report.rates[k])}")
        report.append(f"  worst Gershgorin row bound over run: "
                      f"{fmt(run_report.gershgorin_max[k])}")
        report.append(
            f"  decay bound ||x[t]|| <= rate^t ||x[0]||: "
            f"{'holds at every step' if run_report.decay_ok[k] else 'VIOLATED'} "
            f"(max violation {fmt(run_report.max_violation[k])})")
        report.append(f"  final total infection {fmt(run_report.final_total[k])}")
    _write_report(out_dir, report)


def cmd_run(cfg: ScenarioConfig, out_dir: Path, horizon=None,
            eta_sweep=None) -> None:
    """Execute every pipeline configured in the scenario's run block."""
    for pipeline in cfg.run.pipelines:
        sub = out_dir / pipeline
        if pipeline == "simulate":
            cmd_simulate(cfg, sub, horizon)
        elif pipeline == "analyze":
            cmd_analyze(cfg, sub, horizon)
        elif pipeline == "observe":
            cmd_observe(cfg, sub, horizon, eta_sweep)
        elif pipeline == "synthesize":
            cmd_synthesize(cfg, sub)
        elif pipeline == "control":
            cmd_control(cfg, sub)


GNUPLOT_TEMPLATES = {
    "simulate": (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "plot 'trajectory_1.csv' using 1:4 with lines title 'x (virus 1)'\n"),
    "analyze": (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "plot 'rho_tilde_1.csv' using 1:2 with lines, 1 with lines dt 2\n"),
    "observe": (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "plot '< grep aggregate observer_error.csv' using 1:4 with lines "
        "title 'aggregated error'\n"),
    "control": (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "plot 'trajectory_1.csv' using 1:4 with lines title 'x (virus 1)'\n"),
}


def _maybe_gnuplot(command: str, out_dir: Path, enabled: bool) -> None:
    if enabled and command in GNUPLOT_TEMPLATES:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"plot_{command}.gp").write_text(
            GNUPLOT_TEMPLATES[command], encoding="utf-8")


def _parse_eta_sweep(spec: str) -> list[float]:
    try:
        start, step, stop = (float(v) for v in spec.split(":"))
    except ValueError as exc:
        raise ConfigError(
            f"--eta-sweep expects start:step:stop, got {spec!r}") from exc
    if step <= 0:
        raise ConfigError("--eta-sweep step must be positive")
    values = []
    v = start
    while v <= stop + 1e-9:
        values.append(round(v, 10))
        v += step
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sirnet",
        description="Competitive multi-virus networked SIR: simulation, "
                    "certificates, estimation, and feedback control.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
            ("simulate", "run the open-loop dynamics and write trajectories"),
            ("analyze", "reproduction numbers, certificates, observability"),
            ("observe", "run the Luenberger observer against the simulation"),
            ("synthesize", "solve the gain-synthesis LMI"),
            ("control", "run the feedback eradication controller"),
            ("run", "run every pipeline configured in the scenario"),
            ("dump-config", "echo the validated scenario back as YAML")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scenario", required=True, help="scenario YAML file")
        if name != "dump-config":
            p.add_argument("--out", default=None,
                           help=f"output directory (env {ENV_OUT_DIR} overrides)")
            p.add_argument("--horizon", type=int, default=None,
                           help="override the configured horizon")
            p.add_argument("--gnuplot-script", action="store_true",
                           help="also emit a gnuplot script per command")
        if name in ("observe", "run"):
            p.add_argument("--eta-sweep", default=None, metavar="START:STEP:STOP",
                           help="sweep the observer gain scale")
        if name == "synthesize":
            p.add_argument("--tau", type=float, default=None,
                           help="override the LMI tau parameter")
            p.add_argument("--lipschitz-l", type=float, default=None,
                           help="override the residual-to-error bound l")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_scenario(args.scenario)
        if args.command == "dump-config":
            sys.stdout.write(dump_scenario(cfg))
            return 0
        out_dir = Path(os.environ.get(ENV_OUT_DIR) or args.out or cfg.run.out_dir)
        eta = _parse_eta_sweep(args.eta_sweep) \
            if getattr(args, "eta_sweep", None) else None
        if args.command == "simulate":
            cmd_simulate(cfg, out_dir, args.horizon)
        elif args.command == "analyze":
            cmd_analyze(cfg, out_dir, args.horizon)
        elif args.command == "observe":
            cmd_observe(cfg, out_dir, args.horizon, eta)
        elif args.command == "synthesize":
            cmd_synthesize(cfg, out_dir, args.tau, args.lipschitz_l)
        elif args.command == "control":
            cmd_control(cfg, out_dir, args.horizon)
        elif args.command == "run":
            cmd_run(cfg, out_dir, args.horizon, eta)
        _maybe_gnuplot(args.command, out_dir, args.gnuplot_script)
    except ConfigError as exc:
        print(f"sirnet: scenario error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - map everything else to exit 2
        print(f"sirnet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

# main.py
import os
import sys
import logging
import argparse
from typing import List, Optional

from dotenv import load_dotenv

load_dotenv()

# -----------------------------------------------------------------------------
# Logging
# -----------------------------------------------------------------------------
logging.basicConfig(
    level=os.getenv("LOG_LEVEL", "INFO"),
    format="%(asctime)s | %(levelname)s | %(message)s",
)

# -----------------------------------------------------------------------------
# Config
# -----------------------------------------------------------------------------
DEFAULT_OUT_DIR = os.getenv("CD_OUT_DIR", "out")
AUDIT_TRANSIENT = float(os.getenv("CD_AUDIT_TRANSIENT", "2.0"))   # s excluded from the deviation check
SERIES_DT       = float(os.getenv("CD_SERIES_DT", "0.5"))         # s, eigenvalue plot sampling

# -----------------------------------------------------------------------------
# Repo utils
# -----------------------------------------------------------------------------
from utils.artifact_write import PLAN_FILE, read_plan, read_sim_log, write_audit, write_plan, write_sim_log
from utils.errors import ContinuumError, SimulationAborted
from utils.planner import LeaderPlan, astar
from utils.report import plot_eigenvalues, plot_paths, snapshot_paths
from utils.scenario import Scenario, load_scenario
from utils.sim import audit, run
from utils.trajectory import SwarmTrajectory, deformation_series, rigid_phase


# -----------------------------------------------------------------------------
# Helpers
# -----------------------------------------------------------------------------
def _plan_path(args) -> str:
    return args.plan or os.path.join(args.out_dir, PLAN_FILE)

def _load_plan(args, sc: Scenario) -> LeaderPlan:
    plan, meta = read_plan(_plan_path(args))
    if meta.scenario_digest and sc.digest and meta.scenario_digest != sc.digest:
        logging.warning(f"⚠️ plan was made for scenario digest {meta.scenario_digest}, loaded {sc.digest}")
    if plan.n_segments and abs(plan.dt - sc.planner.dt) > 1e-9:
        logging.warning(f"⚠️ plan Δt={plan.dt} differs from scenario Δt={sc.planner.dt}; using the scenario value")
    return plan

def _scenario(args) -> Scenario:
    sc = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        sc = sc.with_sim(seed=args.seed)
    return sc


# -----------------------------------------------------------------------------
# Commands
# -----------------------------------------------------------------------------
def cmd_validate(args) -> int:
    sc = _scenario(args)
    m = sc.margins
    logging.info(
        f"✅ {sc.name} valid: {sc.n_agents} UAVs, d_s={m.d_s:.3f} d_b={m.d_b:.3f} "
        f"δ_max={m.delta_max:.3f} δ={m.delta:.3f} λ_CD,min={m.lambda_cd_min:.4f}"
    )
    return 0

def cmd_plan(args) -> int:
    sc = _scenario(args)
    logging.info(f"▶ planning {sc.name}: Δp=({sc.planner.dp_x}, {sc.planner.dp_y}) Δt={sc.planner.dt}")
    plan = astar(sc.initial, sc.goal, sc.planner, sc.margins, sc.environment)
    count, reason = write_plan(_plan_path(args), plan, sc.name, sc.digest, sc.planner.dt)
    if not count:
        logging.error(f"❌ plan not written: {reason}")
        return 1
    logging.info(f"✅ plan {sc.name}: {plan.n_segments} steps, cost={plan.cost:.4f}, horizon={plan.horizon:.1f}s -> {_plan_path(args)}")
    return 0

def cmd_simulate(args) -> int:
    sc = _scenario(args)
    plan = _load_plan(args, sc)
    try:
        simlog = run(sc, plan)
    except SimulationAborted as e:
        if e.partial_log is not None:
            count, reason = write_sim_log(args.out_dir, e.partial_log)
            logging.info(f"ℹ️ partial log written: {count} rows ({reason})")
        raise

    count, reason = write_sim_log(args.out_dir, simlog)
    logging.info(f"ℹ️ sim log: {count} rows ({reason}) -> {args.out_dir}")
    report = audit(simlog, sc.margins, transient=AUDIT_TRANSIENT)
    write_audit(args.out_dir, report)
    for line in report.lines():
        logging.info(line)
    if not report.passed:
        logging.error(f"❌ audit failed for {sc.name}")
        return 1
    logging.info(f"✅ audit passed for {sc.name}")
    return 0

def cmd_report(args) -> int:
    sc = _scenario(args)
    plan = _load_plan(args, sc)
    traj = SwarmTrajectory.build(plan, sc.followers0, sc.z_ht, dt=sc.planner.dt,
                                 lambda_cd_min=sc.margins.lambda_cd_min)
    series = deformation_series(traj, SERIES_DT)
    out = args.out_dir
    written = [plot_paths(sc.environment, plan, os.path.join(out, "paths.svg"), f"{sc.name}: leader paths")]
    written.append(plot_eigenvalues(series, os.path.join(out, "eigenvalues.svg"), sc.margins.lambda_cd_min))
    written += snapshot_paths(sc.environment, traj, out, simlog=read_sim_log(out))
    logging.info(f"ℹ️ rigid phase {rigid_phase(series):.1f}s of {traj.horizon:.1f}s")
    logging.info(f"✅ report: {len(written)} figures -> {out}")
    return 0


# -----------------------------------------------------------------------------
# Entrypoint
# -----------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="main.py", description="Continuum-deformation mission planner and simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, needs_plan in (("validate", cmd_validate, False), ("plan", cmd_plan, False),
                                 ("simulate", cmd_simulate, True), ("report", cmd_report, True)):
        sp = sub.add_parser(name)
        sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--out-dir", default=DEFAULT_OUT_DIR, help="artifact directory")
        sp.add_argument("--plan", default=None,
                        help=f"plan JSON ({'input' if needs_plan else 'output'}; default <out-dir>/{PLAN_FILE})")
        sp.add_argument("--seed", type=int, default=None, help="overrides sim.seed")
        sp.set_defaults(func=fn)
    return p

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ContinuumError as e:
        logging.error(f"❌ {args.command} failed ({type(e).__name__}): {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())

# debug_margins.py
import os, sys, traceback

import numpy as np
from dotenv import load_dotenv

# --- make sure we can import utils.* regardless of where we run from ---
ROOT = os.path.abspath(os.path.dirname(__file__))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

load_dotenv()

try:
    from utils.environment import Environment, Rect
    from utils.geometry import TriangleConfig, barycentric_weights, polar_decompose, signed_area, solve_deformation
    from utils.planner import PlannerConfig, grid_offsets
    from utils.safety import SafetyMargins, delta_max, initial_margins, lambda_cd_min, triangle_clear, valid_deformation
    from utils.scenario import ScenarioModel, lattice_followers
except Exception:
    print("Import error: cannot import utils.*")
    traceback.print_exc()
    sys.exit(1)

SCENARIO = sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, "scenarios", "case1.json")

def debug_margins_run(path: str):
    # Raw model only: the point is to see each step even when full validation would refuse the file.
    with open(path, "r", encoding="utf-8") as f:
        m = ScenarioModel.model_validate_json(f.read())
    t0 = TriangleConfig.from_points(m.leaders_initial_m)
    goal = TriangleConfig.from_points(m.leaders_goal_m)

    # A) leading triangle
    print(f"A) initial area={signed_area(t0):.3f} m², goal area={signed_area(goal):.3f} m²", flush=True)

    # B) followers
    if m.followers_initial_m is not None:
        followers = np.asarray(m.followers_initial_m, dtype=float).reshape(-1, 2)
    else:
        followers = lattice_followers(t0, m.follower_lattice_denominator or 7)
    w = np.array([tuple(barycentric_weights(t0, p)) for p in followers])
    print(f"B) followers: {len(followers)}, min barycentric weight {w.min():.4f}", flush=True)

    # C) d_s, d_b
    d_s, d_b = initial_margins(t0, followers, m.epsilon_m, include_leaders=True)
    print(f"C) d_s={d_s:.4f} m (2ε={2 * m.epsilon_m:.3f}), d_b={d_b:.4f} m (ε={m.epsilon_m:.3f})", flush=True)

    # D) δ_max, λ_CD,min
    dmax = delta_max(d_s, d_b, m.epsilon_m)
    lam = lambda_cd_min(min(m.delta_m, dmax), m.epsilon_m, dmax)
    print(f"D) δ_max={dmax:.4f} m, δ={m.delta_m:.4f} m, λ_CD,min={lam:.4f}", flush=True)

    # E) goal deformation
    pd = polar_decompose(solve_deformation(t0, goal))
    print(f"E) goal λ1={pd.lambda1:.4f} λ2={pd.lambda2:.4f}  C_Col={lam - pd.lambda1:+.4f}", flush=True)

    # F) lattice + clearance
    env = Environment(Rect(*m.environment.bounds_m), tuple(Rect(*z) for z in m.environment.no_fly_zones_m))
    pcfg = PlannerConfig(m.planner.dp_x_m, m.planner.dp_y_m, m.planner.dt_s)
    margins = SafetyMargins(m.epsilon_m, d_s, d_b, m.delta_m, dmax, lam)
    try:
        off = grid_offsets(t0, goal, pcfg)
        print(f"F) goal lattice offsets {off.tolist()}", flush=True)
    except Exception as e:
        print(f"F) goal off lattice: {e}", flush=True)
    print(f"   initial clear={triangle_clear(t0, margins.clearance, env)}, "
          f"goal valid={valid_deformation(t0, goal, margins, env)}", flush=True)

if __name__ == "__main__":
    try:
        print(f"▶ Running debug_margins_run({SCENARIO})", flush=True)
        debug_margins_run(SCENARIO)
        print("✔ Done.", flush=True)
    except Exception:
        print("✖ Exception while running debug_margins_run():", flush=True)
        traceback.print_exc()
        sys.exit(1)

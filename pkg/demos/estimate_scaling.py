"""Scale the boundary datum of the epsilon scenario and print the bound ratios.

    python3 demos/estimate_scaling.py
"""

from pqbound.degiorgi import verify_estimate
from pqbound.scenarios import load_scenario
from pqbound.solver import SolveOptions

pb = load_scenario("double_phase_eps")
scales = [0.25, 0.5, 1, 1.5, 2, 3, 4]
est = verify_estimate(pb, scales, pb.make_grid(), SolveOptions(), classification="theorem2")
print(f"gamma = {est['gamma_used']:.4g}")
print("scale,norm_u_inf,norm_u0_inf,norm_u_pstar,ratio")
for r in est["records"]:
    print(f"{r['scale']},{r['norm_u_inf']:.6g},{r['norm_u0_inf']:.6g},{r['norm_u_pstar']:.6g},{r['ratio']:.6g}")
print(f"max/min ratio = {est['stability']:.4g}")

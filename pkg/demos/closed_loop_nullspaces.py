"""Open-loop filters in closed loop.

When the plant has at least as many outputs as inputs, a residual generator
designed on the open-loop plant still decouples control inputs and
disturbances once the loop is closed, and its fault and noise responses do
not change. With fewer outputs than inputs the closed-loop nullspace is
strictly larger. Both facts are checked on seeded random plants.

Run with ``python3 demos/closed_loop_nullspaces.py``.
"""

from nullfdi.verification import check_theorem1, check_theorem2, theorem_suite

one = check_theorem1(seed=3, n_y=3, n_u=2, n_d=1)
print("n_y >= n_u example:")
print(f"  nullspace dims open/closed loop: {one.dim_open_loop}/{one.dim_closed_loop} "
      f"(expected n_y - r_d = {one.expected_open_loop})")
print(f"  closed-loop decoupling error {one.decoupling_error:.1e}, "
      f"R_f/R_w open vs closed discrepancy {one.discrepancy:.1e}")

two = check_theorem2(seed=3, n_y=2, n_u=3)
print("n_y < n_u example:")
print(f"  dims open/closed loop: {two.dim_open_loop}/{two.dim_closed_loop} "
      f"(expected {two.expected_open_loop}/{two.expected_closed_loop})")
print(f"  open-loop basis inside the closed-loop nullspace: residual {two.containment:.1e}")

for theorem in (1, 2):
    reports = theorem_suite(theorem, n_cases=25, seed=0)
    worst = max(max(r.decoupling_error, r.discrepancy, r.containment) for r in reports)
    print(f"batch of 25 (theorem {theorem}): {sum(r.verdict for r in reports)} hold, "
          f"worst error {worst:.1e}")

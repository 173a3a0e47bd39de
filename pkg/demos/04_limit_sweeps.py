"""Sweeps in p: towards p = 1 the minimizers approach the identity away from the pin;
for large p the distortion becomes nearly constant.

    python demos/04_limit_sweeps.py
"""
from lpteich.experiments import sweep_p
from lpteich.optimizer import SolveConfig

base = SolveConfig(p=2, pin_target=-0.3, target_edge_length=0.1)

low = sweep_p(base, [1.5, 1.25, 1.1])
print("p     W11 distance  max displacement")
for row in low.rows[::-1]:
    print(f"{row.p:<5} {row.w11_distance:.5f}       {row.max_displacement:.3f}")

high = sweep_p(base, [2, 4, 8, 16])
print("\np     IK stddev  |mu| stddev  energy")
for row in high.rows:
    print(f"{row.p:<5} {row.ik_stddev:.5f}    {row.mu_stddev:.5f}      {row.energy:.4f}")

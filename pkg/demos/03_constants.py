"""Limiting in-degree fractions three ways: table, integral, simulation."""

import numpy as np

from nnshift import empirical_constants, known_constants, mc_table

np.set_printoptions(precision=5, suppress=True)

for d in (1, 2):
    ref = known_constants(d, 1)
    mc = mc_table(d, 200_000, seed=1)
    emp = empirical_constants(d, 1, n_nodes=1000, n_reps=100, seed=1)
    print(f"d={d}")
    print("  reference ", ref.q)
    print("  integral  ", mc.q, "+-", mc.stderr)
    print("  simulated ", emp.q, "+-", emp.stderr)

# The overload limit at lam = mu with everyone shifting is the mass above in-degree 1.
print("2D overload limit:", known_constants(2, 1).q[2:].sum())

"""Exact small systems: with two servers nobody is overloaded, with three the middle one is."""

from nnshift import small_n_expectation

for n in (2, 3):
    print(f"N={n}: E O_N = {small_n_expectation(n, 100_000, seed=0):.5f}")

"""Tour of univariate matrix-exponential laws.

Builds a density that is not phase-type, evaluates it, and pushes it
through the closure operations (convolution, order statistics, residual
lifetime, equilibrium, Esscher transform).
"""
import numpy as np

from memix import medist as md
from memix import risk as rk

f = md.canonical_example()  # (2/3) e^{-x} (1 + cos x), zero at x = pi
print("density at 0, pi/2, pi:", f.pdf(np.array([0.0, np.pi / 2, np.pi])))
print("mean, second moment   :", f.mean, f.moment(2))
print("Laplace transform at 1:", md.laplace(f, 1.0))

e = md.exponential(1.0)
s = md.convolve([f, e])
print(f"\nf * Exp(1): order {s.p}, mean {s.mean:.6f} (= {f.mean + 1:.6f})")

mx = md.order_stat_indep([f, f, e], 3)
print(f"max of (f, f, Exp(1)): {len(mx.components)} mixture terms, mean {mx.mean:.6f}")

r = md.residual(f, 2.0)
print(f"residual life beyond 2: mean {r.mean:.6f}")

eq = md.equilibrium(f, 2)
print(f"second-order equilibrium: mean {eq.mean:.6f} = E[X^3] / (3 E[X^2]) = {f.moment(3) / (3 * f.moment(2)):.6f}")

tilted = md.esscher_size_biased(f, (1, 0.5))
print(f"size-biased, tilted by 0.5: normaliser {tilted.norm:.6f}, mean {tilted.triple.mean:.6f}")

for theta in (0.9, 0.99):
    print(f"V@R_{theta} = {rk.quantile(f, theta):.6f}   TCE = {rk.tail_expectation(f, theta):.6f}")

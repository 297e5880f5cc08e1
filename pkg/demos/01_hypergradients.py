"""Approximate hypergradients and their error bound.

The outer gradient of a bilevel problem is grad_x f minus a correction
that routes grad_y f through the inner Hessians.  Evaluating it at an
inexact inner solution ybar costs at most C * ||y*(x) - ybar||, with C
computable from declared smoothness constants.  The scalar instance
attains that bound with equality.
"""

import numpy as np

from bilevel import (
    Scalar1D,
    QuadraticBilevel,
    derived_constants,
    hypergrad_error_bound,
    hypergradient,
    implicit_jacobian,
)

scalar = Scalar1D()
oracle = scalar.exact_oracle()

print("== scalar instance: g = (y - x)^2, f = x^2 + y^2, y*(x) = x ==")
exact = hypergradient(oracle, [1.0], [1.0])
print(f"hypergradient at the inner solution: {exact.grad[0]:+.6f}  (true 4x = 4)")

approx = hypergradient(oracle, [1.0], [0.0], ystar=[1.0])
err = abs(approx.grad[0] - 4.0)
print(f"hypergradient at ybar = 0:           {approx.grad[0]:+.6f}")
print(f"actual error {err:.6f} vs declared bound {approx.error_bound:.6f} "
      f"(ratio {err / approx.error_bound:.3f})")

d = derived_constants(scalar.constants)
print(f"derived constants: C = {d.C}, L_f = {d.L_f}, Q_g = {d.Q_g}")

print()
print("== quadratic instance: implicit Jacobian of the inner solution ==")
A = np.diag([1.0, 2.0, 4.0])
B = np.array([[1.0, 0.5], [0.0, 1.0], [2.0, -1.0]])
qb = QuadraticBilevel(A=A, B=B, b=[0.1, 0.2, 0.3], P=np.eye(2), p=[0.0, 0.0],
                      Q=np.eye(3), y_d=np.zeros(3))
x = np.array([0.4, -0.8])
J = implicit_jacobian(qb.exact_oracle(), x, qb.ystar(x))
print("dy*/dx from the solver:")
print(np.array_str(J, precision=6))
print("closed form A^-1 B:")
print(np.array_str(np.linalg.solve(A, B), precision=6))

h = 1e-6
fd = np.zeros(2)
for i in range(2):
    e = np.zeros(2)
    e[i] = h
    fd[i] = (qb.composed_value(x + e) - qb.composed_value(x - e)) / (2 * h)
hg = hypergradient(qb.exact_oracle(), x, qb.ystar(x)).grad
print(f"hypergradient vs finite differences: {np.abs(hg - fd).max():.2e} max abs diff")

print()
print("== error bound across a sweep of inner inexactness ==")
rng = np.random.default_rng(0)
C = derived_constants(qb.constants).C
for dist in (0.5, 0.1, 0.01):
    ybar = qb.ystar(x) + dist * rng.standard_normal(3) / np.sqrt(3)
    got = hypergradient(qb.exact_oracle(), x, ybar).grad
    actual = np.linalg.norm(got - qb.composed_grad(x))
    bound = hypergrad_error_bound(qb.constants, float(np.linalg.norm(ybar - qb.ystar(x))))
    print(f"  ||y* - ybar|| ~ {dist:<5}: error {actual:.2e} <= bound {bound:.2e}")

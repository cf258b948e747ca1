"""
Checking hand-written gradients
===============================

Every backward pass in the package is written by hand, so each one is
compared against central finite differences. This script runs the full-model
check (all three attention positions on) and then shows where the
finite-difference oracle itself stops being trustworthy.
"""

# %%
# The full model
# --------------

import numpy as np

from hrne.gradcheck import TOLERANCE, run_gradcheck, small_instance
from hrne.numerics import finite_diff_grad

report = run_gradcheck(seed=0)
print(f"{report.num_scalars} parameters, worst tensor {report.worst}: {report.max_error:.2e}",
      "(pass)" if report.passed else "(FAIL)")
for name, err in sorted(report.errors.items(), key=lambda kv: -kv[1])[:5]:
    print(f"  {name:14s} {err:.2e}")

# %%
# Where finite differences give out
# ---------------------------------
# A central difference has truncation error ~eps^2 and rounding error
# ~1e-16 * |loss| / eps. When a gradient entry is around 1e-7 and the loss is
# about 30, the rounding term alone is about 1e-4 relative, right at the
# tolerance. Sweeping eps on such an instance shows the rounding regime:
# the error grows as eps shrinks.

model, xs, caps = small_instance(7)
_, grads = model.forward_backward(xs, caps)
loss = lambda: float(model.loss(xs, caps).sum())  # noqa: E731
name = "att2.U_a"
for eps in (1e-3, 1e-4, 1e-5):
    num = finite_diff_grad(loss, model.params, eps=eps, names=[name])[name]
    a = grads[name]
    rel = np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-8)
    i = np.unravel_index(np.argmax(rel), rel.shape)
    print(f"eps={eps:.0e}: worst relative error {rel[i]:.1e} on an entry of size {abs(a[i]):.1e}")
print("tolerance", TOLERANCE)

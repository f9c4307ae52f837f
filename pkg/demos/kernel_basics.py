# Evaluating the Volterra reservoir kernel on a few hand-made windows.
import numpy as np

from reservoir_kernels import KernelParams, kernel_pair, kernel_sum

params = KernelParams(lam=0.5, tau=0.5, bound=1.0)
print("rho =", params.rho, " kernel bound =", params.kernel_bound)

# Two zero windows give the initialization value 1 / (1 - lam^2).
print("K(0, 0) =", kernel_pair(np.zeros(3), np.zeros(3), params))

# Constant windows at the input bound approach the upper bound as width grows.
for width in (1, 2, 5, 10, 30):
    ones = np.ones(width)
    print(f"width {width:2d}: K = {kernel_pair(ones, ones, params):.12f}")

# The recursion and the truncated closed-form sum agree.
rng = np.random.default_rng(0)
z = rng.uniform(-1, 1, size=(20, 3)) / np.sqrt(3)
zp = rng.uniform(-1, 1, size=(15, 3)) / np.sqrt(3)
print("recursion:", kernel_pair(z, zp, params))
print("series   :", kernel_sum(z, zp, params))

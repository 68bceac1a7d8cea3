"""Two fermions in the unit interval with a SimplexNet ansatz.

The exact ground state of the Neumann Laplacian in the antisymmetric
sector is ``cos(pi x) - cos(pi y)`` with energy ``pi^2``. Run with
``python3 demos/simplexnet_toy.py [steps]`` (default 500, about 25 s).
"""
import sys

import numpy as np

from fockline.simplexnet import ExactToySolution, TrainConfig, psi, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 500
res = train(TrainConfig(steps=steps, seed=0))

for k in sorted({0, 1, 10, 50, 100, steps // 2, steps}):
    if k < len(res.energy):
        print(f"step {k:4d}: E = {res.energy[k]:.4f}  L2 = {res.l2_error[k]:.4f}  norm = {res.norm[k]:.4f}")
print(f"fresh-sample energy {res.test_energy:.4f} vs pi^2 = {np.pi ** 2:.4f} "
      f"({100 * (res.test_energy / np.pi ** 2 - 1):+.2f}%)")

# Compare against the exact solution along the anti-diagonal x + y = 1.
x = np.linspace(0.05, 0.45, 5)
pts = np.stack([x, 1 - x], axis=1)[:, :, None]
exact = ExactToySolution().psi(pts)
learned = psi(res.model, pts)
learned *= np.sign(learned @ exact)
for xi, a, b in zip(x, learned, exact):
    print(f"psi({xi:.2f}, {1 - xi:.2f}) = {a:+.4f}   exact {b:+.4f}")

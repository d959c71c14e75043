"""Double shear layer for incompressible Navier-Stokes.

Two thin horizontal jets (rho = 30) with a small vertical perturbation
(delta = 0.05) roll up into vortices.  The solver works on the velocity
field only; the pressure is removed by the Leray projection, so the
discrete divergence stays at rounding level.

The configured run (demos/configs/ns_shear.ini) uses 128^2.  By default
this script drops to 64^2 so it finishes in seconds; pass --full for the
configured resolution.

Run:  python3 demos/04_shear_layer.py [--full]
"""

# %%
import sys
from pathlib import Path

import numpy as np

from savflow.config import apply_overrides, parse_config
from savflow.harness import run_config
from savflow.spectral import divergence

config = parse_config((Path(__file__).parent / "configs" / "ns_shear.ini").read_text())
if "--full" not in sys.argv:
    config = apply_overrides(config, ["grid.modes=64,64"])

result = run_config(config, Path("out") / "demo_shear")
grid = result.model.grid
print(f"{len(result.records)} steps, audit problems: {len(result.violations)}")

# %%
def vorticity(u):
    uh = np.stack([grid.fft(c) for c in u])
    kx, ky = grid.k_deriv
    return grid.ifft(1j * kx * uh[1] - 1j * ky * uh[0])


for t, u in sorted(result.snapshots.items()):
    uh = np.stack([grid.fft(c) for c in u])
    div = np.max(np.abs(grid.ifft(divergence(grid, uh))))
    print(f"t = {t:<5g} max |omega| = {np.max(np.abs(vorticity(u))):8.3f}  max |div u| = {div:.1e}")

# %%
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None and result.snapshots:
    times = sorted(result.snapshots)
    fig, axes = plt.subplots(1, len(times), figsize=(4 * len(times), 4))
    for ax, t in zip(np.atleast_1d(axes), times):
        ax.imshow(vorticity(result.snapshots[t]).T, origin="lower", cmap="RdBu_r",
                  extent=(0, 1, 0, 1))
        ax.set_title(f"vorticity, t = {t:g}")
    fig.tight_layout()
    fig.savefig("shear_layer.png", dpi=120)
    print("wrote shear_layer.png")

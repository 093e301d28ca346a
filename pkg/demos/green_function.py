"""
The discrete Green function
===========================

Columns of the Green function are solutions with a mollified point load.
This script looks at three of their properties on the mixed unit square:
symmetry G(x, y) = G(y, x)ᵀ, logarithmic growth at the pole, and the
representation formula.
"""
# %%
import numpy as np

from mixedgreen import BoundaryDecomposition, FESpace, PolygonalDomain, assemble, solve, triangulate
from mixedgreen import green as gr
from mixedgreen.mesh import refine

dom = PolygonalDomain([(0, 0), (1, 0), (1, 1), (0, 1)], M=2, R0=0.25)
dec = BoundaryDecomposition.from_edges(dom, [0, 3])

# %%
# Symmetry defect for one pole pair under refinement; the mollifier radius
# follows the mesh (ρ = 2h), so the defect shrinks like h².
x, y = (0.3, 0.3), (0.7, 0.7)
mesh = triangulate(dom, dec, 1 / 16)
for level in range(3):
    if level:
        mesh = refine(mesh)
    V = FESpace(mesh)
    r = gr.symmetry_probe(V, x, y)
    print(f"h = {mesh.h:.5f}: relative symmetry defect {r['relative']:.2e}")

# %%
# Near the pole max|G| grows like log(d/r) with the Stokeslet slope 1/4π.
fit = gr.log_bound_fit(dom, dec, (0.5, 0.5), 1 / 16, levels=6)
for r, g in zip(fit["radii"], fit["max_abs_G"]):
    print(f"r = {r:.4f}: max|G| = {g:.4f}")
print(f"slope {fit['slope']:.4f} (R² {fit['r2']:.4f}); Stokeslet 1/4π = {1 / (4 * np.pi):.4f}")

# %%
# Representation: u(x) from Green columns and the load alone, against a
# direct solve.
probes = np.array([[0.3, 0.3], [0.5, 0.5], [0.8, 0.8]])
f = lambda p: np.column_stack([np.exp(-np.sum((p - 0.5) ** 2, axis=1) / 0.04), 0 * p[:, 0]])
u, _ = solve(assemble(V, f=f))
cols = [gr.green_columns(V, p) for p in probes]
rep = gr.representation_solve(V, cols, f=f)
for p, a, b in zip(probes, u(probes), rep):
    print(f"x = {p}: direct {a}, representation {b}")

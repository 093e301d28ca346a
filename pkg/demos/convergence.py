"""
Manufactured-solution convergence
=================================

Solve the mixed Stokes problem on the unit square (D = left and bottom
edges, traction on the rest) with data built from a known smooth pair and
watch the errors drop at the Taylor-Hood rate h².
"""
# %%
# The exact pair: u is divergence free, p = sin πx.  Loads, traction and
# Dirichlet data come from it in closed form.
import numpy as np

from mixedgreen import BoundaryDecomposition, FESpace, PolygonalDomain, assemble, solve, triangulate
from mixedgreen.cli import manufactured_solution
from mixedgreen.mesh import refine

dom = PolygonalDomain([(0, 0), (1, 0), (1, 1), (0, 1)], M=2, R0=0.25)
dec = BoundaryDecomposition.from_edges(dom, [0, 3])
ex = manufactured_solution()

# %%
# Four meshes, each a uniform refinement of the previous one.
mesh = triangulate(dom, dec, 1 / 8)
rows = []
for level in range(4):
    if level:
        mesh = refine(mesh)
    V = FESpace(mesh)
    u, p = solve(assemble(V, f=ex["f"], f_N=ex["f_N"], f_D=ex["f_D"]))
    w = V.quad_weights
    du = u.grad_at_quadrature() - V.quad_values(ex["grad_u"], (2, 2))
    dp = p.at_quadrature() - V.quad_values(ex["p"], ())
    rows.append((mesh.h, np.sqrt(np.sum(w * np.sum(du**2, axis=(2, 3)))), np.sqrt(np.sum(w * dp**2))))

# %%
# Errors and observed rates.
print(f"{'h':>9} {'|u - u_h|_1':>12} {'rate':>5} {'|p - p_h|':>12} {'rate':>5}")
for k, (h, eu, ep) in enumerate(rows):
    if k:
        h0, eu0, ep0 = rows[k - 1]
        ru, rp = np.log(eu0 / eu) / np.log(h0 / h), np.log(ep0 / ep) / np.log(h0 / h)
        print(f"{h:9.5f} {eu:12.4e} {ru:5.2f} {ep:12.4e} {rp:5.2f}")
    else:
        print(f"{h:9.5f} {eu:12.4e} {'':>5} {ep:12.4e}")

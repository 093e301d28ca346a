"""
Korn constant and the Bogovskii right inverse
=============================================

Two ingredients of the theory that can be computed directly: the Korn
constant of the symmetric-gradient form and a right inverse of the
divergence that vanishes on D.
"""
# %%
import numpy as np

from mixedgreen import BoundaryDecomposition, FESpace, PolygonalDomain, triangulate
from mixedgreen.bogovskii import BogovskiiOperator, build_chain, solve_div
from mixedgreen.mesh import refine
from mixedgreen.verifiers import korn_constant

square = PolygonalDomain([(0, 0), (1, 0), (1, 1), (0, 1)], M=2, R0=0.25)

# %%
# Korn with D = bottom edge converges to a positive constant; with D empty
# the rigid rotation makes it zero.
mesh = triangulate(square, BoundaryDecomposition.from_edges(square, [0]), 1 / 8)
for level in range(3):
    if level:
        mesh = refine(mesh)
    rep = korn_constant(FESpace(mesh))
    print(f"h = {mesh.h:.4f}: c = {rep['constant']:.5f} ({rep['iterations']} iterations)")
empty = korn_constant(FESpace(triangulate(square, BoundaryDecomposition.from_edges(square, []), 1 / 8)))
print(f"D empty: c = {empty['constant']:.1e}, {empty['hypothesis']}, witness {empty['witness']}")

# %%
# Bogovskii: the chain of local domains carries any mean of f out through N.
dec = BoundaryDecomposition.from_edges(square, [0, 3])
chain = build_chain(square, dec)
V = FESpace(triangulate(square, dec, 1 / 16))
op = BogovskiiOperator(V, chain)
print(f"chain of {len(chain)} local domains")
for name, f in (("f = 1", lambda p: np.ones(len(p))), ("f = sin πx", lambda p: np.sin(np.pi * p[:, 0]))):
    _, info = solve_div(V, f=f, operator=op)
    print(f"{name}: residual {info['residual']:.1e}, D-trace {info['d_trace']:.1e}, "
          f"N-flux {info['n_flux']:.6f}, stability {info['stability']:.2f}")

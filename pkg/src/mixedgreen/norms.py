"""Empirical Lorentz functionals and Sobolev seminorms at quadrature level.

A function is represented by its values at quadrature nodes together with
the quadrature weights.  The decreasing rearrangement of such a sample is a
step function, so every Lorentz quasinorm is a finite sum.  The normalization
is chosen so that ``‖f‖_{q,q}`` is exactly the ``L^q`` norm:

    ‖f‖_{q,r} = ( Σ_k v_k^r (W_k^{r/q} - W_{k-1}^{r/q}) )^{1/r},
    ‖f‖_{q,∞} = max_k v_k W_k^{1/q} = sup_t t μ(t)^{1/q},

where ``v_1 ≥ v_2 ≥ ...`` are the sorted values and ``W_k`` the cumulative
weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WeightedSamples",
    "lorentz_norm",
    "lorentz_holder_check",
    "conjugate",
    "sobolev_seminorms",
    "field_samples",
    "lq_norm",
]


@dataclass(frozen=True)
class WeightedSamples:
    """Absolute values at quadrature nodes with positive quadrature measures."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.abs(np.asarray(self.values, dtype=float)).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if v.shape != w.shape:
            raise ValueError("values and weights must have the same size")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    @property
    def measure(self):
        return float(self.weights.sum())

    def scaled(self, c):
        return WeightedSamples(abs(c) * self.values, self.weights)

    def rearrangement(self):
        """Sorted values (descending) and cumulative weights."""
        order = np.argsort(-self.values, kind="stable")
        return self.values[order], np.cumsum(self.weights[order])


def _check_exponents(q, r):
    if not (1 < q < np.inf):
        raise ValueError(f"Lorentz exponent q must satisfy 1 < q < inf (got {q})")
    if not (1 <= r <= np.inf):
        raise ValueError(f"Lorentz exponent r must satisfy 1 <= r <= inf (got {r})")


def lorentz_norm(samples, q, r, min_measure=0.0):
    """Empirical ``L^{q,r}`` quasinorm of a :class:`WeightedSamples`.

    For ``r = inf`` the supremum may be restricted to levels whose
    distribution measure is at least ``min_measure``.  Point samples next to
    a singularity carry the weight of a whole quadrature cell, which is far
    larger than the true level-set measure, and inflate the weak-type
    supremum by a factor that does not shrink with the mesh; a floor of the
    order of the resolved-ball measure removes them.
    """
    _check_exponents(q, r)
    v, W = samples.rearrangement()
    if v.size == 0:
        return 0.0
    if np.isinf(r):
        ok = W >= min_measure
        if not np.any(ok):
            return 0.0
        return float(np.max(v[ok] * W[ok] ** (1.0 / q)))
    Wp = np.concatenate([[0.0], W[:-1]])
    inc = W ** (r / q) - Wp ** (r / q)
    return float(np.sum(v**r * inc) ** (1.0 / r))


def lq_norm(samples, q):
    """Plain weighted ``L^q`` norm (``q = inf`` gives the max)."""
    if np.isinf(q):
        return float(samples.values.max(initial=0.0))
    return float(np.sum(samples.weights * samples.values**q) ** (1.0 / q))


def conjugate(p):
    """Hölder conjugate exponent, with 1 <-> inf."""
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def lorentz_holder_check(f, g, q0, r0, q1=None, r1=None):
    """Ratio ``∫|fg| / (‖f‖_{q0,r0} ‖g‖_{q0',r0'})`` on a common quadrature.

    ``q1, r1`` default to the conjugates of ``q0, r0``; if given they must
    be the conjugates.
    """
    q1c, r1c = conjugate(q0), conjugate(r0)
    if q1 is not None and not np.isclose(q1, q1c):
        raise ValueError(f"q1 = {q1} is not conjugate to q0 = {q0}")
    if r1 is not None and not (np.isinf(r1) and np.isinf(r1c) or np.isclose(r1, r1c)):
        raise ValueError(f"r1 = {r1} is not conjugate to r0 = {r0}")
    if f.weights.shape != g.weights.shape or not np.allclose(f.weights, g.weights, rtol=1e-14, atol=0):
        raise ValueError("f and g must be sampled on the same quadrature")
    lhs = float(np.sum(f.weights * f.values * g.values))
    den = lorentz_norm(f, q0, r0) * lorentz_norm(g, q1c, r1c)
    if den == 0:
        return 0.0
    return lhs / den


def field_samples(space, values, mask=None):
    """WeightedSamples from values at the quadrature nodes of ``space``.

    ``values`` has shape (m, nq) (absolute values are taken) and ``mask`` is
    an optional boolean array of the same shape selecting nodes.
    """
    w = space.quad_weights
    v = np.asarray(values, dtype=float)
    if v.shape != w.shape:
        raise ValueError("values must be given at the quadrature nodes")
    if mask is None:
        return WeightedSamples(v, w)
    mask = np.asarray(mask, dtype=bool)
    return WeightedSamples(v[mask], w[mask])


def sobolev_seminorms(field, mask=None, R0=None):
    """L² norms of a field, its gradient, symmetric and antisymmetric gradient.

    For a velocity field ``u`` the keys are ``L2``, ``grad``, ``eps`` and
    ``mu``; ``grad² = eps² + mu²`` where ``mu`` collects the antisymmetric
    parts ``μ^α_i = (∂_i u_α - ∂_α u_i)/2`` over all index pairs.  With
    ``R0`` the scale-invariant ``H1`` norm ``(R0⁻² ‖u‖² + ‖∇u‖²)^{1/2}`` is
    added.  A pressure field gets ``L2`` and ``grad``.
    """
    space = field.space
    w = space.quad_weights if mask is None else np.where(mask, space.quad_weights, 0.0)
    val = field.at_quadrature()
    grd = field.grad_at_quadrature()
    out = {}
    if field.kind == "pressure":
        out["L2"] = float(np.sqrt(np.sum(w * val**2)))
        out["grad"] = float(np.sqrt(np.sum(w * np.sum(grd**2, axis=-1))))
    else:
        eps = 0.5 * (grd + np.swapaxes(grd, -1, -2))
        mu = 0.5 * (np.swapaxes(grd, -1, -2) - grd)
        out["L2"] = float(np.sqrt(np.sum(w * np.sum(val**2, axis=-1))))
        out["grad"] = float(np.sqrt(np.sum(w * np.sum(grd**2, axis=(-2, -1)))))
        out["eps"] = float(np.sqrt(np.sum(w * np.sum(eps**2, axis=(-2, -1)))))
        out["mu"] = float(np.sqrt(np.sum(w * np.sum(mu**2, axis=(-2, -1)))))
    if R0 is not None:
        out["H1"] = float(np.sqrt(out["L2"] ** 2 / R0**2 + out["grad"] ** 2))
    return out

"""Small derivative-free minimizers used by the model fit."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def nelder_mead(func: Callable[[np.ndarray], float], x0, step, ftol: float = 1e-6,
                maxiter: int = 500) -> SimplexResult:
    """Minimize ``func`` with the standard Nelder-Mead moves.

    Stops once the spread of function values over the simplex drops below
    ``ftol`` or after ``maxiter`` iterations.  ``func`` may return ``inf`` for
    inadmissible points; exceptions propagate to the caller.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    simplex = np.vstack([x0] + [x0 + step[i] * np.eye(n)[i] for i in range(n)])
    fvals = np.array([func(p) for p in simplex])
    nfev = n + 1
    it = 0
    converged = False
    while it < maxiter:
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        if np.isfinite(fvals[-1]) and fvals[-1] - fvals[0] < ftol:
            converged = True
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + (centroid - simplex[-1])
        fr = func(xr)
        nfev += 1
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - simplex[-1])
            fe = func(xe)
            nfev += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + 0.5 * (xr - centroid)
        else:
            xc = centroid + 0.5 * (simplex[-1] - centroid)
        fc = func(xc)
        nfev += 1
        if fc < min(fr, fvals[-1]):
            simplex[-1], fvals[-1] = xc, fc
            continue
        simplex[1:] = simplex[0] + 0.5 * (simplex[1:] - simplex[0])
        fvals[1:] = [func(p) for p in simplex[1:]]
        nfev += n
    best = int(np.argmin(fvals))
    return SimplexResult(simplex[best].copy(), float(fvals[best]), it, nfev, converged)


def golden_section_max(func: Callable[[float], float], lo: float, hi: float, tol: float = 1e-3,
                       cache: dict | None = None) -> tuple[float, float]:
    """Maximize a unimodal ``func`` on ``[lo, hi]`` until the bracket is narrower than ``tol``.

    Returns ``(argmax, max)`` over every point evaluated, endpoints included.
    """
    cache = {} if cache is None else cache

    def f(x):
        if x not in cache:
            cache[x] = func(x)
        return cache[x]

    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    for x in (lo, hi):
        f(x)
    inside = {x: v for x, v in cache.items() if lo <= x <= hi}
    best = max(sorted(inside), key=lambda x: inside[x])
    return best, inside[best]

"""Maximum pseudolikelihood fitting of the Gibbs model, K selection, and estimate summaries."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .diagram import ProjectedDiagram
from .errors import DegenerateNormalization, DivergingEstimate, FitFailure, InvalidArgument
from .gibbs import ModelParams, PseudoLikelihood, QuadratureSpec, default_quadrature, knn_distances
from .kde import Kde, fit_kde
from .optim import golden_section_max, nelder_mead

log = logging.getLogger(__name__)


@dataclass
class FitConfig:
    alpha_range: tuple = (0.0, 4.0)
    fallback_range: tuple | None = (0.0, 1.0)
    alpha_tol: float = 1e-3
    coarse_probes: int = 5
    # any degenerate probe invalidates the whole alpha range
    strict_alpha: bool = True
    profile: bool = True
    theta_ftol: float = 1e-6
    theta_maxiter: int = 500
    theta_step: float | None = None
    diverge_at: float = 1e3
    quad_nodes: tuple = (64, 64)
    quad_pad: float = 3.0
    bandwidth: tuple | None = None
    renormalize_neighbors: bool = False

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        d = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        return cls(**d)


@dataclass
class FittedModel:
    params: ModelParams
    logpl: float
    n_points: int
    alpha_range: tuple
    bandwidth: tuple
    quad: QuadratureSpec
    renormalize_neighbors: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return self.params.K + 1

    @property
    def aic(self) -> float:
        return 2.0 * self.n_params - 2.0 * self.logpl

    @property
    def bic(self) -> float:
        return self.n_params * math.log(self.n_points) - 2.0 * self.logpl

    def kde_for(self, ppd: ProjectedDiagram) -> Kde:
        return Kde(ppd.points, np.asarray(self.bandwidth))

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "logpl": self.logpl,
            "aic": self.aic,
            "bic": self.bic,
            "n_points": self.n_points,
            "alpha_range": list(self.alpha_range),
            "bandwidth": list(self.bandwidth),
            "quad": self.quad.to_dict(),
            "renormalize_neighbors": self.renormalize_neighbors,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FittedModel":
        return cls(
            params=ModelParams.from_dict(d["params"]),
            logpl=float(d["logpl"]),
            n_points=int(d["n_points"]),
            alpha_range=tuple(d["alpha_range"]),
            bandwidth=tuple(d["bandwidth"]),
            quad=QuadratureSpec.from_dict(d["quad"]),
            renormalize_neighbors=bool(d.get("renormalize_neighbors", False)),
            diagnostics=d.get("diagnostics", {}),
        )


def _theta_step(ppd_points: np.ndarray, K: int) -> float:
    # unit change in theta_k * distance; keeps the initial simplex scale-free
    scale = float(np.mean(knn_distances(ppd_points, K)))
    return 1.0 / scale if scale > 0 else 1.0


def fit_theta(ppd, variant: str, K: int, alpha: float, kde: Kde, quad: QuadratureSpec,
              init=None, config: FitConfig | None = None, evaluator: PseudoLikelihood | None = None):
    """Maximize the log-pseudolikelihood over Theta at fixed ``alpha``.

    Returns ``(theta_hat, logpl, info)``.

    Raises
    ------
    DivergingEstimate
        If any coordinate of Theta exceeds ``config.diverge_at`` in magnitude.
    """
    config = config or FitConfig()
    pts = ppd.points if isinstance(ppd, ProjectedDiagram) else np.asarray(ppd, dtype=float)
    if len(pts) <= K:
        raise InvalidArgument(f"need more points than neighbours: N={len(pts)}, K={K}")
    ev = evaluator or PseudoLikelihood(pts, K, variant, kde, quad, config.renormalize_neighbors)
    theta0 = np.zeros(K) if init is None else np.asarray(init, dtype=float)
    step = config.theta_step or _theta_step(pts, K)

    def negll(theta):
        if np.max(np.abs(theta)) > config.diverge_at:
            raise DivergingEstimate(
                f"theta {np.round(theta, 3).tolist()} exceeded divergence guard {config.diverge_at} at alpha={alpha:.4g}",
                alphas_probed=[alpha],
            )
        try:
            val = -ev(theta, alpha)
        except DegenerateNormalization:
            return math.inf
        return val if math.isfinite(val) else math.inf

    start = negll(theta0)
    if not math.isfinite(start) and init is not None:
        # a warm start carried over from another alpha can leave the normalizer degenerate
        theta0 = np.zeros(K)
        start = negll(theta0)
    if not math.isfinite(start):
        raise DegenerateNormalization(f"log-pseudolikelihood undefined at the initial theta (alpha={alpha:.4g})")
    res = nelder_mead(negll, theta0, step, ftol=config.theta_ftol, maxiter=config.theta_maxiter)
    total_it, total_ev = res.iterations, res.evaluations
    # one restart around the optimum guards against a collapsed simplex
    res2 = nelder_mead(negll, res.x, step * 0.1, ftol=config.theta_ftol, maxiter=config.theta_maxiter)
    total_it += res2.iterations
    total_ev += res2.evaluations
    if res2.fun < res.fun:
        res = res2
    info = {"iterations": total_it, "evaluations": total_ev, "converged": bool(res.converged and res2.converged)}
    return res.x, -res.fun, info


def fit_alpha(ppd, variant: str, K: int, alpha_range: tuple, kde: Kde, quad: QuadratureSpec,
              config: FitConfig | None = None, profile: Callable[[float], tuple] | None = None):
    """Search ``alpha_range`` for the alpha maximizing the profile log-pseudolikelihood.

    ``profile`` maps alpha to ``(logpl, theta)``; by default it is the inner
    Theta maximization.  A coarse scan of ``config.coarse_probes`` equally spaced
    values picks a bracket that golden-section search then narrows to
    ``config.alpha_tol``.

    Returns ``(alpha_hat, theta_hat, logpl, info)``.
    """
    config = config or FitConfig()
    lo, hi = float(alpha_range[0]), float(alpha_range[1])
    if lo < 0 or not lo <= hi:
        raise InvalidArgument(f"alpha range must satisfy 0 <= lo < hi, got ({lo}, {hi})")
    failures: dict = {}
    thetas: dict = {}

    if profile is None:
        pts = ppd.points if isinstance(ppd, ProjectedDiagram) else np.asarray(ppd, dtype=float)
        ev = PseudoLikelihood(pts, K, variant, kde, quad, config.renormalize_neighbors)

        def profile(a):
            init = None
            if thetas:
                nearest = min(thetas, key=lambda b: (abs(b - a), b))
                init = thetas[nearest]
            theta, val, _ = fit_theta(pts, variant, K, a, kde, quad, init=init, config=config, evaluator=ev)
            return val, theta

    def value(a: float) -> float:
        try:
            val, theta = profile(a)
        except (DegenerateNormalization, FitFailure) as exc:
            failures[a] = f"{type(exc).__name__}: {exc}"
            return -math.inf
        thetas[a] = np.asarray(theta, dtype=float)
        return val if math.isfinite(val) else -math.inf

    cache: dict = {}
    if hi - lo < config.alpha_tol:
        cache[lo] = value(lo)
        best = lo
    else:
        grid = np.linspace(lo, hi, max(config.coarse_probes, 3))
        for a in grid:
            cache[float(a)] = value(float(a))
        if config.strict_alpha and failures:
            raise FitFailure(
                f"degenerate likelihood on alpha range ({lo}, {hi}) at {sorted(failures)}",
                alphas_probed=sorted(cache), causes=failures,
            )
        finite = [a for a in grid if math.isfinite(cache[float(a)])]
        if not finite:
            raise FitFailure(f"degenerate likelihood over the whole alpha range ({lo}, {hi})",
                             alphas_probed=sorted(cache), causes=failures)
        i = int(np.argmax([cache[float(a)] for a in grid]))
        a_lo, a_hi = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, len(grid) - 1)])
        best, _ = golden_section_max(value, a_lo, a_hi, tol=config.alpha_tol, cache=cache)
        if config.strict_alpha and failures:
            raise FitFailure(
                f"degenerate likelihood on alpha range ({lo}, {hi}) at {sorted(failures)}",
                alphas_probed=sorted(cache), causes=failures,
            )
        best = max(sorted(cache), key=lambda a: cache[a])
    if not math.isfinite(cache[best]):
        raise FitFailure(f"degenerate likelihood over the whole alpha range ({lo}, {hi})",
                         alphas_probed=sorted(cache), causes=failures)
    info = {"alphas_probed": sorted(cache), "n_probes": len(cache), "failures": failures}
    return best, thetas[best], cache[best], info


def _single_pass(ppd, variant, K, alpha_range, kde, quad, config):
    """Alpha at the initial Theta, then Theta at that alpha."""
    pts = ppd.points
    ev = PseudoLikelihood(pts, K, variant, kde, quad, config.renormalize_neighbors)
    theta0 = np.zeros(K)

    def profile(a):
        return ev(theta0, a), theta0

    alpha, _, _, info = fit_alpha(ppd, variant, K, alpha_range, kde, quad, config, profile=profile)
    theta, val, tinfo = fit_theta(pts, variant, K, alpha, kde, quad, config=config, evaluator=ev)
    info.update(tinfo)
    return alpha, theta, val, info


def fit_model(ppd: ProjectedDiagram, variant: str, K: int = 3, config: FitConfig | None = None,
              kde: Kde | None = None, quad: QuadratureSpec | None = None,
              profile: Callable[[float], tuple] | None = None) -> FittedModel:
    """Fit alpha and Theta; retry on the fallback alpha range if the primary range degenerates."""
    config = config or FitConfig()
    if len(ppd) <= K:
        raise InvalidArgument(f"need more points than neighbours: N={len(ppd)}, K={K}")
    kde = kde or fit_kde(ppd.points, config.bandwidth)
    quad = quad or default_quadrature(ppd, kde, config.quad_pad, config.quad_nodes)
    ranges = [tuple(config.alpha_range)]
    if config.fallback_range is not None and tuple(config.fallback_range) != ranges[0]:
        ranges.append(tuple(config.fallback_range))
    errors = {}
    for rng in ranges:
        try:
            if config.profile or profile is not None:
                alpha, theta, val, info = fit_alpha(ppd, variant, K, rng, kde, quad, config, profile=profile)
            else:
                alpha, theta, val, info = _single_pass(ppd, variant, K, rng, kde, quad, config)
        except FitFailure as exc:
            log.info("alpha range %s failed for %s K=%d: %s", rng, variant, K, exc)
            errors[str(rng)] = {"error": str(exc), "alphas_probed": exc.alphas_probed}
            continue
        diagnostics = {
            "alpha_search": {k: v for k, v in info.items() if k != "failures"},
            "fallback_used": rng != ranges[0],
            "failed_ranges": errors,
        }
        return FittedModel(
            params=ModelParams(variant, K, tuple(float(t) for t in theta), float(alpha)),
            logpl=float(val),
            n_points=len(ppd),
            alpha_range=tuple(float(r) for r in rng),
            bandwidth=tuple(float(h) for h in kde.bandwidth),
            quad=quad,
            renormalize_neighbors=config.renormalize_neighbors,
            diagnostics=diagnostics,
        )
    raise FitFailure(f"{variant} K={K}: every alpha range failed", causes=errors)


def select_k(ppd: ProjectedDiagram, variant: str, candidates: Sequence[int], config: FitConfig | None = None,
             fitter: Callable | None = None) -> FittedModel:
    """Fit every candidate K and return the BIC minimizer (ties go to the smaller K)."""
    if not candidates:
        raise InvalidArgument("candidate list is empty")
    if any(k >= len(ppd) for k in candidates):
        raise InvalidArgument(f"every candidate K must be < N={len(ppd)}, got {list(candidates)}")
    fitter = fitter or (lambda k: fit_model(ppd, variant, k, config))
    fits, causes = {}, {}
    for k in sorted(set(candidates)):
        try:
            fits[k] = fitter(k)
        except (FitFailure, DegenerateNormalization) as exc:
            causes[k] = str(exc)
    if not fits:
        raise FitFailure(f"all candidate K failed: {causes}", causes=causes)
    best_k = min(fits, key=lambda k: (fits[k].bic, k))
    chosen = fits[best_k]
    chosen.diagnostics["k_selection"] = {
        str(k): {"aic": m.aic, "bic": m.bic} for k, m in fits.items()
    } | {f"failed_{k}": c for k, c in causes.items()}
    return chosen


def sign_pattern(theta) -> str:
    return "".join("+" if t > 0 else "-" if t < 0 else "0" for t in theta)


@dataclass
class EstimateSummary:
    rows: list  # (pattern, alpha_min, alpha_max, percent, count)

    def to_dict(self) -> dict:
        return {"rows": [
            {"theta_signs": p, "alpha_min": lo, "alpha_max": hi, "percent": pct, "count": c}
            for p, lo, hi, pct, c in self.rows
        ]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha_min", "alpha_max", "theta_signs", "percent_cases", "count"])
        for p, lo, hi, pct, c in self.rows:
            w.writerow([f"{lo:.3f}", f"{hi:.3f}", p, f"{pct:.2f}", c])
        return buf.getvalue()

    @property
    def modal_pattern(self) -> str:
        return self.rows[0][0]


def summarize_estimates(models: Sequence[FittedModel]) -> EstimateSummary:
    """Group fits by the sign pattern of Theta-hat, with alpha-hat range and share per group."""
    if not models:
        raise InvalidArgument("no fitted models to summarize")
    keys = {(m.params.variant, m.params.K) for m in models}
    if len(keys) > 1:
        raise InvalidArgument(f"models mix variants/K: {sorted(keys)}")
    groups: dict = {}
    for m in models:
        groups.setdefault(sign_pattern(m.params.theta), []).append(m.params.alpha)
    total = len(models)
    rows = [
        (p, min(a), max(a), 100.0 * len(a) / total, len(a))
        for p, a in groups.items()
    ]
    rows.sort(key=lambda r: (-r[4], r[0]))
    return EstimateSummary(rows)

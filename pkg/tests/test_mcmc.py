from __future__ import annotations

import json
import math

import numpy as np
import pytest

from tda_replicate.cubical import h0_superlevel
from tda_replicate.diagram import ProjectedDiagram, from_ppd, to_ppd
from tda_replicate.errors import EmptyProposal
from tda_replicate.fit import fit_model
from tda_replicate.gibbs import ModelParams
from tda_replicate.kde import data_box, fit_kde, kde_grid
from tda_replicate.mcmc import (GridProposal, McmcConfig, acceptance_prob, build_proposal, independence_chain,
                                mcmc_sweep, mh_ratio, replicate, sample_proposal)
from tda_replicate.synthetic import make_rng, sample_circle


@pytest.fixture(scope="module")
def fitted():
    pts = sample_circle(300, 1.0, seed=11).points
    pd = h0_superlevel(kde_grid(fit_kde(pts, 0.1), data_box(pts), 50))
    model = fit_model(to_ppd(pd), "modified", 3)
    return pd, model


def _uniform(box=((0.0, 4.0), (0.0, 4.0)), size=4):
    return GridProposal(box, size, np.full((size, size), 1.0 / size ** 2))


def test_cutoff_cells_carry_no_mass(fitted):
    pd, model = fitted
    ppd = to_ppd(pd)
    kde = model.kde_for(ppd)
    prop = build_proposal(ppd, kde, 100, box=model.quad)
    cx, cy = prop.centers()
    g1, g2 = np.meshgrid(cx, cy, indexing="ij")
    raw = kde.evaluate(np.column_stack([g1.ravel(), g2.ravel()])).reshape(prop.probs.shape)
    assert np.all(raw[prop.probs > 0] >= 1e-4)
    assert np.all(prop.probs[raw < 1e-4] == 0)


def test_probabilities_sum_to_one(rng):
    for _ in range(100):
        pts = np.column_stack([rng.uniform(0, 1, 15), rng.exponential(0.3, 15)])
        ppd = ProjectedDiagram(pts, 0)
        prop = build_proposal(ppd, fit_kde(pts), 25)
        assert abs(prop.probs.sum() - 1.0) < 1e-12


def test_single_sample_mass_peaks_at_its_cell():
    z = np.array([[0.37, 0.61]])
    kde = fit_kde(z, bandwidth=0.02)
    prop = build_proposal(ProjectedDiagram(z, 0), kde, 20, box=((0.0, 1.0), (0.0, 1.0)))
    i, j = np.unravel_index(np.argmax(prop.probs), prop.probs.shape)
    assert prop.cell_of(z[0]) == (i, j)


def test_one_cell_proposal_samples_stay_in_cell():
    probs = np.zeros((5, 5))
    probs[2, 3] = 1.0
    prop = GridProposal(((0.0, 5.0), (0.0, 5.0)), 5, probs)
    rng = make_rng(0)
    for _ in range(500):
        assert prop.cell_of(sample_proposal(prop, rng)) == (2, 3)


def test_cell_frequencies_match_masses():
    rng = make_rng(1)
    probs = rng.random((4, 4)) ** 3
    probs[0, :] = 0.0
    probs /= probs.sum()
    prop = GridProposal(((-1.0, 1.0), (0.0, 2.0)), 4, probs)
    counts = np.zeros_like(probs)
    draws = [sample_proposal(prop, rng) for _ in range(100_000)]
    for x in draws:
        counts[prop.cell_of(x)] += 1
    assert np.max(np.abs(counts / len(draws) - probs)) < 0.01
    assert min(x[1] for x in draws) >= 0.0


def test_empty_proposal_is_an_error():
    z = np.array([[0.0, 0.0], [0.1, 0.1]])
    with pytest.raises(EmptyProposal):
        build_proposal(ProjectedDiagram(z, 0), fit_kde(z, 0.01), 10, box=((5.0, 6.0), (5.0, 6.0)))


def test_same_point_accepts():
    params = ModelParams("modified", 1, (3.0,), 0.5)
    kde = fit_kde(np.array([[0.0, 0.0], [1.0, 1.0]]))
    assert acceptance_prob([1.0, 1.0], [1.0, 1.0], [[0.0, 0.0]], params, _uniform(), kde) == 1.0


def test_flat_target_with_uniform_proposal_always_accepts(rng):
    kde = fit_kde(np.array([[0.5, 0.5], [2.0, 2.0], [3.0, 1.0]]))
    for variant in ("original", "modified"):
        params = ModelParams(variant, 2, (0.0, 0.0), 0.0)
        for _ in range(20):
            x, xs = rng.uniform(0, 4, 2), rng.uniform(0, 4, 2)
            assert acceptance_prob(x, xs, [[1.0, 1.0], [2.0, 3.0]], params, _uniform(), kde) == 1.0


def test_half_ratio_fixture():
    # f(x*) / f(x) = exp(-theta (|x*| - |x|)) = 1/2 with the single neighbour at the origin
    params = ModelParams("original", 1, (1.0,), 0.0)
    kde = fit_kde(np.array([[1.0, 1.0]]), bandwidth=1.0)
    x = np.array([1.0, 0.0])
    xs = np.array([1.0 + math.log(2.0), 0.0])
    rho = acceptance_prob(x, xs, [[0.0, 0.0]], params, _uniform(), kde)
    assert rho == pytest.approx(0.5, abs=1e-12)


def test_mh_ratio_conventions():
    assert mh_ratio(0.0, 0.0, 0.2, 0.0) == 1.0
    assert mh_ratio(-math.inf, -3.0, 0.2, 0.1) == 1.0
    assert mh_ratio(0.0, math.log(0.25), 0.1, 0.2) == pytest.approx(0.125)


def test_sweep_makes_one_proposal_per_point(fitted):
    pd, model = fitted
    ppd = to_ppd(pd)
    kde = model.kde_for(ppd)
    prop = build_proposal(ppd, kde, 50, box=model.quad)
    calls = []

    def spy(*args):
        calls.append(args)
        return acceptance_prob(*args)

    out, stats = mcmc_sweep(ppd, model, prop, kde, make_rng(3), acceptance=spy)
    assert len(calls) == len(ppd) == stats.proposals
    assert len(out) == len(ppd)


def test_all_reject_sweep_is_identity(fitted):
    pd, model = fitted
    ppd = to_ppd(pd)
    kde = model.kde_for(ppd)
    prop = build_proposal(ppd, kde, 50, box=model.quad)
    out, stats = mcmc_sweep(ppd, model, prop, kde, make_rng(4), acceptance=lambda *a: 0.0)
    assert np.array_equal(out.points, ppd.points) and stats.accepted == 0


def test_acceptance_rate_in_working_range(fitted):
    pd, model = fitted
    res = replicate(pd, model, McmcConfig(grid_size=100, burn_in=25, seed=5))
    rate = float(np.mean(res.acceptance_rates))
    assert 0.05 < rate < 0.6


def test_replicate_bookkeeping_and_determinism(fitted, tmp_path):
    pd, model = fitted
    cfg = McmcConfig(grid_size=50, burn_in=25, replicates=2, seed=9)
    a = replicate(pd, model, cfg)
    b = replicate(pd, model, cfg)
    assert len(a.acceptance_rates) == 50 and len(a.diagrams) == 2
    for da, db in zip(a.diagrams, b.diagrams):
        assert da == db
        assert len(da) == len(pd)
        ppd = to_ppd(da)
        (x0, x1), (y0, y1) = model.quad.box
        assert np.all(ppd.points[:, 1] >= 0)
        assert np.all((ppd.points[:, 0] >= x0) & (ppd.points[:, 0] <= x1))
        assert np.all(ppd.points[:, 1] <= y1)
    a.write(tmp_path)
    manifest = json.loads((tmp_path / "replicate_manifest.json").read_text())
    assert manifest["files"] == ["replicate_000.csv", "replicate_001.csv"]
    assert manifest["config"]["seed"] == 9


def test_back_mapped_replicates_are_valid_diagrams(fitted):
    pd, model = fitted
    res = replicate(pd, model, McmcConfig(grid_size=25, burn_in=3, seed=1))
    assert from_ppd(to_ppd(res.diagrams[0])) == res.diagrams[0]


def test_independence_chain_short_run():
    counts = independence_chain(np.log([0.2, 0.8]), [0.5, 0.5], 20_000, seed=2)
    assert abs(counts[1] / counts.sum() - 0.8) < 0.02

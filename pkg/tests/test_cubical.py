from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from oracles import h0_threshold_sweep, reduce_without_clearing
from tda_replicate.cubical import cubical_persistence, h0_superlevel, persistence_by_rank
from tda_replicate.errors import InvalidArgument, ResourceLimitError
from tda_replicate.kde import data_box, fit_kde, kde_grid
from tda_replicate.synthetic import sample_circle


def multiset(pd) -> Counter:
    return Counter(map(tuple, pd.pairs.tolist()))


def test_three_node_line():
    pd = h0_superlevel(np.array([3.0, 1.0, 2.0]))
    assert multiset(pd) == Counter({(3.0, 1.0): 1, (2.0, 1.0): 1})


def test_constant_field_has_one_essential_class():
    pd = h0_superlevel(np.full((4, 4), 0.7))
    assert multiset(pd) == Counter({(0.7, 0.7): 1})


def test_decreasing_line_is_one_component():
    pd = h0_superlevel(np.array([5.0, 4.0, 2.5, 1.0]))
    assert multiset(pd) == Counter({(5.0, 1.0): 1})


def test_single_bump_has_no_loops():
    x = np.linspace(-1, 1, 15)
    field = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) * 4)
    h0, h1 = cubical_persistence(field, 1)
    assert len(h1) == 0
    assert len(h0) == 1


def test_annular_ridge_has_one_prominent_loop():
    pts = sample_circle(200, 1.0, seed=5).points
    field = kde_grid(fit_kde(pts, 0.1), data_box(pts), 30)
    _, h1 = cubical_persistence(field, 1)
    pers = h1.pairs[:, 0] - h1.pairs[:, 1]
    # born where the ridge closes, dies at the near-empty centre
    assert np.sum(pers > 0.1 * field.values.max()) == 1
    assert h1.pairs[np.argmax(pers), 1] < 1e-6
    oracle = reduce_without_clearing(field.values, 1)
    assert multiset(h1) == oracle[1]


@pytest.mark.parametrize("shape", [(6, 7), (4, 4, 4)])
def test_h0_from_complex_matches_union_find(rng, shape):
    vals = rng.random(shape)
    dgms = cubical_persistence(vals, len(shape) - 1)
    assert multiset(dgms[0]) == multiset(h0_superlevel(vals))


def test_elder_rule_against_sweep(rng):
    for _ in range(10):
        vals = rng.random((12, 9))
        assert multiset(h0_superlevel(vals)) == h0_threshold_sweep(vals)


def test_h0_count_matches_local_maxima(rng):
    vals = rng.random((10, 10))
    pad = np.pad(vals, 1, constant_values=-np.inf)
    core = pad[1:-1, 1:-1]
    is_max = ((core > pad[:-2, 1:-1]) & (core > pad[2:, 1:-1]) & (core > pad[1:-1, :-2]) & (core > pad[1:-1, 2:]))
    pd = h0_superlevel(vals)
    assert len(pd) == int(is_max.sum())
    assert np.sum(pd.deaths == vals.min()) >= 1


def test_negated_field_swaps_orientation(rng):
    vals = rng.random((7, 7))
    sup = multiset(h0_superlevel(vals))
    # sublevel H0 of -vals via the same routine on -(-vals) = vals: pairs negate and keep order
    sub = Counter({(-b, -d): c for (b, d), c in multiset(h0_superlevel(-(-vals))).items()})
    assert Counter({(-b, -d): c for (b, d), c in sup.items()}) == sub


def test_rank_bounds_and_budget():
    with pytest.raises(InvalidArgument):
        cubical_persistence(np.zeros((4, 4)), 2)
    with pytest.raises(ResourceLimitError, match="cells"):
        cubical_persistence(np.zeros((40, 40, 40)), 2, max_cells=10_000)


def test_persistence_by_rank_selects_ranks(rng):
    vals = rng.random((5, 5, 5))
    out = persistence_by_rank(vals, [0, 2])
    assert sorted(out) == [0, 2]
    assert multiset(out[0]) == multiset(h0_superlevel(vals))


def test_spherical_shell_void_matches_oracle():
    from tda_replicate.synthetic import sample_sphere

    pts = sample_sphere(300, 2, 1.0, seed=2).points
    field = kde_grid(fit_kde(pts, 0.25), data_box(pts, 0.3), 9)
    dgms = cubical_persistence(field, 2)
    oracle = reduce_without_clearing(field.values, 2)
    for k in range(3):
        assert multiset(dgms[k]) == oracle[k]
    # one void: born where the shell closes, filled at the near-empty centre
    assert len(dgms[2]) == 1
    assert dgms[2].pairs[0, 1] < 0.01 * field.values.max() < dgms[2].pairs[0, 0]

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_superlevel_pairs
from tda_replicate.diagram import (PersistenceDiagram, ProjectedDiagram, from_ppd, load_diagram, load_diagrams,
                                   load_ppd, save_diagram, save_ppd, to_ppd)
from tda_replicate.errors import DiagramParseError, InvalidArgument


def test_sublevel_projection_by_formula():
    ppd = to_ppd(PersistenceDiagram(0, [(2.0, 5.0)], convention="sublevel"))
    assert ppd.points.tolist() == [[2.0, 3.0]]


def test_zero_persistence_lands_on_axis():
    ppd = to_ppd(PersistenceDiagram(0, [(1.0, 1.0)]))
    assert ppd.points.tolist() == [[1.0, 0.0]]
    assert from_ppd(ppd).pairs.tolist() == [[1.0, 1.0]]


def test_empty_diagram_projects_to_empty():
    assert len(to_ppd(PersistenceDiagram(1, []))) == 0


def test_back_mapping_reads_upper_endpoint_first():
    back = from_ppd(ProjectedDiagram(np.array([[2.0, 3.0]]), 0, "superlevel"))
    assert back.pairs.tolist() == [[5.0, 2.0]]  # (birth, death) = (x1 + x2, x1)


@given(arrays(float, st.tuples(st.integers(0, 12), st.just(2)), elements=st.floats(-50, 50, width=32)),
       st.sampled_from(["superlevel", "sublevel"]))
def test_projection_roundtrip(raw, convention):
    lo, hi = raw.min(axis=1), raw.max(axis=1)
    pairs = np.column_stack([hi, lo]) if convention == "superlevel" else np.column_stack([lo, hi])
    pd = PersistenceDiagram(0, pairs, convention)
    ppd = to_ppd(pd)
    assert np.all(ppd.points[:, 1] >= 0)
    back = from_ppd(ppd)
    # x1 + x2 rounds once, so identity holds to floating-point precision
    np.testing.assert_allclose(back.pairs, pd.pairs, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(raw).max(initial=0)))
    assert back.rank == pd.rank and back.convention == pd.convention


def test_negative_persistence_rejected():
    with pytest.raises(InvalidArgument):
        PersistenceDiagram(0, [(1.0, 2.0)])  # superlevel needs birth >= death
    with pytest.raises(InvalidArgument):
        ProjectedDiagram(np.array([[0.0, -1e-9]]), 0)


def test_save_load_roundtrip(tmp_path, rng):
    for i in range(100):
        pd = PersistenceDiagram(int(rng.integers(0, 3)), random_superlevel_pairs(rng, 8))
        path = tmp_path / f"d{i}.csv"
        save_diagram(pd, path)
        # an empty file has no rows to carry the rank, so ask for it explicitly
        assert load_diagram(path, rank=pd.rank) == pd


def test_multi_rank_file(tmp_path):
    h0 = PersistenceDiagram(0, [(3.0, 1.0), (2.0, 1.0)])
    h1 = PersistenceDiagram(1, [(1.5, 1.2)])
    save_diagram([h0, h1], tmp_path / "d.csv")
    both = load_diagrams(tmp_path / "d.csv")
    assert both[0] == h0 and both[1] == h1
    assert load_diagram(tmp_path / "d.csv", rank=1) == h1


def test_csv_with_negative_persistence_is_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("rank,birth,death\n0,1.0,0.5\n0,0.2,0.9\n")
    with pytest.raises(InvalidArgument, match="negative persistence"):
        load_diagram(path)


def test_header_only_csv_is_empty_diagram(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("rank,birth,death\n")
    assert len(load_diagram(path, rank=0)) == 0


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "junk.csv"
    path.write_text("rank,birth,death\n0,1.0,0.5\n0,x,0.1\n")
    with pytest.raises(DiagramParseError) as err:
        load_diagram(path)
    assert err.value.line == 3


def test_ppd_file_roundtrip(tmp_path):
    ppd = to_ppd(PersistenceDiagram(2, [(0.9, 0.1), (0.4, 0.35)]))
    save_ppd(ppd, tmp_path / "p.csv")
    back = load_ppd(tmp_path / "p.csv")
    assert np.array_equal(back.points, ppd.points) and back.source_rank == 2
    assert (tmp_path / "p.csv").read_text().startswith("x1,x2,rank")


def test_diagram_is_read_only():
    pd = PersistenceDiagram(0, [(2.0, 1.0)])
    with pytest.raises(ValueError):
        pd.pairs[0, 0] = 5.0

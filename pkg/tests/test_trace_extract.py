import itertools
import math

import numpy as np
import pytest

from paperecg.errors import NoSignalError
from paperecg.preprocess import InkMask
from paperecg.row_detect import RowBand
from paperecg.trace_extract import (
    CandidateNode,
    edge_cost,
    fill_gaps,
    find_nodes,
    least_cost_path,
)


def _mask(rows, width, pairs):
    ink = np.zeros((rows, width), dtype=bool)
    for col, y0, y1 in pairs:
        ink[y0:y1, col] = True
    return InkMask(ink=ink)


def test_find_nodes_midpoints():
    mask = _mask(40, 5, [(1, 10, 13), (3, 20, 21)])
    band = RowBand(y_top_px=0, y_bottom_px=40, index=0)
    columns = find_nodes(mask, band)
    assert [len(c) for c in columns] == [0, 1, 0, 1, 0]
    assert columns[1][0].y_center == pytest.approx(11.0)
    assert columns[1][0].run_len == 3
    assert columns[3][0].y_center == pytest.approx(20.0)


def test_find_nodes_respects_band_window():
    mask = _mask(60, 3, [(1, 5, 8), (1, 40, 44)])
    band = RowBand(y_top_px=30, y_bottom_px=60, index=0)
    columns = find_nodes(mask, band)
    assert len(columns[1]) == 1
    assert columns[1][0].y_center == pytest.approx(41.5)


def test_find_nodes_splits_long_runs():
    mask = _mask(100, 2, [(0, 10, 90)])
    band = RowBand(y_top_px=0, y_bottom_px=100, index=0)
    columns = find_nodes(mask, band, max_run_px=30)
    assert len(columns[0]) == 3
    assert [n.run_len for n in columns[0]] == [30, 30, 20]


def test_find_nodes_multiple_runs_per_column():
    mask = _mask(50, 1, [(0, 5, 10), (0, 30, 32)])
    band = RowBand(y_top_px=0, y_bottom_px=50, index=0)
    columns = find_nodes(mask, band)
    assert sorted(n.y_center for n in columns[0]) == [7.0, 30.5]


def test_edge_cost_values():
    a = CandidateNode(col=0, y_center=10.0, run_len=1)
    flat = CandidateNode(col=2, y_center=10.0, run_len=1)
    diag = CandidateNode(col=1, y_center=11.0, run_len=1)
    assert edge_cost(a, flat) == pytest.approx(2.0)
    assert edge_cost(a, diag) == pytest.approx(
        math.sqrt(2.0) + 5.0 * math.pi / 4.0)
    assert edge_cost(a, diag, angle_weight=0.0) == pytest.approx(math.sqrt(2.0))
    with pytest.raises(ValueError):
        edge_cost(flat, a)


def test_edge_cost_symmetric_in_direction():
    a = CandidateNode(col=0, y_center=10.0, run_len=1)
    up = CandidateNode(col=1, y_center=7.0, run_len=1)
    down = CandidateNode(col=1, y_center=13.0, run_len=1)
    assert edge_cost(a, up) == pytest.approx(edge_cost(a, down))


def brute_force_path(columns, band, angle_weight=5.0):
    """All chains, ordered the way the tie-break rules order them."""
    nonempty = [c for c in columns if c]
    best = None
    for chain in itertools.product(*nonempty):
        cost = 0.0
        dev = abs(chain[0].y_center - band.center)
        for a, b in zip(chain, chain[1:]):
            cost += edge_cost(a, b, angle_weight)
            dev += abs(b.y_center - band.center)
        ys = tuple(n.y_center for n in chain)
        key = (cost, dev, ys)
        if best is None or key < best:
            best = key
    return best


def _random_instance(rng):
    width = int(rng.integers(2, 9))
    band = RowBand(y_top_px=0, y_bottom_px=60, index=0)
    columns = []
    for col in range(width):
        n = int(rng.integers(0, 5))
        columns.append([CandidateNode(col=col,
                                      y_center=float(rng.integers(0, 60)),
                                      run_len=1)
                        for _ in range(n)])
    return columns, band


def test_least_cost_path_matches_enumeration():
    rng = np.random.default_rng(21)
    checked = 0
    while checked < 100:
        columns, band = _random_instance(rng)
        if not any(columns):
            continue
        checked += 1
        path = least_cost_path(columns, band)
        cost, dev, ys = brute_force_path(columns, band)
        assert path.total_cost == cost
        assert tuple(y for _, y in path.entries) == ys


def test_tie_breaks_prefer_band_center():
    # two parallel flat chains with identical cost; the one nearer the
    # band center wins
    band = RowBand(y_top_px=0, y_bottom_px=40, index=0)
    columns = [[CandidateNode(col=c, y_center=10.0, run_len=1),
                CandidateNode(col=c, y_center=22.0, run_len=1)]
               for c in range(3)]
    path = least_cost_path(columns, band)
    assert all(y == 22.0 for _, y in path.entries)


def test_tie_breaks_prefer_smaller_y():
    # equidistant from the center too: first differing column picks the
    # smaller y
    band = RowBand(y_top_px=0, y_bottom_px=40, index=0)
    columns = [[CandidateNode(col=c, y_center=15.0, run_len=1),
                CandidateNode(col=c, y_center=25.0, run_len=1)]
               for c in range(2)]
    path = least_cost_path(columns, band)
    assert [y for _, y in path.entries] == [15.0, 15.0]


def test_path_skips_empty_columns():
    band = RowBand(y_top_px=0, y_bottom_px=30, index=0)
    columns = [[CandidateNode(col=0, y_center=10.0, run_len=1)], [],
               [CandidateNode(col=2, y_center=12.0, run_len=1)]]
    path = least_cost_path(columns, band)
    assert [c for c, _ in path.entries] == [0, 2]
    assert path.total_cost == pytest.approx(edge_cost(columns[0][0],
                                                      columns[2][0]))


def test_path_requires_nodes():
    band = RowBand(y_top_px=0, y_bottom_px=30, index=0)
    with pytest.raises(NoSignalError):
        least_cost_path([[], [], []], band)


def test_path_prefers_straight_line():
    # a stray dark blob offers a shortcut with a sharp angle; the straight
    # continuation must win
    band = RowBand(y_top_px=0, y_bottom_px=60, index=0)
    columns = []
    for c in range(6):
        nodes = [CandidateNode(col=c, y_center=30.0, run_len=1)]
        if c == 3:
            nodes.append(CandidateNode(col=c, y_center=55.0, run_len=1))
        columns.append(nodes)
    path = least_cost_path(columns, band)
    assert all(y == 30.0 for _, y in path.entries)


def test_fill_gaps_interpolates_and_extends():
    band = RowBand(y_top_px=0, y_bottom_px=40, index=0)
    path = least_cost_path(
        [[CandidateNode(col=2, y_center=10.0, run_len=1)],
         [],
         [CandidateNode(col=4, y_center=20.0, run_len=1)]],
        band)
    dense = fill_gaps(path, 0, 7)
    assert dense.tolist() == [10.0, 10.0, 10.0, 15.0, 20.0, 20.0, 20.0]
    with pytest.raises(ValueError):
        fill_gaps(path, 5, 5)

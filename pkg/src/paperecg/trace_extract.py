"""Candidate-node extraction and least-cost waveform tracing.

Within a row band, every maximal vertical ink run in a column becomes a
candidate node at the run's midpoint (long runs are split so stray
vertical structures cannot swallow the trace). A left-to-right dynamic
program then picks one node per non-empty column, charging each step the
Euclidean distance plus a penalty proportional to its angle against the
horizontal axis, which favors the flat continuations a waveform actually
makes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoSignalError
from .preprocess import InkMask, mask_to_image
from .render import RasterImage, save_png
from .row_detect import RowBand

DEFAULT_ANGLE_WEIGHT = 5.0
DEFAULT_MAX_RUN_PX = 50


@dataclass(frozen=True)
class CandidateNode:
    col: int
    y_center: float
    run_len: int


@dataclass(frozen=True)
class TracePath:
    """One chosen node per non-empty column, left to right."""

    entries: tuple[tuple[int, float], ...]
    band: RowBand
    total_cost: float


def find_nodes(mask: InkMask, band: RowBand,
               max_run_px: int = DEFAULT_MAX_RUN_PX
               ) -> list[list[CandidateNode]]:
    """Collect candidate nodes per column inside a band.

    Returns one list per image column (absolute column indices); columns
    without ink in the band get empty lists. Runs longer than max_run_px
    are split at max_run_px intervals, each piece contributing a node.
    """
    y0 = max(0, band.y_top_px)
    y1 = min(mask.height_px, band.y_bottom_px)
    width = mask.width_px
    columns: list[list[CandidateNode]] = [[] for _ in range(width)]
    if y0 >= y1:
        return columns
    window = mask.ink[y0:y1, :]
    stacked = np.zeros((window.shape[0] + 2, window.shape[1]), dtype=np.int8)
    stacked[1:-1, :] = window
    d = np.diff(stacked, axis=0)
    start_rows, start_cols = np.nonzero(d == 1)
    end_rows, end_cols = np.nonzero(d == -1)
    # np.nonzero is row-major; re-order run endpoints column-major so the
    # k-th start and k-th end in a column describe the same run.
    start_order = np.lexsort((start_rows, start_cols))
    end_order = np.lexsort((end_rows, end_cols))
    starts = start_rows[start_order]
    ends = end_rows[end_order]
    cols = start_cols[start_order]
    for run_start, run_end, col in zip(starts, ends, cols):
        for piece_start in range(run_start, run_end, max_run_px):
            piece_end = min(piece_start + max_run_px, run_end)
            y_center = y0 + 0.5 * (piece_start + piece_end - 1)
            columns[int(col)].append(CandidateNode(
                col=int(col), y_center=float(y_center),
                run_len=int(piece_end - piece_start)))
    return columns


def edge_cost(a: CandidateNode, b: CandidateNode,
              angle_weight: float = DEFAULT_ANGLE_WEIGHT) -> float:
    """Euclidean step length plus angle-against-horizontal penalty."""
    if not b.col > a.col:
        raise ValueError(
            f"edge must step rightward, got cols {a.col} -> {b.col}")
    dx = float(b.col - a.col)
    dy = b.y_center - a.y_center
    return math.hypot(dx, dy) + angle_weight * abs(math.atan2(abs(dy), dx))


class _PathState:
    __slots__ = ("cost", "dev", "node", "parent")

    def __init__(self, cost, dev, node, parent):
        self.cost = cost
        self.dev = dev
        self.node = node
        self.parent = parent


def _state_ys(state: _PathState) -> tuple[float, ...]:
    ys = []
    while state is not None:
        ys.append(state.node.y_center)
        state = state.parent
    return tuple(reversed(ys))


def _better(challenger: _PathState, incumbent: _PathState | None) -> bool:
    """Order states by (cost, center deviation, leftmost-lowest y)."""
    if incumbent is None:
        return True
    if challenger.cost != incumbent.cost:
        return challenger.cost < incumbent.cost
    if challenger.dev != incumbent.dev:
        return challenger.dev < incumbent.dev
    return _state_ys(challenger) < _state_ys(incumbent)


def least_cost_path(columns: list[list[CandidateNode]], band: RowBand,
                    angle_weight: float = DEFAULT_ANGLE_WEIGHT) -> TracePath:
    """Cheapest left-to-right chain through one node per non-empty column.

    Each node connects only to the nodes of the nearest preceding
    non-empty column; the start and end node are free. Exact cost ties are
    broken by smaller mean |y - band center|, then by the smaller y at the
    first differing column. Raises NoSignalError when every column is
    empty.
    """
    center = band.center
    nonempty = [i for i, nodes in enumerate(columns) if nodes]
    if not nonempty:
        raise NoSignalError("no candidate nodes in band")
    states = [_PathState(0.0, abs(n.y_center - center), n, None)
              for n in columns[nonempty[0]]]
    for col in nonempty[1:]:
        next_states = []
        for node in columns[col]:
            dev = abs(node.y_center - center)
            best = None
            for prev in states:
                challenger = _PathState(
                    prev.cost + edge_cost(prev.node, node, angle_weight),
                    prev.dev + dev, node, prev)
                if _better(challenger, best):
                    best = challenger
            next_states.append(best)
        states = next_states
    final = None
    for state in states:
        if _better(state, final):
            final = state
    entries = []
    state = final
    while state is not None:
        entries.append((state.node.col, state.node.y_center))
        state = state.parent
    entries.reverse()
    return TracePath(entries=tuple(entries), band=band,
                     total_cost=final.cost)


def fill_gaps(path: TracePath, col_start: int, col_stop: int) -> np.ndarray:
    """Dense per-column y over [col_start, col_stop).

    Columns between path entries are linearly interpolated; columns before
    the first or after the last entry take the nearest entry's y.
    """
    if not col_stop > col_start:
        raise ValueError(f"empty column range [{col_start}, {col_stop})")
    cols = np.array([c for c, _ in path.entries], dtype=np.float64)
    ys = np.array([y for _, y in path.entries], dtype=np.float64)
    return np.interp(np.arange(col_start, col_stop, dtype=np.float64),
                     cols, ys)


def path_overlay_png(mask: InkMask, path: TracePath, out_path: str,
                     dpi: float | None = None) -> None:
    """Debug image: the mask with the chosen path burned in as black."""
    img = mask_to_image(mask, dpi=dpi)
    pixels = img.pixels.copy()
    dense = fill_gaps(path, path.entries[0][0], path.entries[-1][0] + 1)
    for i, col in enumerate(range(path.entries[0][0],
                                  path.entries[-1][0] + 1)):
        y = int(round(dense[i]))
        if 0 <= y < pixels.shape[0] and 0 <= col < pixels.shape[1]:
            pixels[y, col] = 0
    save_png(RasterImage(pixels=pixels, dpi=dpi), out_path)

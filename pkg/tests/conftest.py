"""Shared fixtures: a tiny fast page layout and pre-rendered scenes."""

import numpy as np
import pytest

from paperecg.render import DegradationSpec, PaperLayout, render_scene
from paperecg.synth import synth_ecg
from paperecg.wfdb_io import STANDARD_LEADS, SignalSet


def flat_record(fs: float = 500.0, duration_s: float = 10.0,
                level_mv: float = 0.0) -> SignalSet:
    """All twelve leads pinned at one constant level."""
    n = int(round(fs * duration_s))
    return SignalSet(sampling_hz=fs, lead_names=STANDARD_LEADS,
                     samples=np.full((12, n), level_mv, dtype=np.float64))


@pytest.fixture(scope="session")
def small_layout():
    # 2 s rhythm row keeps per-test renders ~20 ms. 150 dpi matters: on a
    # page this small, 100 dpi pushes the trace past ~2% of the pixels and
    # Otsu then isolates the trace class instead of splitting ink from
    # paper, which binarizes to an empty mask.
    return PaperLayout(dpi=150.0, margin_mm=5.0, row_height_mm=30.0,
                       segment_s=0.5, rhythm_s=2.0)


@pytest.fixture(scope="session")
def small_record():
    return synth_ecg(500.0, 2.0, 72.0, seed=11)


@pytest.fixture(scope="session")
def small_scene(small_layout, small_record):
    return render_scene(small_record, small_layout, DegradationSpec(), seed=1)


@pytest.fixture(scope="session")
def std_record():
    return synth_ecg(500.0, 10.0, 72.0, seed=7)


@pytest.fixture(scope="session")
def std_scene(std_record):
    """Clean standard page at 200 dpi; the fidelity workhorse."""
    return render_scene(std_record, PaperLayout(dpi=200.0),
                        DegradationSpec(), seed=1)

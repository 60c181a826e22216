import json
import math
from pathlib import Path

import pytest

from collapse_walk.config import load_config
from collapse_walk.scenarios import predict

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = json.loads((Path(__file__).parent / "golden" / "predict_nominal.json").read_text())


@pytest.fixture(scope="module")
def predicted():
    cfg = load_config(ROOT / GOLDEN["config"])
    return predict(cfg.scenario, cfg.scale)


def test_scale_chain(predicted):
    got, want = predicted["scale"], GOLDEN["scale"]
    assert got["organism_particles"] == want["organism_particles"]
    assert got["steps_range"] == pytest.approx(want["steps_range"], rel=1e-12)
    assert got["nominal_steps"] == pytest.approx(want["nominal_steps"], rel=1e-12)
    assert got["steps_to_collapse"] == want["steps_to_collapse"]
    assert f"{got['d_bar']:.0e}" == want["d_bar_one_sig_fig"]
    assert got["d_bar"] ** 2 == pytest.approx(GOLDEN["d_squared_order"], rel=1e-12)


def test_grw_comparison(predicted):
    assert predicted["scale"]["grw_lambda"] == GOLDEN["scale"]["grw_lambda"]
    assert predicted["scale"]["grw_system_size"] == GOLDEN["scale"]["grw_system_size"]


def test_eraser_leading_order(predicted):
    got, want = predicted["eraser"], GOLDEN["eraser"]
    assert (got["N"], got["d"]) == (want["N"], want["d"])
    for key in ("cross_amp", "deviant_prob", "deviant_prob_total"):
        assert got[key] == pytest.approx(want[key], rel=1e-12)
    assert got["cross_amp"] == pytest.approx(math.sqrt(want["N"] / 2) * want["d"], rel=1e-12)

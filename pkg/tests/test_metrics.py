import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from astgin import metrics as M


# loop-based re-implementations used as independent oracles
def brute(y, yh):
    y, yh = [float(v) for v in np.ravel(y)], [float(v) for v in np.ravel(yh)]
    n = len(y)
    sq = sum((a - b) ** 2 for a, b in zip(y, yh))
    ybar = sum(y) / n
    tot = sum((a - ybar) ** 2 for a in y)
    res = [a - b for a, b in zip(y, yh)]
    rbar = sum(res) / n
    var_res = sum((r - rbar) ** 2 for r in res) / n
    return {
        "rmse": math.sqrt(sq / n),
        "r2": 1 - sq / tot,
        "var": 1 - var_res / (tot / n),
        "mae": sum(abs(r) for r in res) / n,
        "accuracy": 1 - math.sqrt(sq) / math.sqrt(sum(a * a for a in y)),
    }


class TestExamples:
    def test_rmse(self):
        assert M.rmse([1, 2], [1, 2]) == 0
        assert M.rmse([0.0, 0.0], [0.1, 0.1]) == pytest.approx(0.1)
        assert M.rmse([0, 1], [1, 1]) == pytest.approx(math.sqrt(0.5))

    def test_r2(self):
        assert M.r2([0, 1, 3], [0, 1, 3]) == 1
        assert M.r2([0, 2], [1, 1]) == 0
        assert M.r2([0.0, 2.0, 4.0], [2.0, 2.0, 2.0]) == 0

    def test_var_score(self):
        assert M.var_score([0, 1, 3], [0, 1, 3]) == 1
        assert M.var_score([0, 1, 3], [0.5, 1.5, 3.5]) == pytest.approx(1.0)
        assert M.var_score([0, 2], [0, 0]) == 0

    def test_mae(self):
        assert M.mae([1, 2], [1, 2]) == 0
        assert M.mae([0, 0], [0.1, -0.1]) == pytest.approx(0.1)
        assert M.mae([0, 1], [0.5, 0.5]) == 0.5

    def test_accuracy(self):
        assert M.accuracy([3, 4], [3, 4]) == 1
        assert M.accuracy([3, 4], [0, 0]) == 0
        assert M.accuracy([3, 4], [3, 0]) == pytest.approx(0.2)

    def test_undefined_cases(self):
        with pytest.raises(ValueError):
            M.r2([1, 1], [1, 2])
        with pytest.raises(ValueError):
            M.accuracy([0, 0], [1, 1])
        with pytest.raises(ValueError):
            M.rmse([], [])
        with pytest.raises(ValueError):
            M.rmse([1, 2], [1, 2, 3])


@pytest.mark.parametrize("seed", range(100))
def test_metrics_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    shape = tuple(rng.integers(2, 5, size=3))
    y = rng.uniform(0, 1, size=shape)
    yh = y + rng.normal(0, 0.2, size=shape)
    got = M.compute_metrics(y, yh).to_dict()
    for key, value in brute(y, yh).items():
        assert abs(got[key] - value) <= 1e-12, key


def test_report_roundtrip_and_pooling():
    y = np.arange(12.0).reshape(3, 2, 2) + 1
    yh = y * 0.9
    rep = M.compute_metrics(y, yh)
    assert M.MetricsReport.from_dict(rep.to_dict()) == rep
    assert set(rep.to_dict()) >= {"rmse", "r2", "var", "mae", "accuracy"}
    steps = M.per_step_metrics(y, yh)
    assert len(steps) == 2
    assert steps[0].rmse == pytest.approx(M.rmse(y[:, 0], yh[:, 0]))


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 8, elements=finite), arrays(np.float64, 8, elements=finite),
       st.floats(0.1, 100).filter(lambda c: c != 0))
def test_properties(y, yh, c):
    assert M.mae(y, yh) <= M.rmse(y, yh) + 1e-12
    assert M.rmse(y, yh) >= 0
    if np.linalg.norm(y) > 1e-6:
        assert M.accuracy(y, yh) <= 1
        assert M.accuracy(c * y, c * yh) == pytest.approx(M.accuracy(y, yh), abs=1e-9)
    if np.var(y) > 1e-6:
        assert M.r2(y, yh) <= 1 + 1e-12
        assert M.var_score(y, yh) <= 1 + 1e-12

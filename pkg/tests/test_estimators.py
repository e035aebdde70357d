import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from apnls import APSeries, random_series
from apnls.estimators import BlowupSignClassifier, PicardSolver, StepSolver
from apnls.exceptions import DomainError
from apnls.validation import as_complex, check_coupling_mean_pairs, check_series


def test_params_and_clone():
    est = StepSolver(p=4, lam=[0, 1], dt=0.01, radius=3)
    params = est.get_params()
    assert params["p"] == 4 and params["lam"] == [0, 1] and params["radius"] == 3
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(dt=0.02)
    assert est.dt == 0.02


def test_picard_solver_constant_data(b1):
    est = PicardSolver(modulus=True, lam=1j, grid=256).fit(APSeries(b1, {0: 1}))
    assert est.window_ == pytest.approx(0.125 * 0.9)
    assert est.n_iter_ > 0
    t = est.trace_.times[-1]
    assert est.predict([0.0, 3.0]) == pytest.approx(np.full(2, 1 / (1 - t)), abs=1e-6)
    snaps = est.transform(est.trace_.times[:3])
    assert len(snaps) == 3 and snaps[0] == APSeries(b1, {0: 1})


def test_step_solver_both_directions(b1):
    f = APSeries(b1, {0: 1})
    fwd = StepSolver(modulus=True, lam=1j, dt=1e-3, blowup_norm_threshold=100).fit(f)
    assert fwd.halt_reason_ == "norm_threshold" and 0.99 < fwd.halt_time_ < 1.0
    back = StepSolver(modulus=True, lam=-1j, dt=1e-3, blowup_norm_threshold=100,
                      direction=-1).fit(f)
    assert back.halt_reason_ == "norm_threshold" and -1.0 < back.halt_time_ < -0.99
    assert back.predict([0.0], t=-0.5) == pytest.approx([2.0], rel=1e-6)
    with pytest.raises(ValueError):
        StepSolver(direction=0).fit(f)


def test_unfitted_and_bad_time(b1):
    with pytest.raises(NotFittedError):
        StepSolver().predict([0.0])
    est = StepSolver(dt=0.1, t_end=0.3).fit(APSeries(b1, {1: 0.1}))
    with pytest.raises(DomainError):
        est.predict([0.0], t=0.15)


def test_classifier():
    clf = BlowupSignClassifier().fit([[1j, 1]])
    assert set(clf.classes_) == {"ForwardFinite", "BackwardFinite", "BothTests", "Inconclusive"}
    X = np.array([[1j, 1], [1, 1j], [1j, 1j], [1 + 1j, 1 + 1j]])
    assert clf.predict(X).tolist() == ["ForwardFinite", "BackwardFinite", "Inconclusive",
                                       "BothTests"]
    real = np.array([[0, 1, 1, 0]])
    assert clf.predict(real).tolist() == ["ForwardFinite"]


def test_validation_helpers(b1, b2, rng):
    assert as_complex("1+2i") == 1 + 2j
    assert as_complex([0.5, -1]) == 0.5 - 1j
    with pytest.raises(TypeError):
        as_complex(True)
    with pytest.raises(TypeError):
        check_series({0: 1})
    assert check_series({0: 1}, b1) == APSeries(b1, {0: 1})
    with pytest.raises(ValueError):
        check_series(random_series(b2, 2, 1, rng), b1)
    with pytest.raises(ValueError):
        check_coupling_mean_pairs(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        check_coupling_mean_pairs([[np.nan, 1j]])

import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from relboltz.causal import flat_surface
from relboltz.collision import kernel_constant, kernel_hard_sphere
from relboltz.estimator import CausalReconstructor
from relboltz.phase_space import JuttnerField, ZeroField
from relboltz.process import SimConfig


def _rows():
    p = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, -0.3, 0.4]])
    e = np.sqrt(1 + np.sum(p * p, -1))
    m = np.tile([1.0, 0.0, 0.0, 0.0], (3, 1))
    return np.hstack([m, e[:, None], p])


def _model(mink, **kw):
    f = JuttnerField(2.0)
    return CausalReconstructor(chart=mink, background=f, kernel=kernel_hard_sphere(1.0, 15.0),
                               hypersurface=flat_surface(mink, 0.0), n_paths=200,
                               sim=SimConfig(chunk_size=128), seed=3, **kw)


def test_predict_before_fit(mink):
    with pytest.raises(NotFittedError):
        _model(mink).predict(_rows())


def test_fit_requires_field_and_parts(mink):
    with pytest.raises(TypeError):
        _model(mink).fit(np.zeros((3, 8)))
    with pytest.raises(ValueError):
        CausalReconstructor().fit(JuttnerField(1.0))


def test_equilibrium_prediction_exact(mink):
    f = JuttnerField(2.0)
    X = _rows()
    est, se = _model(mink).fit(f).predict(X, return_std=True)
    exact = f.eval(mink, X[:, :4], X[:, 4:])
    assert np.allclose(est, exact, rtol=1e-12)
    assert np.all(se <= 1e-12 * exact)


def test_rows_independent_of_call_split(mink):
    fin = JuttnerField(2.0, drift=[0.2, 0.0, 0.0])
    X = _rows()
    model = _model(mink).fit(fin)
    whole = model.predict(X)
    # row i always uses stream stream0 + i, so splitting needs a matching offset
    tail = clone(model).set_params(stream0=1).fit(fin).predict(X[1:])
    assert np.array_equal(whole[1:], tail)


def test_free_streaming_reconstruction(mink):
    fin = JuttnerField(2.0, drift=[0.2, 0.0, 0.0])
    model = CausalReconstructor(chart=mink, background=ZeroField(), kernel=kernel_constant(0.0),
                                hypersurface=flat_surface(mink, 0.0), n_paths=2).fit(fin)
    X = _rows()
    feet = X[:, :4] - X[:, 4:] / X[:, 4:5]
    assert np.allclose(model.predict(X), fin.eval(mink, feet, X[:, 4:]), rtol=1e-12)


def test_off_shell_rows_rejected(mink):
    model = _model(mink).fit(JuttnerField(2.0))
    X = _rows()
    X[0, 4] = 2.0
    with pytest.raises(Exception):
        model.predict(X)
    with pytest.raises(ValueError):
        model.predict(np.zeros((2, 7)))


def test_get_params_roundtrip(mink):
    m = _model(mink)
    assert m.get_params()["n_paths"] == 200
    assert clone(m).n_paths == 200

import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemosim.grid import build_grid
from chemosim.model import (Case, ClassificationError, FLaw, InitialData, ModelParams, classify, f_eval, f_rate,
                            params_from_dict, regularize_initial)


def P(m, alpha, kind, **kw):
    return ModelParams(m=m, alpha=alpha, f_kind=kind, **kw)


def test_classify_case_I():
    assert classify(P(1.5, 1.2, FLaw.ProductLaw)) is Case.I


def test_classify_case_II():
    assert classify(P(2.5, 2.0, FLaw.PowerLaw)) is Case.II


def test_classify_case_III():
    assert classify(P(3.5, 2.6, FLaw.PowerLaw)) is Case.III


def test_classify_rejects_upper_bound():
    with pytest.raises(ClassificationError, match=r"α < m/2\+1"):
        classify(P(2.5, 2.3, FLaw.PowerLaw))


@pytest.mark.parametrize("m,alpha,kind,needle", [
    (1.5, 0.5, FLaw.ProductLaw, "m−1 < α"),  # tie at lower bound
    (1.5, 1.5, FLaw.ProductLaw, "α < m"),  # tie at upper bound
    (2.0, 2.0, FLaw.PowerLaw, "α < m/2+1"),  # tie, alpha = m = m/2+1
    (3.0, 2.0, FLaw.PowerLaw, "m−1 < α"),
    (1.5, 1.2, FLaw.PowerLaw, "ProductLaw"),  # wrong law for case I
    (2.5, 2.0, FLaw.ProductLaw, "PowerLaw"),
    (4.0, 3.2, FLaw.PowerLaw, "m < 4"),
    (0.9, 0.5, FLaw.ProductLaw, "1 <= m"),
])
def test_classify_rejections_name_inequality(m, alpha, kind, needle):
    with pytest.raises(ClassificationError, match=re.escape(needle)):
        classify(P(m, alpha, kind))


def test_alpha_equal_m_message_cites_strict_window():
    with pytest.raises(ClassificationError) as e:
        classify(P(2.0, 2.0, FLaw.PowerLaw))
    assert "m−1 < α" in str(e.value) and "strict" in str(e.value)


def test_f_eval_examples():
    assert f_eval(0.0, ModelParams()) == 0.0
    assert f_eval(0.0, P(1.5, 1.2, FLaw.ProductLaw)) == 0.0
    assert f_eval(1.0, P(1.5, 1.5, FLaw.ProductLaw, Cf=2.0)) == pytest.approx(2 * math.sqrt(2), rel=1e-15)
    assert f_eval(3.0, P(2.5, 2.0, FLaw.PowerLaw)) == 9.0


def test_f_eval_rejects_negative():
    with pytest.raises(ValueError):
        f_eval(-1e-3, ModelParams())


def test_f_rate_bounds_difference_quotient():
    # rate must dominate both f(u)/u and the secant slope near u
    for p in (P(1.5, 1.2, FLaw.ProductLaw), P(2.5, 2.0, FLaw.PowerLaw), P(1.5, 0.7, FLaw.ProductLaw)):
        u = np.linspace(1e-3, 5, 200)
        r = f_rate(u, p)
        assert np.all(r >= f_eval(u, p) / u - 1e-12)
        du = 1e-7
        assert np.all(r >= (f_eval(u + du, p) - f_eval(u, p)) / du - 1e-5)


def test_regularize_examples():
    g = build_grid(4, 4)
    data = InitialData(np.ones(g.shape), np.ones(g.shape))
    np.testing.assert_array_equal(regularize_initial(data, ModelParams(m=2, alpha=1.5, epsilon=0.01)), 1.01)
    np.testing.assert_array_equal(regularize_initial(data, ModelParams(m=3.5, alpha=2.6, epsilon=0.01)), 1.0)
    u0 = np.ones(g.shape)
    u0[0, 0] = 0.0
    out = regularize_initial(InitialData(u0, np.ones(g.shape)), ModelParams(m=2, alpha=1.5, epsilon=1e-3))
    assert out.min() == 1e-3


def test_regularize_does_not_mutate():
    g = build_grid(4, 4)
    u0 = np.ones(g.shape)
    regularize_initial(InitialData(u0, u0), ModelParams())
    assert (u0 == 1).all()


def test_initial_data_validation():
    g = build_grid(4, 4)
    ones = np.ones(g.shape)
    with pytest.raises(ValueError, match="nonnegative"):
        InitialData(-ones, ones).validate(g)
    with pytest.raises(ValueError, match="vanish"):
        InitialData(0 * ones, ones).validate(g)
    with pytest.raises(ValueError, match="positive"):
        InitialData(ones, 0 * ones).validate(g)
    u0 = ones.copy()
    u0[1, 1] = 0
    InitialData(u0, ones).validate(g, Case.II)
    with pytest.raises(ValueError, match="case III"):
        InitialData(u0, ones).validate(g, Case.III)


@pytest.mark.parametrize("kw", [dict(ell=-1), dict(Cf=0), dict(epsilon=0), dict(epsilon=1), dict(m=float("nan"))])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ModelParams(**kw)


def test_params_from_dict_unknown_key():
    with pytest.raises(KeyError, match="model.alpah: unknown key"):
        params_from_dict({"m": 2, "alpah": 1.5})


def test_params_roundtrip():
    p = P(1.5, 1.2, FLaw.ProductLaw, ell=0.5, Cf=2.0, epsilon=0.01)
    assert params_from_dict(p.to_dict()) == p


@settings(max_examples=300, deadline=None)
@given(st.floats(1.0, 4.0, exclude_max=True), st.floats(0.0, 4.0, exclude_min=True, exclude_max=True),
       st.sampled_from(list(FLaw)))
def test_prop_classify_total(m, alpha, kind):
    p = P(m, alpha, kind)
    try:
        case = classify(p)
    except ClassificationError:
        law = FLaw.ProductLaw if m < 2 else FLaw.PowerLaw
        upper = m if m < 2 else m / 2 + 1
        assert kind is not law or not (m - 1 < alpha < upper)
        return
    expected = Case.I if m < 2 else Case.II if m < 3 else Case.III
    assert case is expected
    assert m - 1 < alpha < (m if m < 2 else m / 2 + 1)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 3.0), st.sampled_from(list(FLaw)), st.floats(0.1, 5.0))
def test_prop_f_monotone(alpha, kind, cf):
    p = ModelParams(m=2, alpha=alpha, f_kind=kind, Cf=cf)
    u = np.concatenate([[0.0], np.geomspace(1e-6, 1e3, 200)])
    assert np.all(np.diff(f_eval(u, p)) >= 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1e3), st.floats(0.1, 3.0), st.floats(0.1, 5.0))
def test_prop_f_saturates_growth_bound(u, alpha, cf):
    prod = ModelParams(m=2, alpha=alpha, f_kind=FLaw.ProductLaw, Cf=cf)
    power = ModelParams(m=2, alpha=alpha, f_kind=FLaw.PowerLaw, Cf=cf)
    assert f_eval(u, prod) == pytest.approx(cf * u * (u + 1.0) ** (alpha - 1.0), rel=1e-14)
    assert f_eval(u, power) == pytest.approx(cf * u ** alpha, rel=1e-14)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from strategies import db_markets

from tatonnement.errors import MarketError
from tatonnement.generators import gen_price_chain, random_db_coefficients
from tatonnement.market import (Market, market_from_coefficients, normalize_market, potentials,
                                row_normalize, validate)


# -- normalize_market -----------------------------------------------------------

@pytest.mark.parametrize("c_raw, delta", [
    ([[0, 1], [1, 0]], 1.0),
    ([[0, 2], [3, 0]], 1.0),
    ([[0, 4], [9, 0]], 0.5),
])
def test_normalize_two_node(c_raw, delta):
    m = normalize_market(np.array(c_raw, float), np.ones(2), delta)
    np.testing.assert_array_equal(m.C, [[0, 1], [1, 0]])


def test_normalize_folds_supplies_then_exponentiates():
    s = np.array([1.0, 2.0, 4.0])
    delta = 0.7
    phi = np.array([1.0, 2.0, 0.5])
    S = np.array([[1.0, 3.0, 0.0], [3.0, 2.0, 5.0], [0.0, 5.0, 1.0]])
    target = S / phi[:, None]
    c_raw = target ** (1 / delta) / s[None, :]
    m = normalize_market(c_raw, s, delta)
    expected = row_normalize(target)
    np.testing.assert_allclose(m.C, expected, rtol=1e-12)
    for i in range(3):
        assert m.C[i][m.C[i] > 0].min() == pytest.approx(1.0, abs=1e-15)


def test_normalize_is_idempotent():
    rng = np.random.default_rng(5)
    C, _ = random_db_coefficients(7, 0.5, rng)
    m = market_from_coefficients(C, 1.3)
    again = market_from_coefficients(m.C, 1.3)
    np.testing.assert_allclose(again.C, m.C, rtol=0, atol=1e-15)


def test_normalize_rejects_zero_row_and_bad_inputs():
    with pytest.raises(MarketError) as e:
        normalize_market(np.array([[0.0, 1.0], [0.0, 0.0]]), None, 1.0)
    assert e.value.condition == "connectedness"
    with pytest.raises(MarketError):
        normalize_market(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0, -1.0]), 1.0)
    with pytest.raises(MarketError):
        normalize_market(np.array([[0.0, 1.0], [1.0, 0.0]]), None, 0.0)
    with pytest.raises(MarketError) as e:
        normalize_market(np.array([[0.0, -1.0], [1.0, 0.0]]), None, 1.0)
    assert e.value.condition == "nonnegativity"


def test_normalize_reports_first_violated_condition():
    C = np.array([[0, 2, 1], [1, 0, 2], [2, 1, 0]], float)
    with pytest.raises(MarketError) as e:
        normalize_market(C, None, 1.0)
    assert e.value.condition == "circulation_free"


def test_market_constructor_shape_checks():
    with pytest.raises(MarketError):
        Market(np.ones((2, 3)), 1.0)
    with pytest.raises(MarketError):
        Market(np.ones((1, 1)), 1.0)
    m = Market([[0, 1], [1, 0]], 1)
    assert m.n == 2 and isinstance(m.delta, float)
    with pytest.raises(ValueError):
        m.C[0, 0] = 3.0


# -- validate -----------------------------------------------------------------

def test_validate_two_node_passes():
    rep = validate(Market([[0, 1], [1, 0]], 1.0))
    assert rep.passed and rep.first_failure is None
    assert [c.name for c in rep.checks] == ["nonnegativity", "weak_undirectedness", "connectedness",
                                            "circulation_free", "row_normalization"]


def test_validate_asymmetric_support():
    rep = validate(Market([[0, 1], [0, 0]], 1.0))
    assert not rep["weak_undirectedness"].passed
    assert rep["weak_undirectedness"].witness == [0, 1]
    assert rep.first_failure.name == "weak_undirectedness"


def test_validate_circulation_witness():
    C = np.array([[0, 2, 1], [1, 0, 2], [2, 1, 0]], float)
    rep = validate(Market(C, 1.0))
    check = rep["circulation_free"]
    assert not check.passed
    w = check.witness
    prods = sorted([w["forward_product"], w["backward_product"]])
    assert prods == pytest.approx([1.0, 8.0])
    assert w["cycle"][0] == w["cycle"][-1] and len(set(w["cycle"])) == 3


def test_validate_disconnected_and_negative():
    C = np.zeros((4, 4))
    C[0, 1] = C[1, 0] = C[2, 3] = C[3, 2] = 1
    rep = validate(Market(C, 1.0))
    assert not rep["connectedness"].passed
    assert "not evaluated" in rep["circulation_free"].message
    rep = validate(Market([[0, -1], [1, 0]], 1.0))
    assert not rep["nonnegativity"].passed


def test_validate_row_normalization():
    rep = validate(Market([[0, 2], [1, 0]], 1.0))
    assert not rep["row_normalization"].passed
    assert rep["row_normalization"].witness == [0]


def test_validate_report_to_dict():
    d = validate(Market([[0, 1], [0, 0]], 1.0)).to_dict()
    assert d["passed"] is False
    assert {c["name"] for c in d["checks"]} >= {"nonnegativity", "weak_undirectedness"}


# -- potentials -----------------------------------------------------------------

def test_potentials_symmetric_market():
    C = np.array([[1, 1, 2], [1, 0, 3], [2, 3, 1]], float)
    pot = potentials(Market(C, 1.0))
    np.testing.assert_allclose(pot.psi, 1.0)
    assert pot.psi_tilde == 1.0


def test_potentials_gamma_triangle():
    C = np.ones((3, 3)) - np.eye(3)
    assert potentials(Market(C, 1.0)).gamma == 2.0
    assert potentials(Market(np.ones((3, 3)), 1.0)).gamma == 3.0


def test_potentials_chain_path_products():
    # coefficients a^(j-i) on the chain before row rescaling: psi_j = a^(2j)
    a, n = 1.7, 6
    C = np.zeros((n, n))
    for i in range(n):
        for j in (i - 1, i, i + 1):
            if 0 <= j < n:
                C[i, j] = a ** (j - i)
    pot = potentials(Market(C, 1.0))
    np.testing.assert_allclose(pot.psi, a ** (2.0 * np.arange(n)), rtol=1e-12)
    assert pot.psi_tilde == pytest.approx(a ** (2 * (n - 1)), rel=1e-12)
    assert pot.base_vertex == 0


def test_potentials_normalized_chain_edge_effect():
    # after row rescaling only the two end edges change ratio: psi_tilde = a^(2n-3)
    a, n = 2.0, 7
    pot = potentials(gen_price_chain(n, a))
    assert pot.psi_tilde == pytest.approx(a ** (2 * n - 3), rel=1e-12)


def test_potentials_rejects_circulation_with_edge():
    C = np.array([[0, 2, 1], [1, 0, 2], [2, 1, 0]], float)
    with pytest.raises(MarketError) as e:
        potentials(Market(C, 1.0))
    assert e.value.condition == "circulation_free"
    assert e.value.witness is not None


def test_potentials_rejects_disconnected():
    C = np.zeros((4, 4))
    C[0, 1] = C[1, 0] = C[2, 3] = C[3, 2] = 1
    with pytest.raises(MarketError):
        potentials(Market(C, 1.0))


def test_potentials_match_construction():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(3, 12))
        C, phi = random_db_coefficients(n, 0.4, rng, phi_spread=2.0)
        pot = potentials(Market(C, 1.0))
        np.testing.assert_allclose(pot.psi, phi / phi.min(), rtol=1e-9)


@settings(max_examples=60, deadline=None)
@given(db_markets())
def test_property_edge_identity_and_bounds(m):
    pot = potentials(m)
    assert validate(m).passed
    i, j = np.nonzero(m.C > 0)
    lhs, rhs = pot.psi[i] * m.C[i, j], pot.psi[j] * m.C[j, i]
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9)
    assert pot.psi.min() == 1.0 and pot.psi[pot.base_vertex] == 1.0
    assert pot.psi_tilde == pot.psi.max()
    assert pot.gamma >= 1.0


@settings(max_examples=40, deadline=None)
@given(db_markets(), st.randoms(use_true_random=False))
def test_property_potentials_tree_independent(m, rnd):
    # relabeling vertices changes the BFS tree; normalized psi must follow the labels
    perm = np.array(rnd.sample(range(m.n), m.n))
    mp = Market(m.C[np.ix_(perm, perm)], m.delta)
    np.testing.assert_allclose(potentials(mp).psi, potentials(m).psi[perm], rtol=1e-9)

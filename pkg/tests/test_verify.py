import numpy as np
import pytest

from byzsim import verify


def test_ratio_closed_form():
    assert verify.variance_ratio_theory(0.1) == pytest.approx(1.81 / 3.61, rel=1e-15)
    assert verify.variance_ratio_theory(1e-9) == pytest.approx(0.5, abs=1e-9)


def test_ratio_monotone_and_bounded():
    etas = np.linspace(1e-3, 1 - 1e-3, 1000)
    r = np.array([verify.variance_ratio_theory(e) for e in etas])
    assert np.all(np.diff(r) > 0)
    assert r.min() >= 0.5 and r.max() < 1


def test_single_momentum_var():
    assert verify.single_momentum_var_theory(1.0) == 1.0
    assert verify.single_momentum_var_theory(0.1) == pytest.approx(0.052632, abs=1e-6)
    assert verify.single_momentum_var_theory(2 / 3) == pytest.approx(0.5, rel=1e-15)


def test_double_momentum_var_is_product():
    for eta in (0.1, 0.4, 0.9):
        assert verify.double_momentum_var_theory(eta) == pytest.approx(
            verify.single_momentum_var_theory(eta) * verify.variance_ratio_theory(eta), rel=1e-14
        )


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.5])
def test_ratio_domain(bad):
    with pytest.raises(ValueError):
        verify.variance_ratio_theory(bad)


@pytest.mark.parametrize("eta", [0.1, 0.5])
def test_mc_chains(eta):
    st = verify.mc_momentum_chains(eta, 1.0, 10**6, 0)
    assert abs(st.var_v / verify.single_momentum_var_theory(eta) - 1) < 0.05
    assert abs(st.ratio / verify.variance_ratio_theory(eta) - 1) < 0.05


def test_mc_noiseless():
    st = verify.mc_momentum_chains(0.1, 0.0, 1000, 0)
    assert st.var_v == 0.0 and st.var_u == 0.0


def test_mc_short_horizon():
    with pytest.raises(ValueError):
        verify.mc_momentum_chains(0.1, 1.0, 50, 0)


def test_geomedian_examples():
    assert abs(verify.geomedian_oracle([[0.0], [0.0], [10.0]])[0]) <= 1e-6
    square = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]) + [3.0, -2.0]
    assert np.allclose(verify.geomedian_oracle(square), [3.0, -2.0], atol=1e-12)


def test_geomedian_improves_on_mean(rng):
    for _ in range(10):
        P = rng.standard_normal((7, 3)) ** 3
        z = verify.geomedian_oracle(P)
        assert verify.geomedian_objective(P, z) <= verify.geomedian_objective(P, P.mean(axis=0))


def test_oracles_on_known_cases():
    assert verify.cwtm_oracle([[0], [1], [2], [3], [4]], 1) == [2.0]
    assert verify.nnm_oracle([[0], [1], [10]], 1) == [[0.5], [0.5], [5.5]]
    assert verify.median_oracle([[1], [2], [3], [4]]) == [2.5]


def test_run_checks_all_pass():
    checks = verify.run_checks()
    assert [c.name for c in checks if not c.passed] == []

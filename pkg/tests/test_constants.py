import math

import numpy as np
import pytest

from pullin.constants import (
    BoundaryPair,
    ProblemParams,
    biharmonic_extension,
    c0,
    critical_exponent_residual,
    critical_exponents,
    hn,
    k0,
    k1,
    radial_power_bilap_coeff,
    subsolution_coeffs,
)


def test_params_validation():
    ProblemParams(1, 1.5)
    with pytest.raises(ValueError):
        ProblemParams(0, 2.0)
    with pytest.raises(ValueError):
        ProblemParams(3, 1.0)
    with pytest.raises(ValueError):
        ProblemParams(3.5, 2.0)


def test_k0_exact_values():
    # hand evaluation: q = 4/3, K0 = q(2-q)(3-(2-q))(3-(4-q)) = 56/81
    assert k0(ProblemParams(3, 2.0)) == pytest.approx(56.0 / 81.0, rel=1e-15)
    # q = 4/3, n = 13: (4/3)(2/3)(37/3)(31/3) = 9176/81
    assert k0(ProblemParams(13, 2.0)) == pytest.approx(9176.0 / 81.0, rel=1e-15)


def test_k0_matches_power_rule():
    # K0 is minus the quartic power coefficient at the profile exponent
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        p = float(10 ** rng.uniform(0.01, 5))
        if p <= 1:
            continue
        params = ProblemParams(n, p)
        alpha = params.singular_power
        assert -radial_power_bilap_coeff(alpha, n) == pytest.approx(
            k0(params), rel=1e-12, abs=1e-300
        )


def test_k0_large_p_asymptotics():
    errors = [
        abs(p * k0(ProblemParams(13, p)) - 8 * 11 * 9) for p in (1e3, 1e4, 1e5)
    ]
    assert errors[0] > errors[1] > errors[2]
    assert abs(1e6 * k0(ProblemParams(13, 1e6)) - 792.0) / 792.0 < 1e-3


def test_k0_degenerate_factor():
    assert k0(ProblemParams(4, 1.0 + 1e-12)) == pytest.approx(0.0, abs=1e-10)


def test_hn_values():
    assert hn(4) == 0.0
    assert hn(13) == pytest.approx(855.5625, rel=1e-15)
    assert hn(8) == pytest.approx(64.0, rel=1e-15)


def test_k1_values():
    assert k1(2.0, 7) == 0.0
    assert k1(3.5, 13) == pytest.approx(951.5625, rel=1e-15)
    assert k1(4.0, 3) == pytest.approx(120.0, rel=1e-15)
    with pytest.raises(ValueError):
        k1(-1.0, 5)


def test_critical_exponents_residuals():
    for n in range(3, 41):
        if n == 4:
            continue
        crit = critical_exponents(n)
        assert abs(critical_exponent_residual(crit.p_c, n)) < 1e-10
        assert crit.p_c_plus is not None
        assert abs(critical_exponent_residual(crit.p_c_plus, n)) < 1e-10


def test_critical_exponents_n4():
    crit = critical_exponents(4)
    assert crit.p_c_plus is None
    assert not crit.has_plus
    assert math.isfinite(crit.p_c)


def test_critical_exponents_n3_ordering():
    crit = critical_exponents(3)
    assert crit.p_c_plus < crit.p_c


def test_critical_exponents_rejects_small_n():
    with pytest.raises(ValueError):
        critical_exponents(2)


def test_subsolution_coeffs_closed_case():
    a1, a2 = subsolution_coeffs(2.0, 3.0)
    assert a1 == pytest.approx(2.0, rel=1e-15)
    assert a2 == pytest.approx(1.0, rel=1e-15)


def test_subsolution_coeffs_difference_identity():
    rng = np.random.default_rng(11)
    for _ in range(200):
        p = float(10 ** rng.uniform(math.log10(1.1), 4))
        m = float(rng.uniform(4.0 / (p + 1.0) + 0.1, 10.0))
        a1, a2 = subsolution_coeffs(m, p)
        assert a1 - a2 == pytest.approx(1.0, abs=1e-12)


def test_subsolution_coeffs_large_p():
    p = 1e4
    a1, _ = subsolution_coeffs(2.0, p)
    assert abs(a1 - (1.0 + 4.0 / ((p + 1.0) * 2.0))) < 1e-3 / p


def test_subsolution_coeffs_rejects_small_m():
    with pytest.raises(ValueError):
        subsolution_coeffs(0.5, 3.0)  # 4/(p+1) = 1 > 0.5


def test_c0_values():
    params = ProblemParams(13, 2.0)
    base = k0(params)
    assert c0(base, params) == pytest.approx(1.0, rel=1e-15)
    assert c0(2.0 * base, params) == pytest.approx(2.0 ** (1.0 / 3.0), rel=1e-14)
    assert c0(3.0 * base, params) > c0(2.0 * base, params)
    with pytest.raises(ValueError):
        c0(-1.0, params)


def test_biharmonic_extension_cases():
    zero = biharmonic_extension(BoundaryPair(0.0, 0.0))
    assert zero(0.3) == 0.0

    phi = biharmonic_extension(BoundaryPair(1.0, -2.0))
    r = np.linspace(0, 1, 5)
    assert np.allclose(phi(r), 2.0 - r**2)
    assert not BoundaryPair(1.0, -2.0).admissible

    bc = BoundaryPair(0.0, -1.0)  # matches the singular profile at p = 3
    phi = biharmonic_extension(bc)
    assert np.allclose(phi(r), 0.5 - 0.5 * r**2)
    assert bc.admissible


def test_biharmonic_extension_reproduces_data():
    rng = np.random.default_rng(3)
    for _ in range(20):
        bc = BoundaryPair(float(rng.normal()), float(rng.normal()))
        phi = biharmonic_extension(bc)
        assert phi(1.0) == pytest.approx(bc.alpha, abs=1e-15)
        assert phi.derivative(1.0) == pytest.approx(bc.gamma, abs=1e-15)

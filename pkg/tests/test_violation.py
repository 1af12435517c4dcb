import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from gmnl.expressions import compose_qutrit_tripartite, improved00, ineq_i1
from gmnl.scenario import PureState, born_behavior, ghz_state, mix_white_noise
from gmnl.violation import (CanonicalThreeQubit, MeasurementModel, OptimizationConfig,
                            SignChangeError, alpha_closed_form, appendix_kets,
                            appendix_measurements, appendix_probabilities, canonical_sample,
                            canonicalize, e_zero_closed_form, noise_value, optimize_violation,
                            qubit_kets, root_function, solve_alpha, su_generators, unitaries,
                            verify_theorem2)

seeds = st.integers(0, 2**32 - 1)


def local_rotation(psi: PureState, seed: int) -> PureState:
    us = [unitary_group.rvs(2, random_state=seed + k) for k in range(3)]
    t = np.einsum("ai,bj,ck,ijk->abc", *us, psi.tensor())
    return PureState(3, 2, t.ravel())


# --- canonical states ------------------------------------------------------------

def test_canonical_validation():
    with pytest.raises(ValueError):
        CanonicalThreeQubit(0.5, 0.5, 0.5, 0.5, 0.1)
    with pytest.raises(ValueError):
        CanonicalThreeQubit(0.1, 0.7, 0.7, 0.1, 0.0)
    with pytest.raises(ValueError):
        CanonicalThreeQubit(1.0, -0.0001, 0.0, 0.0, 0.0)


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_canonical_sample_invariants(seed):
    st_ = canonical_sample(np.random.default_rng(seed))
    c = np.array(st_.coefficients)
    assert abs(np.sum(c**2) - 1) < 1e-12
    assert c[0] >= c[1:].max() and st_.is_nonsymmetric(1e-6)
    assert np.linalg.norm(st_.state().amplitudes) == pytest.approx(1)


# --- explicit measurements --------------------------------------------------------

@given(seeds, st.floats(0, math.pi / 2))
@settings(max_examples=60, deadline=None)
def test_appendix_measurements_complete(seed, alpha):
    st_ = canonical_sample(np.random.default_rng(seed))
    meas = appendix_measurements(st_, alpha)     # validates completeness and positivity
    eff = meas.effects
    assert np.allclose(eff.sum(axis=2), np.eye(2), atol=1e-12)
    assert np.allclose(eff[:, :, 0] @ eff[:, :, 0], eff[:, :, 0], atol=1e-12)
    kets = appendix_kets(st_, alpha)
    assert np.allclose(np.linalg.norm(kets, axis=-1), 1, atol=1e-12)


@given(seeds, st.floats(0.01, math.pi / 2 - 0.01))
@settings(max_examples=80, deadline=None)
def test_closed_form_probabilities(seed, alpha):
    st_ = canonical_sample(np.random.default_rng(seed))
    b = born_behavior(st_.state(), appendix_measurements(st_, alpha))
    closed = appendix_probabilities(st_, alpha)
    assert b[(0, 0, 0), (0, 0, 0)] == pytest.approx(closed["000|000"], abs=1e-10)
    assert b[(1, 0, 0), (1, 0, 0)] == pytest.approx(closed["100|100"], abs=1e-10)
    assert b[(0, 0, 0), (1, 1, 0)] == pytest.approx(closed["000|110"], abs=1e-10)
    # these terms vanish identically for this construction
    for a, x in [((0, 0, 1), (0, 0, 1)), ((0, 1, 0), (0, 1, 0)), ((0, 0, 0), (1, 0, 1))]:
        assert b[a, x] == pytest.approx(0.0, abs=1e-12)


@given(seeds)
@settings(max_examples=60, deadline=None)
def test_root_function_endpoint_signs(seed):
    st_ = canonical_sample(np.random.default_rng(seed))
    a, b, c, e = st_.a, st_.b, st_.c, st_.e
    assert root_function(st_, 0.0) == pytest.approx(a * a * e * b, abs=1e-15)
    assert root_function(st_, math.pi / 2) == pytest.approx(-b * c * c * e, abs=1e-15)


@given(seeds)
@settings(max_examples=60, deadline=None)
def test_solve_alpha_root(seed):
    st_ = canonical_sample(np.random.default_rng(seed))
    alpha = solve_alpha(st_)
    assert 0 < alpha < math.pi / 2
    assert abs(root_function(st_, alpha)) <= 1e-12
    closed = alpha_closed_form(st_)
    if closed is not None:
        assert alpha == pytest.approx(closed, abs=1e-8)
    b = born_behavior(st_.state(), appendix_measurements(st_, alpha))
    assert b[(0, 0, 0), (1, 1, 0)] <= 1e-10


def test_solve_alpha_zero_e_and_errors():
    st_ = canonical_sample(np.random.default_rng(1), zero_e=True)
    assert solve_alpha(st_) == math.pi / 4
    with pytest.raises(ValueError):
        appendix_kets(st_, 2.0)
    # no sign change when c = 0
    flat = CanonicalThreeQubit(math.sqrt(0.5), math.sqrt(0.3), 0.0, 0.0, math.sqrt(0.2))
    with pytest.raises(SignChangeError):
        solve_alpha(flat)


@given(seeds)
@settings(max_examples=100, deadline=None)
def test_theorem2_margin_positive(seed):
    st_ = canonical_sample(np.random.default_rng(seed), margin=1e-4)
    res = verify_theorem2(st_)
    assert res.margin > 0
    assert res.margin == pytest.approx(res.closed_form_margin, abs=1e-10)


@given(seeds)
@settings(max_examples=60, deadline=None)
def test_theorem2_zero_e_closed_form(seed):
    st_ = canonical_sample(np.random.default_rng(seed), zero_e=True, margin=1e-4)
    assert e_zero_closed_form(st_) > 0
    res = verify_theorem2(st_)
    assert res.margin > 0
    assert res.margin == pytest.approx(res.closed_form_margin, abs=1e-12)


def test_margin_independent_of_phase():
    rng = np.random.default_rng(11)
    for zero_e in (True, False):
        base = canonical_sample(rng, zero_e=zero_e)
        margins = []
        for phi in np.linspace(0, 2 * np.pi, 13):
            st_ = CanonicalThreeQubit(*base.coefficients, phi=float(phi))
            margins.append(verify_theorem2(st_).margin)
        assert np.ptp(margins) < 1e-13


# --- canonicalization -------------------------------------------------------------

def test_canonicalize_ghz():
    form = canonicalize(ghz_state(3, 2))
    c = form.coefficients
    assert c.a == pytest.approx(1 / math.sqrt(2), abs=1e-9)
    assert c.e == pytest.approx(1 / math.sqrt(2), abs=1e-9)
    assert max(c.b, c.c, c.d) < 1e-9


def test_canonicalize_fixed_point():
    # with a dominant |000> the canonical input is already the max-overlap form
    rng = np.random.default_rng(4)
    for _ in range(10):
        rest = np.abs(rng.standard_normal(4)) * 0.15
        b, c, d = sorted(rest[:3], reverse=True)
        a = math.sqrt(1 - np.sum(rest**2))
        st_ = CanonicalThreeQubit(a, b, c, d, rest[3], phi=float(rng.uniform(0, np.pi)))
        form = canonicalize(st_.state())
        assert np.allclose(form.coefficients.coefficients, st_.coefficients, atol=1e-7)
        assert abs(np.exp(1j * form.coefficients.phi) - np.exp(1j * st_.phi)) < 1e-6


@given(seeds, st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_canonicalize_roundtrip(seed, useed):
    st_ = canonical_sample(np.random.default_rng(seed))
    psi = st_.state()
    f0 = canonicalize(psi).coefficients
    f1 = canonicalize(local_rotation(psi, useed)).coefficients
    assert np.allclose(f0.coefficients, f1.coefficients, atol=1e-6)
    assert abs(np.exp(1j * f0.phi) - np.exp(1j * f1.phi)) < 1e-5 or f0.a * f0.b * f0.c * f0.d * f0.e < 1e-6


def test_canonicalize_output_supports_theorem2():
    rng = np.random.default_rng(2)
    for i in range(5):
        st_ = canonical_sample(rng)
        form = canonicalize(local_rotation(st_.state(), 100 + i))
        c = form.coefficients
        assert form.residual <= 1e-8
        assert c.b >= c.c >= c.d
        if c.is_nonsymmetric(1e-4):
            assert verify_theorem2(c).margin > 0


# --- parametrizations and the optimizer -----------------------------------------

def test_qubit_kets_normalized():
    ang = np.random.default_rng(0).uniform(-5, 5, (10, 2))
    assert np.allclose(np.linalg.norm(qubit_kets(ang), axis=-1), 1)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_su_generators_and_unitaries(d):
    g = su_generators(d)
    assert g.shape == (d * d - 1, d, d)
    assert np.allclose(g, g.conj().transpose(0, 2, 1))
    assert np.allclose(np.trace(g, axis1=1, axis2=2), 0)
    gram = np.einsum("aij,bji->ab", g, g).real
    assert np.allclose(gram, 2 * np.eye(d * d - 1))
    U = unitaries(np.random.default_rng(1).uniform(-3, 3, (5, d * d - 1)), g)
    assert np.allclose(U @ U.conj().transpose(0, 2, 1), np.eye(d), atol=1e-12)


@pytest.mark.parametrize("n,d,tie", [(3, 2, False), (4, 2, True), (3, 3, False)])
def test_measurement_model(n, d, tie):
    model = MeasurementModel(n, 2, d, tie)
    p = np.random.default_rng(2).uniform(-3, 3, model.size)
    meas = model.measurements(p)
    assert meas.effects.shape == (n, 2, d, d, d)
    if tie:
        assert np.allclose(meas.effects[1], meas.effects[-1])


def test_noise_value():
    assert noise_value(improved00(3).margin_expression()) == pytest.approx(-0.5)
    _, star = compose_qutrit_tripartite()
    assert noise_value(star.margin_expression()) == pytest.approx(-24 / 27)


def test_optimizer_deterministic_and_nested():
    ineq = improved00(3)
    cfg3 = OptimizationConfig(restarts=3, seed=42)
    cfg6 = OptimizationConfig(restarts=6, seed=42)
    r3 = optimize_violation(ineq, ghz_state(3, 2), cfg3, tie_parties=True)
    r3b = optimize_violation(ineq, ghz_state(3, 2), cfg3, tie_parties=True)
    r6 = optimize_violation(ineq, ghz_state(3, 2), cfg6, tie_parties=True)
    assert r3.restart_values == r3b.restart_values
    assert np.array_equal(r3.params, r3b.params)
    assert r6.restart_values[:3] == r3.restart_values
    assert r6.value >= r3.value
    prefix = r6.prefix_best()
    assert all(x <= y for x, y in zip(prefix, prefix[1:]))


def test_improved00_ghz_violation_and_noise_path():
    res = optimize_violation(improved00(3), ghz_state(3, 2), OptimizationConfig(restarts=8),
                             tie_parties=True)
    # optimum (sqrt5 - 2)/4 gives the threshold 1 - 2/sqrt5 with noise value -1/2
    assert res.value == pytest.approx((math.sqrt(5) - 2) / 4, abs=1e-6)
    q = 0.08
    noisy = optimize_violation(improved00(3), ghz_state(3, 2), OptimizationConfig(restarts=1),
                               tie_parties=True, starts=[res.params], noise=q)
    direct = improved00(3).margin(born_behavior(mix_white_noise(ghz_state(3, 2), q),
                                                res.measurements))
    assert direct == pytest.approx((1 - q) * res.value - q / 2, abs=1e-12)
    assert noisy.value >= direct - 1e-12


def test_i1_not_violated_at_ten_percent_noise():
    res = optimize_violation(ineq_i1(3), ghz_state(3, 2), OptimizationConfig(restarts=10),
                             tie_parties=True, noise=0.10)
    assert res.value <= 0


def test_optimizer_rejects_mismatched_state():
    with pytest.raises(ValueError):
        optimize_violation(improved00(3), ghz_state(4, 2), OptimizationConfig(restarts=1))
    with pytest.raises(ValueError):
        OptimizationConfig(restarts=0)


def test_method_option():
    with pytest.raises(ValueError):
        OptimizationConfig(method="bfgs")
    cfg = OptimizationConfig(restarts=2, seed=3, method="lbfgs-nm")
    assert cfg.digest() != OptimizationConfig(restarts=2, seed=3).digest()
    res = optimize_violation(improved00(3), ghz_state(3, 2), cfg, tie_parties=True)
    assert res.value == pytest.approx((5 ** 0.5 - 2) / 4, abs=1e-6)

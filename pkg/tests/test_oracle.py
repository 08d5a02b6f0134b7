import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path to import from qesdx
sys.path.insert(0, str(Path(__file__).parent.parent))

from qesdx.exceptions import DomainError, PoleError
from qesdx.models.jobs import NumerovConfig
from qesdx.services import oracle
from qesdx.services.darboux import (
    FirstOrderOp,
    classify_chain,
    first_order,
    random_test_wave,
    reducible_chain,
    second_order,
)
from qesdx.services.qpoly import (
    PolyC,
    QuasiWave,
    RationalPotential,
    RationalT,
    Superpotential,
    poly_roots,
)
from qesdx.services.sextic import (
    build_model,
    complex_solutions,
    qes_spectrum,
)

ROOT5 = math.sqrt(5)


@pytest.fixture(scope="module")
def model():
    return build_model(0.5, 2, 2)


@pytest.fixture(scope="module")
def spectrum(model):
    return qes_spectrum(model)


def _nu2() -> RationalPotential:
    quartic = poly_roots(PolyC([20, 0, 4, 0, 1]))
    return RationalPotential(
        RationalT(PolyC([0, 1, 0, 0.25]))
        + RationalT.inverse_t_power(1, 0.75)
        + RationalT(PolyC([0, -96, 0, 16]), quartic)
        + RationalT(PolyC([0, 0, 0, -2048]), quartic + quartic)
    )


def test_residual_of_ground_state(model, spectrum):
    psi0 = spectrum[0].wave
    assert oracle.residual(model.V0, -12.0, psi0).passed
    shifted = oracle.residual(model.V0, -12.0 + 0.1, psi0)
    assert not shifted.passed
    assert shifted.max_norm_coeff > 1e-4


def test_residual_of_printed_transformed_state():
    quartic = poly_roots(PolyC([20, 0, 4, 0, 1]))
    state = QuasiWave(1.0, 0.5, 1, 1.5, RationalT([6, 0, 1], quartic))
    assert oracle.residual(_nu2(), 0.0, state).passed
    x = np.linspace(0.3, 2.5, 12)
    assert oracle.sampled_residual(_nu2(), 0.0, state, x) < 1e-9


def test_residual_rejects_zero_function(model):
    with pytest.raises(DomainError):
        oracle.residual(model.V0, 0.0, QuasiWave(0.0, 0.5, 1, 0.0))


def test_intertwining_of_first_order_step(model, spectrum):
    op, V1 = first_order(model, spectrum[0].wave, spectrum[0].energy)
    assert oracle.intertwine_check(op, model.V0, V1, spectrum[2].wave).passed
    bent = V1 + RationalT(PolyC([0, 0.01]))
    report = oracle.intertwine_check(op, model.V0, bent, spectrum[2].wave)
    assert not report.passed


def test_intertwining_holds_for_arbitrary_functions(model, spectrum):
    op = second_order(model, spectrum[0], spectrum[1])
    f = QuasiWave(1.0, 0.5, 1, 1.5, RationalT(PolyC([1, 0, 0, 1])))
    assert oracle.intertwine_check(op, model.V0, op.V2, f).passed
    rng = np.random.default_rng(7)
    for _ in range(5):
        f = random_test_wave(0.5, rng)
        assert oracle.intertwine_check(op, model.V0, op.V2, f).passed


def test_factorization_of_single_state_model():
    """V0 = W**2 - W' for the ground state: a**2 t**3 - 2a(2s+1) t
    + (2s-1/2)(2s-3/2)/t."""
    a, s = 0.7, 1.3
    m = build_model(a, s, 0)
    psi = qes_spectrum(m)[0]
    op, V1 = first_order(m, psi.wave, psi.energy)
    assert oracle.factorization_check(op, m.V0, V1).passed
    expected = RationalT(
        [(2 * s - 0.5) * (2 * s - 1.5), 0, -2 * a * (2 * s + 1), 0, a * a],
        [0j],
    )
    assert oracle.rational_gap(op.W.square() - op.W.prime(), expected) < 1e-12


def test_factorization_of_reducible_chain(model):
    chain = reducible_chain(model)
    assert oracle.factorization_check(chain.op0, model.V0, chain.V1).passed
    assert oracle.factorization_check(chain.op1, chain.V1, chain.V2).passed
    x = np.linspace(0.2, 3.0, 50)
    for op, V_in, V_out in (
        (chain.op0, model.V0, chain.V1),
        (chain.op1, chain.V1, chain.V2),
    ):
        gap = oracle.factorization_on_grid(op.W, op.alpha, V_in, V_out, x)
        assert gap < 1e-8
    W = chain.op0.W + Superpotential(RationalT([0.1]))
    bent = FirstOrderOp(W, chain.op0.alpha, chain.op0.source)
    assert not oracle.factorization_check(bent, model.V0, chain.V1).passed


def test_pole_scan():
    assert oracle.pole_scan(RationalT([1], [2.0, 4.0, 4.0])) == [2.0, 4.0]
    assert oracle.pole_scan(PolyC([10, 6, 1])) == []
    assert oracle.pole_scan(PolyC([20, 0, 4, 0, 1])) == []
    assert oracle.pole_scan(RationalT([1], [0j, -2.0])) == []


def test_realness_and_imaginary_wronskian():
    assert oracle.realness_check(_nu2())
    m = build_model(0.5, 2, 0)
    low, high = complex_solutions(m)[0]
    _, V1 = first_order(m, low.wave, low.energy)
    assert not oracle.realness_check(V1)
    op = second_order(m, low, high)
    assert oracle.is_purely_imaginary(op.wron)
    assert not oracle.is_purely_imaginary(low.wave)


def test_normalizability(model, spectrum):
    chi2 = reducible_chain(model).states["chi"][0].wave
    assert chi2.sigma == pytest.approx(5.5)
    assert oracle.normalizable(chi2)
    low, _ = complex_solutions(build_model(0.5, 2, 0))[0]
    assert not oracle.normalizable(low.wave)
    ground = qes_spectrum(build_model(0.5, 2, 0))[0].wave
    assert oracle.normalizable(ground)
    weak = oracle.normalizability(QuasiWave(1.0, 0.5, 1, 0.25))
    assert weak.normalizable and weak.weakly
    singular = QuasiWave(1.0, 0.5, 1, 1.5, RationalT([1], [2.0]))
    assert oracle.normalizability(singular).poles == [2.0]


def test_numerov_recovers_analytic_levels():
    """(1/2, 1, 2): the three lowest levels are -4 sqrt(5), 0, 4 sqrt(5)
    with node counts 0, 1, 2."""
    m = build_model(0.5, 1, 2)
    cfg = NumerovConfig.for_stiffness(0.5, -15.0, 25.0)
    levels = oracle.numerov_levels(m.V0, cfg)
    assert [level.nodes for level in levels[:3]] == [0, 1, 2]
    expected = [-4 * ROOT5, 0.0, 4 * ROOT5]
    for level, energy in zip(levels[:3], expected):
        assert abs(level.energy - energy) < 1e-4


def test_numerov_deletes_two_lowest_levels():
    m = build_model(0.5, 1, 2)
    chain = reducible_chain(m)
    cfg = NumerovConfig.for_stiffness(0.5, -15.0, 25.0)
    report = oracle.isospectral_deletion(m.V0, chain.V2, cfg)
    assert len(report.deleted) == 2
    assert np.allclose(report.deleted, [-4 * ROOT5, 0.0], atol=1e-4)
    assert report.added == []
    assert abs(report.spectrum_out[0] - 4 * ROOT5) < 1e-4


def test_numerov_refuses_singular_intermediate(model, spectrum):
    report = classify_chain(model, spectrum[1], spectrum[2])
    cfg = NumerovConfig.for_stiffness(0.5, -15.0, 25.0)
    with pytest.raises(PoleError) as err:
        oracle.numerov_spectrum(report.V1, cfg)
    assert "x=1.41421" in str(err.value)
    with pytest.raises(DomainError):
        oracle.numerov_spectrum(_complex_intermediate(), cfg)


def _complex_intermediate() -> RationalPotential:
    m = build_model(0.5, 2, 0)
    low, _ = complex_solutions(m)[0]
    return first_order(m, low.wave, low.energy)[1]


@pytest.mark.parametrize("s, M", [(2, 2), (2, 4)])
def test_exact_and_sampled_residuals_agree(s, M):
    m = build_model(0.5, s, M)
    x = np.linspace(0.3, 3.0, 20)
    for entry in qes_spectrum(m):
        assert oracle.residual(m.V0, entry.energy, entry.wave).passed
        assert oracle.sampled_residual(
            m.V0, entry.energy, entry.wave, x
        ) < 1e-8
        shifted = entry.energy + 0.5
        assert not oracle.residual(m.V0, shifted, entry.wave).passed
        assert oracle.sampled_residual(m.V0, shifted, entry.wave, x) > 1e-4


def test_normalizability_agrees_with_quadrature(model, spectrum):
    for entry in spectrum:
        report = oracle.normalizability(entry.wave)
        assert report.normalizable and report.consistent
        assert report.quadrature > 0
    origin = oracle.normalizability(QuasiWave(1.0, 0.5, 1, -0.75))
    assert not origin.normalizable and origin.consistent
    tail = oracle.normalizability(QuasiWave(1.0, 0.5, 0, 0.25))
    assert not tail.normalizable and tail.consistent
    decaying = oracle.normalizability(
        QuasiWave(1.0, 0.5, 0, 1.0, RationalT([1], [-1.0, -1.0]))
    )
    assert decaying.normalizable and decaying.consistent


def test_quadrature_disagreement_is_reported(monkeypatch):
    monkeypatch.setattr(oracle, "_norm_segment", lambda f, lo, hi: 1 / lo)
    report = oracle.normalizability(QuasiWave(1.0, 0.5, 1, 1.5))
    assert report.normalizable
    assert not report.consistent


def test_numerov_levels_are_stable_under_step_halving():
    m = build_model(0.5, 1, 2)
    coarse = NumerovConfig.for_stiffness(0.5, -15.0, 5.0)
    fine = NumerovConfig.for_stiffness(0.5, -15.0, 5.0, step=2.5e-4)
    levels = oracle.numerov_spectrum(m.V0, coarse)
    refined = oracle.numerov_spectrum(m.V0, fine)
    assert len(levels) == len(refined) == 2
    assert np.allclose(levels, refined, atol=1e-6)


def test_first_order_step_removes_exactly_one_level():
    m = build_model(0.5, 1, 2)
    ground = qes_spectrum(m)[0]
    _, V1 = first_order(m, ground.wave, ground.energy)
    cfg = NumerovConfig.for_stiffness(0.5, -15.0, 25.0)
    report = oracle.isospectral_deletion(m.V0, V1, cfg)
    assert len(report.deleted) == 1
    assert report.deleted[0] == pytest.approx(-4 * ROOT5, abs=1e-4)
    assert report.added == []


def test_intertwining_of_irreducible_operators(model, spectrum):
    rng = np.random.default_rng(13)
    first_type = second_order(model, spectrum[1], spectrum[2])
    waves = [spectrum[0].wave] + [
        random_test_wave(0.5, rng) for _ in range(3)
    ]
    for f in waves:
        assert oracle.intertwine_check(
            first_type, model.V0, first_type.V2, f
        ).passed

    m = build_model(0.5, 2, 0)
    low, high = complex_solutions(m)[0]
    second_type = second_order(m, low, high)
    ground = qes_spectrum(m)[0].wave
    for f in [ground] + [random_test_wave(0.5, rng) for _ in range(3)]:
        assert oracle.intertwine_check(
            second_type, m.V0, second_type.V2, f
        ).passed

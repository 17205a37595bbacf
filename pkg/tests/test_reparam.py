"""Reparameterization algebra: published fixtures, round-trips, equivalence."""

import itertools

import numpy as np
import pytest

from skillform.defaults import example_translog_spec
from skillform.mixtures import MixtureModel
from skillform.params import (
    AnchorParams,
    CesTech,
    InvestmentParams,
    MeasurementBlock,
    MeasurementParams,
    ModelSpec,
    Periods,
    RestrictionSet,
    SpecError,
    TransLogTech,
    spec_allclose,
)
from skillform.reparam import (
    anchor_transform,
    ces_normalized_form,
    from_tilde,
    from_tilde_ces,
    from_tilde_translog,
    obs_equivalent_ces,
    obs_equivalent_translog,
    satisfies_restrictions,
    to_tilde,
    to_tilde_ces,
    to_tilde_translog,
)
from skillform.simulate import simulate_panel

from conftest import (
    random_ces_spec,
    random_ces_tilde,
    random_translog_spec,
    random_translog_tilde,
)

TL_COMBOS = list(itertools.product(("ageInvariantSkill", "knownScaleTech"),
                                   ("ageInvariantInvest", "crsOrZeroIntercept")))
CES_COMBOS = [
    RestrictionSet(skill=s, invest=i, ces_extra=e)
    for s, i in TL_COMBOS
    for e in ("ageInvariantLoading", "psiOne")
]

LAM_BAR = np.array([1.0, 6.5, 9.25, 10.625, 11.3125])
G1_BAR = np.array([0.077, 0.351, 0.435, 0.470, 0.485])


# ---------------------------------------------------------------- fixtures


def _ces_location_example(T=4):
    """CES model with all measure intercepts ln 12: theta' = (theta + I)/2 * shock."""
    ones = np.ones(T)
    return ModelSpec(
        periods=Periods(T=T),
        tech=CesTech(g1=0.5 * ones, g2=0.5 * ones, sigma=ones, psi=ones,
                     shock_sd=0.2 * ones, kappa=0.0 * ones),
        meas=MeasurementParams(
            skill=MeasurementBlock(
                mu=np.full((T + 1, 2), np.log(12.0)),
                lam=np.ones((T + 1, 2)),
                error_sd=np.full((T + 1, 2), 0.4),
            ),
            invest=MeasurementBlock(
                mu=np.zeros((T, 1)), lam=np.ones((T, 1)), error_sd=np.zeros((T, 1))
            ),
        ),
        invest=InvestmentParams(b0=np.zeros(T), b1=0.3 * ones, b2=0.5 * ones,
                                eta_sd=0.2 * ones),
        anchor=AnchorParams(rho0=0.0, rho1=1.0, eta_q_sd=0.3),
        init_dist=MixtureModel(weights=[1.0], means=[[0.0, 0.0]], covs=[np.eye(2)]),
    )


# ---------------------------------------------------------------- trans-log


def test_tilde_map_published_fixture():
    """Loading-12 Cobb-Douglas model: g2~=6, b1~=1/24, rho1~=1/12, g1~ unchanged."""
    tilde = to_tilde_translog(example_translog_spec())
    assert np.allclose(tilde.tech.g1, 0.5)
    assert np.allclose(tilde.tech.g2, 6.0)
    assert np.allclose(tilde.tech.g3, 0.0)
    assert np.allclose(tilde.invest.b1, 1.0 / 24.0)
    assert np.isclose(tilde.anchor.rho1, 1.0 / 12.0)


def test_tilde_map_identity_for_normalized_spec(rng):
    spec = random_translog_spec(rng, normalized=True)
    tilde = to_tilde_translog(spec)
    assert spec_allclose(tilde, spec, rtol=1e-13)


def test_from_tilde_published_sequences():
    tilde = to_tilde_translog(example_translog_spec())
    bar = from_tilde_translog(
        tilde, RestrictionSet(skill="knownScaleTech", invest="ageInvariantInvest")
    )
    assert np.allclose(bar.meas.skill.lam[:5, 0], LAM_BAR)
    assert np.allclose(bar.tech.g1[:5], G1_BAR, atol=1e-3)
    # the recursion behind the sequences
    lam = bar.meas.skill.lam[:, 0]
    assert np.allclose(lam[1:], lam[:-1] / 2.0 + 6.0)
    assert np.allclose(bar.tech.g1, lam[:-1] / (2.0 * lam[1:]))


def test_from_tilde_age_invariant_is_materialization(rng):
    tilde = random_translog_tilde(rng)
    spec = from_tilde_translog(
        tilde, RestrictionSet(skill="ageInvariantSkill", invest="ageInvariantInvest")
    )
    assert spec_allclose(spec, tilde.as_spec(), rtol=1e-12)


@pytest.mark.parametrize("skill,invest", TL_COMBOS)
def test_translog_roundtrip(skill, invest, rng):
    R = RestrictionSet(skill=skill, invest=invest)
    for _ in range(25):
        tilde = random_translog_tilde(rng)
        spec = from_tilde_translog(tilde, R)
        assert satisfies_restrictions(spec, R)
        again = from_tilde_translog(to_tilde_translog(spec), R)
        assert spec_allclose(again, spec, rtol=1e-10, atol=1e-12)


def test_tilde_idempotence(rng):
    spec = random_translog_spec(rng)
    tilde = to_tilde_translog(spec)
    assert spec_allclose(to_tilde_translog(tilde.as_spec()), tilde, rtol=1e-12)


def test_from_tilde_degenerate_loading_rejected(rng):
    tilde = random_translog_tilde(rng, with_interaction=False)
    tech = tilde.tech
    lam1 = tech.g1[0] + tech.g2[0]  # implied loading after the first transition
    g2 = tech.g2.copy()
    g2[1] = -(tech.g1[1] * lam1)  # forces the next implied loading to zero
    bad = TransLogTech(a=tech.a, g1=tech.g1, g2=g2, g3=np.zeros(tech.T),
                       shock_sd=tech.shock_sd, kappa=tech.kappa)
    import dataclasses

    broken = dataclasses.replace(tilde, tech=bad)
    with pytest.raises(SpecError, match="period"):
        from_tilde_translog(
            broken, RestrictionSet(skill="knownScaleTech", invest="ageInvariantInvest")
        )


# ---------------------------------------------------------------- CES


def test_ces_tilde_identity_case(rng):
    from skillform.defaults import mc_default_spec

    spec = mc_default_spec()  # all first loadings 1, all intercepts 0
    tilde = to_tilde_ces(spec)
    assert np.allclose(tilde.tech.g1, spec.tech.g1)
    assert np.allclose(tilde.tech.g2, spec.tech.g2)
    assert np.allclose(tilde.tech.exp_ratio_skill, spec.tech.sigma)
    assert np.allclose(tilde.tech.exp_ratio_invest, spec.tech.sigma)
    assert np.allclose(tilde.tech.outer_exp, spec.tech.psi / spec.tech.sigma)


def test_ces_tilde_direct_substitution():
    """mu_next = ln 12, mu_t = 0, lam = 1, sigma = 1, g1 = 1/2 gives g1~ = 6."""
    spec = _ces_location_example(T=1)
    mu = spec.meas.skill.mu.copy()
    mu[0] = 0.0
    import dataclasses

    spec = dataclasses.replace(
        spec,
        meas=MeasurementParams(
            skill=MeasurementBlock(mu=mu, lam=spec.meas.skill.lam,
                                   error_sd=spec.meas.skill.error_sd),
            invest=spec.meas.invest,
        ),
    )
    assert np.isclose(to_tilde_ces(spec).tech.g1[0], 6.0)


def test_ces_published_location_sequences():
    tilde = to_tilde_ces(_ces_location_example())
    bar = from_tilde_ces(
        tilde,
        RestrictionSet(skill="knownScaleTech", invest="ageInvariantInvest",
                       ces_extra="ageInvariantLoading"),
    )
    assert np.allclose(np.exp(bar.meas.skill.mu[:4, 0]), LAM_BAR[:4])
    assert np.allclose(bar.tech.g1[:4], G1_BAR[:4], atol=1e-3)
    assert np.allclose(bar.tech.g1 + bar.tech.g2, 1.0)


@pytest.mark.parametrize("R", CES_COMBOS, ids=lambda r: f"{r.skill}-{r.invest}-{r.ces_extra}")
def test_ces_roundtrip(R, rng):
    for _ in range(25):
        tilde = random_ces_tilde(rng)
        spec = from_tilde_ces(tilde, R)
        assert satisfies_restrictions(spec, R)
        again = from_tilde_ces(to_tilde_ces(spec), R)
        assert spec_allclose(again, spec, rtol=1e-8, atol=1e-10)


def test_ces_exponent_ratio_identity(rng):
    for _ in range(10):
        spec = random_ces_spec(rng)
        tilde = to_tilde_ces(spec)
        lam_ratio = spec.meas.invest.lam[:, 0] / spec.meas.skill.lam[:-1, 0]
        assert np.allclose(
            tilde.tech.exp_ratio_skill / tilde.tech.exp_ratio_invest, lam_ratio
        )


def test_ces_tilde_law_simulation_oracle(rng):
    """Simulating the spec and its tilde form gives the same law of
    mu1 + lam1 * ln theta (two-sample KS below 0.005 at 10^6 draws)."""
    spec = random_ces_spec(rng)
    tilde = to_tilde_ces(spec)
    n = 1_000_000
    p_spec = simulate_panel(spec, n, seed=11)
    p_til = simulate_panel(tilde, n, seed=12)
    t = spec.T
    mu1 = spec.meas.skill.mu[t, 0]
    lam1 = spec.meas.skill.lam[t, 0]
    a = np.sort(mu1 + lam1 * p_spec.ln_theta[t])
    b = np.sort(p_til.ln_theta[t])
    grid = np.concatenate([a, b])
    Fa = np.searchsorted(a, grid, side="right") / n
    Fb = np.searchsorted(b, grid, side="right") / n
    assert np.max(np.abs(Fa - Fb)) < 0.005


# ---------------------------------------------------------------- equivalence


def _coupled_observables_match(spec_a, spec_b, n=20_000, seed=99, atol=1e-6):
    pa = simulate_panel(spec_a, n, seed)
    pb = simulate_panel(spec_b, n, seed)
    same = True
    same &= np.allclose(pa.z_skill, pb.z_skill, atol=atol)
    same &= np.allclose(pa.z_invest, pb.z_invest, atol=atol)
    same &= np.allclose(pa.ln_y, pb.ln_y, atol=atol)
    same &= np.allclose(pa.q, pb.q, atol=atol)
    return same


@pytest.mark.parametrize("skill,invest", TL_COMBOS)
def test_obs_equivalent_translog_couples_exactly(skill, invest, rng):
    R = RestrictionSet(skill=skill, invest=invest)
    for _ in range(3):
        spec = random_translog_spec(rng)
        other = obs_equivalent_translog(spec, R)
        assert satisfies_restrictions(other, R)
        assert _coupled_observables_match(spec, other)


def test_obs_equivalent_translog_analytic_moments(rng):
    from skillform.simulate import population_moments

    R = RestrictionSet(skill="knownScaleTech", invest="crsOrZeroIntercept")
    spec = random_translog_spec(rng, with_interaction=False)
    other = obs_equivalent_translog(spec, R)
    ma = population_moments(spec)
    mb = population_moments(other)
    assert ma.analytic and mb.analytic
    assert ma.max_standardized_diff(mb) < 1e-8


def test_obs_equivalent_identity_when_already_satisfied(rng):
    R = RestrictionSet(skill="ageInvariantSkill", invest="ageInvariantInvest")
    tilde = random_translog_tilde(rng)
    spec = from_tilde_translog(tilde, R)
    assert spec_allclose(obs_equivalent_translog(spec, R), spec, rtol=1e-10)


@pytest.mark.parametrize("R", CES_COMBOS[:4], ids=lambda r: f"{r.skill}-{r.invest}-{r.ces_extra}")
def test_obs_equivalent_ces_couples_exactly(R, rng):
    for _ in range(2):
        spec = random_ces_spec(rng)
        other = obs_equivalent_ces(spec, R)
        assert satisfies_restrictions(other, R)
        assert _coupled_observables_match(spec, other)


def test_obs_equivalent_ces_published_sequences():
    bar = obs_equivalent_ces(
        _ces_location_example(),
        RestrictionSet(skill="knownScaleTech", invest="ageInvariantInvest",
                       ces_extra="ageInvariantLoading"),
    )
    assert np.allclose(np.exp(bar.meas.skill.mu[:4, 0]), LAM_BAR[:4])


# ---------------------------------------------------------------- anchoring


def test_anchor_identity_when_already_anchored(rng):
    tilde = random_translog_tilde(rng)
    import dataclasses

    tilde = dataclasses.replace(
        tilde, anchor=AnchorParams(rho0=0.0, rho1=1.0, eta_q_sd=tilde.anchor.eta_q_sd)
    )
    anchored = anchor_transform(tilde)
    assert spec_allclose(anchored, tilde.as_spec(), rtol=1e-12)


def test_anchor_example_investment_coefficient():
    """With rho1~ = 1/12 the anchored investment coefficient is g2~ / 12 = 1/2."""
    tilde = to_tilde_translog(example_translog_spec())
    anchored = anchor_transform(tilde)
    assert np.allclose(anchored.tech.g2, 0.5)
    assert np.isclose(anchored.anchor.rho0, 0.0)
    assert np.isclose(anchored.anchor.rho1, 1.0)


def test_anchor_preserves_observable_distribution(rng):
    for make_tilde in (random_translog_tilde, random_ces_tilde):
        tilde = make_tilde(rng)
        anchored = anchor_transform(tilde)
        assert _coupled_observables_match(tilde.as_spec(), anchored)


# ---------------------------------------------------------------- normalized CES


def test_ces_normalized_form_unit_points():
    g, a = ces_normalized_form(0.4, 0.6, -0.5, 1.0, 1.0)
    assert np.isclose(g, 0.4)
    assert np.isclose(a, 1.0 ** (1 / -0.5))


def test_ces_normalized_form_hand_value():
    g, a = ces_normalized_form(0.5, 0.5, 1.0, 2.0, 1.0)
    assert np.isclose(g, 2.0 / 3.0)
    assert np.isclose(a, 1.5)


def test_ces_normalized_form_pointwise_identity(rng):
    for _ in range(50):
        g1, g2 = rng.uniform(0.2, 2.0, size=2)
        sigma = rng.choice([-1.2, -0.5, 0.4, 1.0])
        tb, ib = rng.uniform(0.5, 3.0, size=2)
        gbar, abar = ces_normalized_form(g1, g2, sigma, tb, ib)
        th, inv = rng.uniform(0.2, 5.0, size=2)
        lhs = abar * (gbar * (th / tb) ** sigma + (1 - gbar) * (inv / ib) ** sigma) ** (1 / sigma)
        rhs = (g1 * th**sigma + g2 * inv**sigma) ** (1 / sigma)
        assert np.isclose(lhs, rhs, rtol=1e-12)

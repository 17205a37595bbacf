import numpy as np
import pytest

from skillform.mixtures import MixtureModel
from skillform.params import (
    AnchorParams,
    CesTildeTech,
    InvestmentParams,
    MeasurementBlock,
    MeasurementParams,
    ModelSpec,
    Periods,
    RestrictionSet,
    TildeParams,
    TransLogTech,
)
from skillform.reparam import from_tilde


def random_mixture(rng, dim=2, K=2):
    means = rng.uniform(-1.0, 1.0, size=(K, dim))
    covs = []
    for _ in range(K):
        A = rng.uniform(-0.4, 0.4, size=(dim, dim))
        covs.append(0.5 * np.eye(dim) + A @ A.T)
    w = rng.uniform(0.3, 0.7, size=K)
    return MixtureModel(weights=w / w.sum(), means=means, covs=np.array(covs))


def _random_blocks(rng, T, M_skill=2, M_invest=2, normalized=False):
    def block(P, M):
        lam = rng.uniform(0.5, 1.8, size=(P, M))
        mu = rng.uniform(-0.6, 0.6, size=(P, M))
        if normalized:
            lam[:, 0] = 1.0
            mu[:, 0] = 0.0
        return MeasurementBlock(
            mu=mu, lam=lam, error_sd=rng.uniform(0.2, 0.6, size=(P, M))
        )

    return MeasurementParams(skill=block(T + 1, M_skill), invest=block(T, M_invest))


def _random_invest(rng, T):
    return InvestmentParams(
        b0=rng.uniform(-0.3, 0.3, size=T),
        b1=rng.uniform(0.1, 0.5, size=T),
        b2=rng.uniform(0.4, 0.9, size=T),
        eta_sd=rng.uniform(0.1, 0.3, size=T),
    )


def _random_anchor(rng):
    return AnchorParams(
        rho0=rng.uniform(-0.5, 0.5),
        rho1=rng.uniform(0.5, 1.5),
        eta_q_sd=rng.uniform(0.2, 0.4),
    )


def random_translog_spec(rng, T=3, with_interaction=True, normalized=False):
    g3 = rng.uniform(-0.08, 0.08, size=T) if with_interaction else np.zeros(T)
    eta_sd = rng.uniform(0.1, 0.3, size=T)
    kappa = rng.uniform(-0.4, 0.4, size=T)
    shock_sd = np.sqrt(rng.uniform(0.15, 0.3, size=T) ** 2 + kappa**2 * eta_sd**2)
    invest = InvestmentParams(
        b0=rng.uniform(-0.3, 0.3, size=T),
        b1=rng.uniform(0.1, 0.5, size=T),
        b2=rng.uniform(0.4, 0.9, size=T),
        eta_sd=eta_sd,
    )
    tech = TransLogTech(
        a=rng.uniform(-0.2, 0.2, size=T),
        g1=rng.uniform(0.3, 0.6, size=T),
        g2=rng.uniform(0.3, 0.6, size=T),
        g3=g3,
        shock_sd=shock_sd,
        kappa=kappa,
    )
    return ModelSpec(
        periods=Periods(T=T),
        tech=tech,
        meas=_random_blocks(rng, T, normalized=normalized),
        invest=invest,
        anchor=_random_anchor(rng),
        init_dist=random_mixture(rng),
    )


def random_ces_tilde(rng, T=2):
    """Random identified CES parameterization (first measures normalized)."""
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    r_th = sign * rng.uniform(0.4, 1.0, size=T)
    r_i = sign * rng.uniform(0.4, 1.0, size=T)
    outer = sign * rng.uniform(0.8, 1.4, size=T)
    eta_sd = rng.uniform(0.1, 0.3, size=T)
    kappa = rng.uniform(-0.4, 0.4, size=T)
    shock_sd = np.sqrt(rng.uniform(0.15, 0.3, size=T) ** 2 + kappa**2 * eta_sd**2)
    tech = CesTildeTech(
        g1=rng.uniform(0.3, 0.8, size=T),
        g2=rng.uniform(0.3, 0.8, size=T),
        exp_ratio_skill=r_th,
        exp_ratio_invest=r_i,
        outer_exp=outer,
        shock_sd=shock_sd,
        kappa=kappa,
    )
    return TildeParams(
        periods=Periods(T=T),
        tech=tech,
        meas=_random_blocks(rng, T, normalized=True),
        invest=InvestmentParams(
            b0=rng.uniform(-0.3, 0.3, size=T),
            b1=rng.uniform(0.1, 0.5, size=T),
            b2=rng.uniform(0.4, 0.9, size=T),
            eta_sd=eta_sd,
        ),
        anchor=_random_anchor(rng),
        init_dist=random_mixture(rng),
    )


def random_ces_spec(rng, T=2, restrictions=None):
    """Random CES spec; when ``restrictions`` is given the spec satisfies it."""
    if restrictions is None:
        restrictions = RestrictionSet(
            skill="ageInvariantSkill", invest="ageInvariantInvest", ces_extra="psiOne"
        )
        tilde = random_ces_tilde(rng, T=T)
        spec = from_tilde(tilde, restrictions)
        # generic scales: undo the normalization with random first-measure scales
        from skillform.reparam import retarget_ces, to_tilde_ces

        skill_lam = rng.uniform(0.6, 1.6, size=T + 1)
        skill_mu = rng.uniform(-0.5, 0.5, size=T + 1)
        invest_mu = rng.uniform(-0.5, 0.5, size=T)
        return retarget_ces(to_tilde_ces(spec), skill_mu, skill_lam, invest_mu)
    return from_tilde(random_ces_tilde(rng, T=T), restrictions)


def random_translog_tilde(rng, T=3, with_interaction=True):
    spec = random_translog_spec(rng, T=T, with_interaction=with_interaction, normalized=True)
    from skillform.reparam import to_tilde_translog

    return to_tilde_translog(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(20250810)

"""Default data-generating processes.

``mc_default_spec`` is the CES benchmark used by the Monte Carlo harness:
T = 2 transitions, sigma_0 = sigma_1 = -0.5, investment rule
ln I = 0.1 ln theta + 0.9 ln Y + N(0, 0.1^2), three measures per latent
with first loadings 1, and a two-component normal mixture for
(ln theta_0, ln Y).  Values not pinned down elsewhere (A_t, gamma_t, shock
sds, mixture spread, measure error sds) are project defaults chosen to
give a well-behaved benchmark; override them via the config file.
"""

from __future__ import annotations

import numpy as np

from .mixtures import MixtureModel
from .params import (
    AnchorParams,
    CesTech,
    InvestmentParams,
    MeasurementBlock,
    MeasurementParams,
    ModelSpec,
    Periods,
    TransLogTech,
)

__all__ = ["mc_default_spec", "mc_default_init_dist", "example_translog_spec"]


def mc_default_init_dist() -> MixtureModel:
    """Two-component mixture for (ln theta_0, ln Y): means (-4, -2) and (2, 1),
    equal weights, unit variances, correlation 0.3."""
    corr = 0.3
    cov = np.array([[1.0, corr], [corr, 1.0]])
    return MixtureModel(
        weights=np.array([0.5, 0.5]),
        means=np.array([[-4.0, -2.0], [2.0, 1.0]]),
        covs=np.array([cov, cov]),
    )


def _three_measures(n_periods: int, error_sd: float) -> MeasurementBlock:
    """First loading 1 and intercept 0; extra measures with distinct loadings."""
    lam = np.tile(np.array([1.0, 0.8, 1.2]), (n_periods, 1))
    return MeasurementBlock(
        mu=np.zeros((n_periods, 3)),
        lam=lam,
        error_sd=np.full((n_periods, 3), error_sd),
    )


def mc_default_spec(
    T: int = 2,
    sigma: float = -0.5,
    a_t: float = 1.0,
    gamma: float = 0.5,
    shock_sd: float = 0.1,
    beta1: float = 0.1,
    beta2: float = 0.9,
    eta_i_sd: float = 0.1,
    measure_error_sd: float = 0.5,
    kappa: float = 0.0,
) -> ModelSpec:
    """CES benchmark DGP.

    theta' = a_t (gamma theta^sigma + (1 - gamma) I^sigma)^(1/sigma) e^shock,
    folded into share coefficients g1 = a_t^sigma gamma, g2 = a_t^sigma (1-gamma).
    """
    g1 = a_t**sigma * gamma
    g2 = a_t**sigma * (1.0 - gamma)
    ones = np.ones(T)
    return ModelSpec(
        periods=Periods(T=T),
        tech=CesTech(
            g1=g1 * ones,
            g2=g2 * ones,
            sigma=sigma * ones,
            psi=ones,
            shock_sd=shock_sd * ones,
            kappa=kappa * ones,
        ),
        meas=MeasurementParams(
            skill=_three_measures(T + 1, measure_error_sd),
            invest=_three_measures(T, measure_error_sd),
        ),
        invest=InvestmentParams(
            b0=np.zeros(T), b1=beta1 * ones, b2=beta2 * ones, eta_sd=eta_i_sd * ones
        ),
        anchor=AnchorParams(rho0=0.0, rho1=1.0, eta_q_sd=0.3),
        init_dist=mc_default_init_dist(),
    )


def example_translog_spec(
    T: int = 5, skill_loading: float = 12.0, shock_sd: float = 0.25
) -> ModelSpec:
    """Cobb-Douglas fixture with observed investment and rescaled skill measures.

    ln theta' = (ln theta + ln I)/2; all skill measures carry loading
    ``skill_loading``; investment is observed directly.
    """
    ones = np.ones(T)
    skill = MeasurementBlock(
        mu=np.zeros((T + 1, 2)),
        lam=np.full((T + 1, 2), skill_loading),
        error_sd=np.full((T + 1, 2), 0.5),
    )
    invest = MeasurementBlock(
        mu=np.zeros((T, 1)), lam=np.ones((T, 1)), error_sd=np.zeros((T, 1))
    )
    cov = np.array([[1.0, 0.3], [0.3, 1.0]])
    return ModelSpec(
        periods=Periods(T=T),
        tech=TransLogTech(
            a=np.zeros(T),
            g1=0.5 * ones,
            g2=0.5 * ones,
            g3=np.zeros(T),
            shock_sd=shock_sd * ones,
            kappa=np.zeros(T),
        ),
        meas=MeasurementParams(skill=skill, invest=invest),
        invest=InvestmentParams(
            b0=np.zeros(T), b1=0.5 * ones, b2=0.5 * ones, eta_sd=0.2 * ones
        ),
        anchor=AnchorParams(rho0=0.0, rho1=1.0, eta_q_sd=0.3),
        init_dist=MixtureModel(
            weights=np.array([1.0]), means=np.array([[0.0, 0.0]]), covs=np.array([cov])
        ),
    )

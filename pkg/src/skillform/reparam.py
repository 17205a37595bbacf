"""Exact maps between parameterizations of the skill-formation model.

The measurement system only pins down each latent up to the affine map
``ln th~_t = mu_t1 + lam_t1 ln th_t`` defined by its first measure.  The
"tilde" parameterization absorbs those scales (first measure gets
intercept 0, loading 1) and indexes the identified set.  Everything here
is closed-form algebra except one scalar monotone solve (CES under the
constant-returns restriction), done by bisection.

``retarget_*`` sends tilde parameters to the unique observationally
equivalent model with prescribed first-measure scales and locations;
``from_tilde_*`` first solves for those scales from a point-identifying
restriction set, so ``obs_equivalent_* = from_tilde_* . to_tilde_*``.
"""

from __future__ import annotations

import numpy as np

from .mixtures import MixtureModel, bisect_scalar
from .params import (
    AnchorParams,
    CesTech,
    CesTildeTech,
    InvestmentParams,
    MeasurementBlock,
    MeasurementParams,
    ModelSpec,
    RestrictionSet,
    SpecError,
    TildeParams,
    TransLogTech,
)

__all__ = [
    "to_tilde",
    "to_tilde_translog",
    "to_tilde_ces",
    "retarget_translog",
    "retarget_ces",
    "from_tilde",
    "from_tilde_translog",
    "from_tilde_ces",
    "obs_equivalent",
    "obs_equivalent_translog",
    "obs_equivalent_ces",
    "anchor_transform",
    "ces_normalized_form",
    "satisfies_restrictions",
]


# --------------------------------------------------------------------------
# shared measurement / investment / anchor algebra
# --------------------------------------------------------------------------


def _tilde_block(block: MeasurementBlock) -> MeasurementBlock:
    """Normalize a measurement block on its first measure."""
    lam1 = block.lam[:, :1]
    mu1 = block.mu[:, :1]
    lam = block.lam / lam1
    mu = block.mu - (block.lam / lam1) * mu1
    # force exact normalization on the first column
    lam[:, 0] = 1.0
    mu[:, 0] = 0.0
    return MeasurementBlock(mu=mu, lam=lam, error_sd=block.error_sd)


def _retarget_block(block: MeasurementBlock, mu1, lam1) -> MeasurementBlock:
    """Reinstate first-measure scales (mu1, lam1) on a normalized block."""
    mu1 = np.asarray(mu1, dtype=float)[:, None]
    lam1 = np.asarray(lam1, dtype=float)[:, None]
    lam = block.lam * lam1
    mu = block.mu + block.lam * mu1
    return MeasurementBlock(mu=mu, lam=lam, error_sd=block.error_sd)


def _tilde_invest(inv: InvestmentParams, m_th, l_th, m_i, l_i) -> InvestmentParams:
    return InvestmentParams(
        b0=l_i * inv.b0 + m_i - (l_i / l_th) * m_th * inv.b1,
        b1=(l_i / l_th) * inv.b1,
        b2=l_i * inv.b2,
        eta_sd=np.abs(l_i) * inv.eta_sd,
    )


def _retarget_invest(inv: InvestmentParams, m_th, l_th, m_i, l_i) -> InvestmentParams:
    b1 = inv.b1 * l_th / l_i
    return InvestmentParams(
        b0=(inv.b0 - m_i + (l_i / l_th) * b1 * m_th) / l_i,
        b1=b1,
        b2=inv.b2 / l_i,
        eta_sd=inv.eta_sd / np.abs(l_i),
    )


def _init_affine(dist: MixtureModel, scale: float, shift: float) -> MixtureModel:
    """Apply ln th_0 -> scale * ln th_0 + shift, leaving ln Y alone."""
    A = np.array([[scale, 0.0], [0.0, 1.0]])
    b = np.array([shift, 0.0])
    return dist.affine(A, b)


# --------------------------------------------------------------------------
# trans-log
# --------------------------------------------------------------------------


def to_tilde_translog(spec: ModelSpec) -> TildeParams:
    """Rewrite a trans-log spec in terms of the first-measure latents."""
    if not isinstance(spec.tech, TransLogTech):
        raise SpecError("to_tilde_translog needs a trans-log technology")
    tech = spec.tech
    m_th = spec.meas.skill.mu[:, 0]
    l_th = spec.meas.skill.lam[:, 0]
    m_i = spec.meas.invest.mu[:, 0]
    l_i = spec.meas.invest.lam[:, 0]
    lth_t, lth_n = l_th[:-1], l_th[1:]  # current / next-period skill loadings
    mth_t, mth_n = m_th[:-1], m_th[1:]

    g3 = lth_n / (lth_t * l_i) * tech.g3
    g1 = (lth_n / lth_t) * (tech.g1 - (m_i / l_i) * tech.g3)
    g2 = (lth_n / l_i) * (tech.g2 - (mth_t / lth_t) * tech.g3)
    a = (
        lth_n * tech.a
        + mth_n
        - (lth_n / lth_t) * mth_t * tech.g1
        - (lth_n / l_i) * m_i * tech.g2
        + lth_n / (lth_t * l_i) * m_i * mth_t * tech.g3
    )
    tilde_tech = TransLogTech(
        a=a,
        g1=g1,
        g2=g2,
        g3=g3,
        shock_sd=np.abs(lth_n) * tech.shock_sd,
        kappa=(lth_n / l_i) * tech.kappa,
    )
    return TildeParams(
        periods=spec.periods,
        tech=tilde_tech,
        meas=MeasurementParams(
            skill=_tilde_block(spec.meas.skill), invest=_tilde_block(spec.meas.invest)
        ),
        invest=_tilde_invest(spec.invest, mth_t, lth_t, m_i, l_i),
        anchor=AnchorParams(
            rho0=spec.anchor.rho0 - spec.anchor.rho1 * m_th[-1] / l_th[-1],
            rho1=spec.anchor.rho1 / l_th[-1],
            eta_q_sd=spec.anchor.eta_q_sd,
        ),
        init_dist=_init_affine(spec.init_dist, l_th[0], m_th[0]),
    )


def retarget_translog(tilde: TildeParams, skill_mu, skill_lam, invest_mu, invest_lam) -> ModelSpec:
    """Unique trans-log model with the given first-measure locations/scales.

    ``skill_mu``/``skill_lam`` have length T+1; ``invest_mu``/``invest_lam``
    length T.  Inverts the tilde map, so round-trips are exact.
    """
    if not isinstance(tilde.tech, TransLogTech):
        raise SpecError("retarget_translog needs a trans-log technology")
    m_th = np.asarray(skill_mu, dtype=float)
    l_th = np.asarray(skill_lam, dtype=float)
    m_i = np.asarray(invest_mu, dtype=float)
    l_i = np.asarray(invest_lam, dtype=float)
    if np.any(l_th == 0.0) or np.any(l_i == 0.0):
        raise SpecError("target loadings must be nonzero")
    t = tilde.tech
    lth_t, lth_n = l_th[:-1], l_th[1:]
    mth_t, mth_n = m_th[:-1], m_th[1:]

    g3 = t.g3 * lth_t * l_i / lth_n
    g1 = t.g1 * lth_t / lth_n + g3 * m_i / l_i
    g2 = t.g2 * l_i / lth_n + g3 * mth_t / lth_t
    a = (
        t.a
        - mth_n
        + (lth_n / lth_t) * mth_t * g1
        + (lth_n / l_i) * m_i * g2
        - lth_n / (lth_t * l_i) * m_i * mth_t * g3
    ) / lth_n
    tech = TransLogTech(
        a=a,
        g1=g1,
        g2=g2,
        g3=g3,
        shock_sd=t.shock_sd / np.abs(lth_n),
        kappa=t.kappa * l_i / lth_n,
    )
    return ModelSpec(
        periods=tilde.periods,
        tech=tech,
        meas=MeasurementParams(
            skill=_retarget_block(tilde.meas.skill, m_th, l_th),
            invest=_retarget_block(tilde.meas.invest, m_i, l_i),
        ),
        invest=_retarget_invest(tilde.invest, mth_t, lth_t, m_i, l_i),
        anchor=AnchorParams(
            rho0=tilde.anchor.rho0 + tilde.anchor.rho1 * m_th[-1],
            rho1=tilde.anchor.rho1 * l_th[-1],
            eta_q_sd=tilde.anchor.eta_q_sd,
        ),
        init_dist=_init_affine(tilde.init_dist, 1.0 / l_th[0], -m_th[0] / l_th[0]),
    )


def _translog_scale_paths(tilde: TildeParams, restrictions: RestrictionSet):
    """First-measure (mu, lam) paths implied by a Corollary-style restriction set."""
    T = tilde.T
    t = tilde.tech
    inv = tilde.invest
    m_th = np.zeros(T + 1)
    l_th = np.ones(T + 1)
    m_i = np.zeros(T)
    l_i = np.ones(T)

    free_skill = restrictions.skill == "knownScaleTech"
    free_invest = restrictions.invest == "crsOrZeroIntercept"

    for s in range(T):
        if free_invest:
            l_i[s] = l_th[s] * inv.b1[s] + inv.b2[s]
            m_i[s] = inv.b0[s] + inv.b1[s] * m_th[s]
            if l_i[s] == 0.0:
                raise SpecError(f"degenerate implied investment loading at period {s}")
        if free_skill:
            l_th[s + 1] = (
                t.g1[s] * l_th[s]
                + t.g2[s] * l_i[s]
                + t.g3[s] * (l_th[s] * m_i[s] + l_i[s] * m_th[s])
                + t.g3[s] * l_th[s] * l_i[s]
            )
            if l_th[s + 1] == 0.0:
                raise SpecError(f"degenerate implied skill loading at period {s + 1}")
            m_th[s + 1] = (
                t.a[s] + t.g1[s] * m_th[s] + t.g2[s] * m_i[s] + t.g3[s] * m_th[s] * m_i[s]
            )
    return m_th, l_th, m_i, l_i


def from_tilde_translog(tilde: TildeParams, restrictions: RestrictionSet) -> ModelSpec:
    """The unique trans-log model consistent with ``tilde`` and the restrictions."""
    m_th, l_th, m_i, l_i = _translog_scale_paths(tilde, restrictions)
    return retarget_translog(tilde, m_th, l_th, m_i, l_i)


def obs_equivalent_translog(spec: ModelSpec, target: RestrictionSet) -> ModelSpec:
    """Observationally equivalent trans-log parameters satisfying ``target``."""
    return from_tilde_translog(to_tilde_translog(spec), target)


# --------------------------------------------------------------------------
# CES
# --------------------------------------------------------------------------


def to_tilde_ces(spec: ModelSpec) -> TildeParams:
    """Rewrite a CES spec in terms of the first-measure latents."""
    if not isinstance(spec.tech, CesTech):
        raise SpecError("to_tilde_ces needs a CES technology")
    tech = spec.tech
    m_th = spec.meas.skill.mu[:, 0]
    l_th = spec.meas.skill.lam[:, 0]
    m_i = spec.meas.invest.mu[:, 0]
    l_i = spec.meas.invest.lam[:, 0]
    lth_t, lth_n = l_th[:-1], l_th[1:]
    mth_t, mth_n = m_th[:-1], m_th[1:]

    r_th = tech.sigma / lth_t
    r_i = tech.sigma / l_i
    outer = lth_n * tech.psi / tech.sigma
    g1 = tech.g1 * np.exp(mth_n / outer - r_th * mth_t)
    g2 = tech.g2 * np.exp(mth_n / outer - r_i * m_i)
    tilde_tech = CesTildeTech(
        g1=g1,
        g2=g2,
        exp_ratio_skill=r_th,
        exp_ratio_invest=r_i,
        outer_exp=outer,
        shock_sd=np.abs(lth_n) * tech.shock_sd,
        kappa=(lth_n / l_i) * tech.kappa,
    )
    return TildeParams(
        periods=spec.periods,
        tech=tilde_tech,
        meas=MeasurementParams(
            skill=_tilde_block(spec.meas.skill), invest=_tilde_block(spec.meas.invest)
        ),
        invest=_tilde_invest(spec.invest, mth_t, lth_t, m_i, l_i),
        anchor=AnchorParams(
            rho0=spec.anchor.rho0 - spec.anchor.rho1 * m_th[-1] / l_th[-1],
            rho1=spec.anchor.rho1 / l_th[-1],
            eta_q_sd=spec.anchor.eta_q_sd,
        ),
        init_dist=_init_affine(spec.init_dist, l_th[0], m_th[0]),
    )


def retarget_ces(tilde: TildeParams, skill_mu, skill_lam, invest_mu) -> ModelSpec:
    """Unique CES model with given skill scales and locations.

    The investment loading is not free: the CES form pins the relative
    scale, so lam_invest = sigma_bar / exp_ratio_invest.
    """
    if not isinstance(tilde.tech, CesTildeTech):
        raise SpecError("retarget_ces needs a CES technology")
    m_th = np.asarray(skill_mu, dtype=float)
    l_th = np.asarray(skill_lam, dtype=float)
    m_i = np.asarray(invest_mu, dtype=float)
    if np.any(l_th == 0.0):
        raise SpecError("target loadings must be nonzero")
    t = tilde.tech
    lth_t, lth_n = l_th[:-1], l_th[1:]
    mth_t, mth_n = m_th[:-1], m_th[1:]

    sigma = t.exp_ratio_skill * lth_t
    l_i = sigma / t.exp_ratio_invest
    psi = t.outer_exp * sigma / lth_n
    g1 = t.g1 * np.exp(t.exp_ratio_skill * mth_t - mth_n / t.outer_exp)
    g2 = t.g2 * np.exp(t.exp_ratio_invest * m_i - mth_n / t.outer_exp)
    tech = CesTech(
        g1=g1,
        g2=g2,
        sigma=sigma,
        psi=psi,
        shock_sd=t.shock_sd / np.abs(lth_n),
        kappa=t.kappa * l_i / lth_n,
    )
    return ModelSpec(
        periods=tilde.periods,
        tech=tech,
        meas=MeasurementParams(
            skill=_retarget_block(tilde.meas.skill, m_th, l_th),
            invest=_retarget_block(tilde.meas.invest, m_i, l_i),
        ),
        invest=_retarget_invest(tilde.invest, mth_t, lth_t, m_i, l_i),
        anchor=AnchorParams(
            rho0=tilde.anchor.rho0 + tilde.anchor.rho1 * m_th[-1],
            rho1=tilde.anchor.rho1 * l_th[-1],
            eta_q_sd=tilde.anchor.eta_q_sd,
        ),
        init_dist=_init_affine(tilde.init_dist, 1.0 / l_th[0], -m_th[0] / l_th[0]),
    )


def _ces_crs_location(g1_term: float, g2_term: float, outer: float) -> float:
    """Solve g1_term * x^(-1/outer) + g2_term * x^(-1/outer) = 1 for ln x.

    x = exp(mu_next); the left side is strictly monotone in x, so a unique
    solution exists whenever both terms are positive.  Solved by bisection
    on x over [1e-12, 1e12] per the stated convention.
    """
    total = g1_term + g2_term
    if not np.isfinite(total) or total <= 0.0:
        raise SpecError("inconsistent tilde input in constant-returns solve")

    def f(x):
        return total * np.exp(-np.log(x) / outer) - 1.0

    try:
        x = bisect_scalar(f, 1e-12, 1e12, tol=1e-12)
    except ValueError as exc:
        raise SpecError(f"constant-returns solve failed to bracket: {exc}") from exc
    return float(np.log(x))


def _ces_scale_paths(tilde: TildeParams, restrictions: RestrictionSet):
    T = tilde.T
    t = tilde.tech
    inv = tilde.invest
    extra = restrictions.require_ces_extra()

    l_th = np.ones(T + 1)
    if extra == "psiOne":
        for s in range(T):
            l_th[s + 1] = t.outer_exp[s] * t.exp_ratio_skill[s] * l_th[s]
            if l_th[s + 1] == 0.0:
                raise SpecError(f"degenerate implied skill loading at period {s + 1}")

    m_th = np.zeros(T + 1)
    m_i = np.zeros(T)
    crs = restrictions.skill == "knownScaleTech"
    zero_intercept = restrictions.invest == "crsOrZeroIntercept"
    for s in range(T):
        if zero_intercept:
            m_i[s] = inv.b0[s] + inv.b1[s] * m_th[s]
        if crs:
            m_th[s + 1] = _ces_crs_location(
                t.g1[s] * np.exp(t.exp_ratio_skill[s] * m_th[s]),
                t.g2[s] * np.exp(t.exp_ratio_invest[s] * m_i[s]),
                t.outer_exp[s],
            )
    return m_th, l_th, m_i


def from_tilde_ces(tilde: TildeParams, restrictions: RestrictionSet) -> ModelSpec:
    """The unique CES model consistent with ``tilde`` and the restrictions."""
    m_th, l_th, m_i = _ces_scale_paths(tilde, restrictions)
    return retarget_ces(tilde, m_th, l_th, m_i)


def obs_equivalent_ces(spec: ModelSpec, target: RestrictionSet) -> ModelSpec:
    """Observationally equivalent CES parameters satisfying ``target``."""
    return from_tilde_ces(to_tilde_ces(spec), target)


# --------------------------------------------------------------------------
# technology-dispatching wrappers
# --------------------------------------------------------------------------


def to_tilde(spec: ModelSpec) -> TildeParams:
    return to_tilde_translog(spec) if spec.is_translog else to_tilde_ces(spec)


def from_tilde(tilde: TildeParams, restrictions: RestrictionSet) -> ModelSpec:
    if tilde.is_translog:
        return from_tilde_translog(tilde, restrictions)
    return from_tilde_ces(tilde, restrictions)


def obs_equivalent(spec: ModelSpec, target: RestrictionSet) -> ModelSpec:
    return from_tilde(to_tilde(spec), target)


def anchor_transform(tilde: TildeParams) -> ModelSpec:
    """Re-express skills in adult-outcome units.

    The anchored latent is ln v_t = rho0~ + rho1~ ln th~_t, which makes the
    anchor equation Q = ln v_T + eta_Q.  This is the retargeting with
    first-measure scale 1/rho1~ and location -rho0~/rho1~ in every period,
    so the anchored system is generally not first-measure normalized.
    """
    rho0, rho1 = tilde.anchor.rho0, tilde.anchor.rho1
    if rho1 == 0.0:
        raise SpecError("cannot anchor with rho1 = 0")
    T = tilde.T
    skill_mu = np.full(T + 1, -rho0 / rho1)
    skill_lam = np.full(T + 1, 1.0 / rho1)
    invest_mu = np.zeros(T)
    if tilde.is_translog:
        return retarget_translog(tilde, skill_mu, skill_lam, invest_mu, np.ones(T))
    return retarget_ces(tilde, skill_mu, skill_lam, invest_mu)


def satisfies_restrictions(spec: ModelSpec, restrictions: RestrictionSet, atol: float = 1e-9) -> bool:
    """Whether a model satisfies the initial-scale restriction plus the
    selected identifying restrictions (used for equivalence verdicts)."""
    translog = isinstance(spec.tech, TransLogTech)
    sk = spec.meas.skill
    iv = spec.meas.invest
    ok = abs(sk.lam[0, 0] - 1.0) <= atol and abs(sk.mu[0, 0]) <= atol
    if restrictions.skill == "ageInvariantSkill":
        # In the CES family the skill loadings belong to the ces_extra group;
        # age-invariance here constrains locations only.
        ok &= bool(np.all(np.abs(sk.mu[:, 0] - sk.mu[0, 0]) <= atol))
        if translog:
            ok &= bool(np.all(np.abs(sk.lam[:, 0] - sk.lam[0, 0]) <= atol))
    else:  # knownScaleTech
        if translog:
            ok &= bool(
                np.all(np.abs(spec.tech.a) <= atol)
                and np.all(np.abs(spec.tech.g1 + spec.tech.g2 + spec.tech.g3 - 1.0) <= atol)
            )
        else:
            ok &= bool(np.all(np.abs(spec.tech.g1 + spec.tech.g2 - 1.0) <= atol))
    if restrictions.invest == "ageInvariantInvest":
        ok &= bool(np.all(np.abs(iv.mu[:, 0]) <= atol))
        if translog:
            ok &= bool(np.all(np.abs(iv.lam[:, 0] - 1.0) <= atol))
    else:  # crsOrZeroIntercept
        ok &= bool(np.all(np.abs(spec.invest.b0) <= atol))
        if translog:
            ok &= bool(np.all(np.abs(spec.invest.b1 + spec.invest.b2 - 1.0) <= atol))
    if not isinstance(spec.tech, TransLogTech) and restrictions.ces_extra is not None:
        if restrictions.ces_extra == "ageInvariantLoading":
            ok &= bool(np.all(np.abs(sk.lam[:, 0] - sk.lam[0, 0]) <= atol))
        else:  # psiOne
            ok &= bool(np.all(np.abs(spec.tech.psi - 1.0) <= atol))
    return ok


def ces_normalized_form(g1: float, g2: float, sigma: float, theta_bar: float, i_bar: float):
    """Share/level form of a CES aggregator standardized at (theta_bar, i_bar).

    Returns (gamma_bar, a_bar) with
    a_bar * (gamma_bar (th/th_bar)^sigma + (1-gamma_bar) (I/I_bar)^sigma)^(1/sigma)
    identical to (g1 th^sigma + g2 I^sigma)^(1/sigma).
    """
    if g1 <= 0 or g2 <= 0:
        raise SpecError("CES share coefficients must be positive")
    if sigma == 0:
        raise SpecError("sigma must be nonzero")
    if theta_bar <= 0 or i_bar <= 0:
        raise SpecError("standardization points must be positive")
    t1 = g1 * theta_bar**sigma
    t2 = g2 * i_bar**sigma
    gamma_bar = t1 / (t1 + t2)
    a_bar = (t1 + t2) ** (1.0 / sigma)
    return gamma_bar, a_bar

"""Second-step structural estimation from latent draws.

Trans-log technologies are estimated by per-period least squares with the
investment residual as a control function.  CES technologies are estimated
by damped nonlinear least squares in the identified parameterization,
jointly over transitions, with the first-period skill scale pinned to one
and the remaining scales either implied by a unit returns parameter
("psiOne") or pinned by age-invariant first loadings
("ageInvariantLoading").  The conventional fixed-scale variant pins every
loading to one, which is overidentifying and serves as the bias baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .firststep import EstimationDraws, LoadingEstimates
from .mixtures import MixtureModel
from .optimize import LmResult, levenberg_marquardt
from .params import (
    AnchorParams,
    CesTildeTech,
    InvestmentParams,
    MeasurementBlock,
    MeasurementParams,
    ModelSpec,
    Periods,
    SpecError,
    TildeParams,
    TransLogTech,
)
from .reparam import retarget_ces, retarget_translog

__all__ = [
    "EstimatorOutput",
    "fit_investment",
    "fit_translog",
    "fit_ces_invariant",
    "fit_ces_fixed_scale",
    "recover_structural",
    "CesProblem",
]


@dataclass(frozen=True)
class EstimatorOutput:
    """Estimates in the normalized parameterization plus recovered scales.

    ``tech_kind`` is 'translog' or 'ces'.  For CES, sigma/gammas/psi are
    stated in the lam_skill-normalized units; lam_skill has T+1 entries
    (first is 1) and lam_invest T entries.  ``variant`` records whether the
    scales were estimated ('invariant') or pinned to one ('fixedScale').
    """

    tech_kind: str
    variant: str
    restriction: str
    g1: np.ndarray
    g2: np.ndarray
    sigma: np.ndarray
    psi: np.ndarray
    g3: np.ndarray
    a: np.ndarray
    lam_skill: np.ndarray
    lam_invest: np.ndarray
    kappa_tilde: np.ndarray
    shock_sd: np.ndarray
    invest_tilde: InvestmentParams
    anchor_tilde: AnchorParams
    objective: float
    iterations: int
    grad_norm: float
    converged: bool
    n_starts: int = 1

    @property
    def T(self) -> int:
        return self.lam_invest.shape[0]


def _ols(y: np.ndarray, X: np.ndarray, what: str):
    n, k = X.shape
    rank = np.linalg.matrix_rank(X)
    if rank < k:
        raise SpecError(f"rank-deficient design in {what} (collinear draws)")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta, y - X @ beta


def fit_investment(draws: EstimationDraws, t: int):
    """Least squares of ln I~_t on (1, ln th~_t, ln Y); residuals feed the
    control function."""
    X = np.column_stack([np.ones(draws.J), draws.ln_theta[t], draws.ln_y])
    beta, resid = _ols(draws.ln_invest[t], X, f"investment equation t={t}")
    return beta[0], beta[1], beta[2], resid


def _fit_investment_all(draws: EstimationDraws):
    T = draws.T
    b = np.zeros((T, 3))
    eta_sd = np.zeros(T)
    resids = np.zeros((T, draws.J))
    for t in range(T):
        b0, b1, b2, r = fit_investment(draws, t)
        b[t] = (b0, b1, b2)
        resids[t] = r
        eta_sd[t] = max(r.std(), 1e-12)
    return (
        InvestmentParams(b0=b[:, 0], b1=b[:, 1], b2=b[:, 2], eta_sd=eta_sd),
        resids,
    )


def _fit_anchor(draws: EstimationDraws) -> AnchorParams:
    X = np.column_stack([np.ones(draws.J), draws.ln_theta[draws.T]])
    beta, resid = _ols(draws.q, X, "anchor equation")
    return AnchorParams(
        rho0=float(beta[0]),
        rho1=float(beta[1]) if beta[1] != 0 else 1e-12,
        eta_q_sd=max(float(resid.std()), 1e-12),
    )


def fit_translog(draws: EstimationDraws, controls: np.ndarray | None = None) -> EstimatorOutput:
    """Per-period least squares of ln th~_{t+1} on
    (1, ln th~_t, ln I~_t, interaction, investment residual)."""
    invest, resids = _fit_investment_all(draws)
    if controls is None:
        controls = resids
    T = draws.T
    a = np.zeros(T)
    g1 = np.zeros(T)
    g2 = np.zeros(T)
    g3 = np.zeros(T)
    kap = np.zeros(T)
    shock_sd = np.zeros(T)
    sse = 0.0
    for t in range(T):
        X = np.column_stack(
            [
                np.ones(draws.J),
                draws.ln_theta[t],
                draws.ln_invest[t],
                draws.ln_theta[t] * draws.ln_invest[t],
                controls[t],
            ]
        )
        beta, resid = _ols(draws.ln_theta[t + 1], X, f"technology equation t={t}")
        a[t], g1[t], g2[t], g3[t], kap[t] = beta
        eta_var = kap[t] ** 2 * invest.eta_sd[t] ** 2 + resid.var()
        shock_sd[t] = max(np.sqrt(eta_var), 1e-12)
        sse += float(resid @ resid)
    return EstimatorOutput(
        tech_kind="translog",
        variant="invariant",
        restriction="ageInvariantLoading",
        g1=g1,
        g2=g2,
        sigma=np.ones(T),
        psi=np.ones(T),
        g3=g3,
        a=a,
        lam_skill=np.ones(T + 1),
        lam_invest=np.ones(T),
        kappa_tilde=kap,
        shock_sd=shock_sd,
        invest_tilde=invest,
        anchor_tilde=_fit_anchor(draws),
        objective=sse,
        iterations=0,
        grad_norm=0.0,
        converged=True,
    )


# --------------------------------------------------------------------------
# CES nonlinear least squares
# --------------------------------------------------------------------------


class CesProblem:
    """Joint NLS problem over all transitions.

    Free parameters per transition t: ln gamma_1t, ln gamma_2t, ln |sigma_t|
    (sign fixed per start), kappa_t, and per ``mode``:

    - 'psiOne':   psi_t = 1; ln lam_skill_t free for t = 1..T
    - 'ageInvariantLoading': lam_skill_t = 1; ln psi_t free
    - 'fixedScale': lam_skill = lam_invest = 1, psi = 1 (no scale params)

    ln lam_invest_t is free except under 'fixedScale'.
    """

    def __init__(self, draws: EstimationDraws, controls: np.ndarray, mode: str, sigma_signs):
        self.d = draws
        self.controls = controls
        self.mode = mode
        self.T = draws.T
        self.signs = np.asarray(sigma_signs, dtype=float)
        self.x = [np.ascontiguousarray(draws.ln_theta[t]) for t in range(self.T)]
        self.y = [np.ascontiguousarray(draws.ln_invest[t]) for t in range(self.T)]
        self.z = [draws.ln_theta[t + 1] for t in range(self.T)]
        # parameter layout
        names = []
        for t in range(self.T):
            names += [f"lg1_{t}", f"lg2_{t}", f"lsig_{t}", f"kap_{t}"]
            if mode != "fixedScale":
                names.append(f"llami_{t}")
            if mode == "ageInvariantLoading":
                names.append(f"lpsi_{t}")
        if mode == "psiOne":
            names += [f"llamth_{t}" for t in range(1, self.T + 1)]
        self.names = names
        self.index = {n: i for i, n in enumerate(names)}

    @property
    def n_params(self) -> int:
        return len(self.names)

    def unpack(self, p: np.ndarray):
        ix = self.index
        T = self.T
        g1 = np.exp([p[ix[f"lg1_{t}"]] for t in range(T)])
        g2 = np.exp([p[ix[f"lg2_{t}"]] for t in range(T)])
        sigma = self.signs * np.exp([p[ix[f"lsig_{t}"]] for t in range(T)])
        kap = np.array([p[ix[f"kap_{t}"]] for t in range(T)])
        if self.mode == "fixedScale":
            lam_i = np.ones(T)
        else:
            lam_i = np.exp([p[ix[f"llami_{t}"]] for t in range(T)])
        if self.mode == "psiOne":
            lam_th = np.concatenate([[1.0], np.exp([p[ix[f"llamth_{t}"]] for t in range(1, T + 1)])])
            psi = np.ones(T)
        elif self.mode == "ageInvariantLoading":
            lam_th = np.ones(T + 1)
            psi = np.exp([p[ix[f"lpsi_{t}"]] for t in range(T)])
        else:
            lam_th = np.ones(T + 1)
            psi = np.ones(T)
        return g1, g2, sigma, kap, lam_i, lam_th, psi

    def residual_jac(self, p: np.ndarray):
        g1, g2, sigma, kap, lam_i, lam_th, psi = self.unpack(p)
        J_rows = self.T * self.d.J
        r = np.empty(J_rows)
        J = np.zeros((J_rows, self.n_params))
        ix = self.index
        for t in range(self.T):
            x, y, z = self.x[t], self.y[t], self.z[t]
            eta = self.controls[t]
            r_th = sigma[t] / lam_th[t]
            r_i = sigma[t] / lam_i[t]
            outer = lam_th[t + 1] * psi[t] / sigma[t]
            L, sh1 = _kernels.ces_parts(x, y, np.log(g1[t]), np.log(g2[t]), r_th, r_i)
            sh2 = 1.0 - sh1
            pred = outer * L + kap[t] * eta
            sl = slice(t * self.d.J, (t + 1) * self.d.J)
            r[sl] = z - pred
            # residual derivative = -d pred / d param
            J[sl, ix[f"lg1_{t}"]] = -outer * sh1
            J[sl, ix[f"lg2_{t}"]] = -outer * sh2
            J[sl, ix[f"lsig_{t}"]] = -(-outer * L + outer * (sh1 * x * r_th + sh2 * y * r_i))
            J[sl, ix[f"kap_{t}"]] = -eta
            if self.mode != "fixedScale":
                J[sl, ix[f"llami_{t}"]] = outer * sh2 * y * r_i
            if self.mode == "ageInvariantLoading":
                J[sl, ix[f"lpsi_{t}"]] = -outer * L
            if self.mode == "psiOne":
                if t >= 1:
                    J[sl, ix[f"llamth_{t}"]] = outer * sh1 * x * r_th
                J[sl, ix[f"llamth_{t + 1}"]] = -outer * L
        return r, J

    def pack_start(self, sigma0: float, lam_i0: float):
        p = np.zeros(self.n_params)
        ix = self.index
        for t in range(self.T):
            x, y, z = self.x[t], self.y[t], self.z[t]
            r_th = sigma0 / 1.0
            r_i = sigma0 / lam_i0
            outer = 1.0 / sigma0
            L, _ = _kernels.ces_parts(x, y, 0.0, 0.0, r_th, r_i)
            lng = (z.mean() - outer * L.mean()) / outer  # match the mean response
            p[ix[f"lg1_{t}"]] = lng
            p[ix[f"lg2_{t}"]] = lng
            p[ix[f"lsig_{t}"]] = np.log(abs(sigma0))
            if self.mode != "fixedScale":
                p[ix[f"llami_{t}"]] = np.log(lam_i0)
        return p


def _fit_ces(
    draws: EstimationDraws,
    controls: np.ndarray | None,
    mode: str,
    variant: str,
    restriction: str,
    max_iter: int = 500,
) -> EstimatorOutput:
    invest, resids = _fit_investment_all(draws)
    if controls is None:
        controls = resids
    # documented multistart grid: four sigma values crossed with two
    # investment-scale guesses (unit and the sd ratio of the draws)
    sd_ratio = float(
        np.median(
            [draws.ln_invest[t].std() / max(draws.ln_theta[t].std(), 1e-12) for t in range(draws.T)]
        )
    )
    sd_ratio = min(max(sd_ratio, 1e-3), 1e3)
    sigma_starts = (-1.0, -0.5, 0.5, 1.0)
    lam_starts = (1.0, sd_ratio) if mode != "fixedScale" else (1.0,)
    best: tuple[LmResult, CesProblem] | None = None
    n_starts = 0
    for s0 in sigma_starts:
        for l0 in lam_starts:
            prob = CesProblem(draws, controls, mode, np.full(draws.T, np.sign(s0)))
            res = levenberg_marquardt(
                prob.residual_jac, prob.pack_start(s0, l0), max_iter=max_iter
            )
            n_starts += 1
            if best is None or res.objective < best[0].objective - 1e-12:
                best = (res, prob)
    res, prob = best
    g1, g2, sigma, kap, lam_i, lam_th, psi = prob.unpack(res.params)
    shock_sd = np.zeros(draws.T)
    r, _ = prob.residual_jac(res.params)
    for t in range(draws.T):
        resid_var = r[t * draws.J : (t + 1) * draws.J].var()
        shock_sd[t] = max(
            np.sqrt(kap[t] ** 2 * invest.eta_sd[t] ** 2 + resid_var), 1e-12
        )
    return EstimatorOutput(
        tech_kind="ces",
        variant=variant,
        restriction=restriction,
        g1=g1,
        g2=g2,
        sigma=sigma,
        psi=psi,
        g3=np.zeros(draws.T),
        a=np.zeros(draws.T),
        lam_skill=lam_th,
        lam_invest=lam_i,
        kappa_tilde=kap,
        shock_sd=shock_sd,
        invest_tilde=invest,
        anchor_tilde=_fit_anchor(draws),
        objective=res.objective,
        iterations=res.iterations,
        grad_norm=res.grad_norm,
        converged=res.converged,
        n_starts=n_starts,
    )


def fit_ces_invariant(
    draws: EstimationDraws,
    controls: np.ndarray | None = None,
    restriction: str = "psiOne",
    max_iter: int = 500,
) -> EstimatorOutput:
    """Invariant CES estimator: scales estimated, not assumed.

    ``restriction`` picks the identifying convention for the skill-loading
    path: 'psiOne' (unit returns, loadings implied) or
    'ageInvariantLoading' (constant loadings, returns estimated).
    """
    if restriction not in ("psiOne", "ageInvariantLoading"):
        raise SpecError("restriction must be 'psiOne' or 'ageInvariantLoading'")
    return _fit_ces(draws, controls, restriction, "invariant", restriction)


def fit_ces_fixed_scale(
    draws: EstimationDraws, controls: np.ndarray | None = None, max_iter: int = 500
) -> EstimatorOutput:
    """Conventional estimator imposing unit loadings on both latents.

    Consistent only when the true first loadings are one; under a change of
    measurement units it is biased."""
    return _fit_ces(draws, controls, "fixedScale", "fixedScale", "fixedScale")


# --------------------------------------------------------------------------
# recovery of the structural parameterization
# --------------------------------------------------------------------------


def output_tilde_params(
    out: EstimatorOutput, loadings: LoadingEstimates, latent_mixture: MixtureModel
) -> TildeParams:
    """Assemble the identified-parameterization bundle from the two steps."""
    T = out.T
    meas = MeasurementParams(
        skill=MeasurementBlock(
            mu=loadings.mu_tilde["skill"],
            lam=loadings.lambda_tilde["skill"],
            error_sd=np.sqrt(loadings.error_var["skill"]),
        ),
        invest=MeasurementBlock(
            mu=loadings.mu_tilde["invest"],
            lam=loadings.lambda_tilde["invest"],
            error_sd=np.sqrt(loadings.error_var["invest"]),
        ),
    )
    init = latent_mixture.marginal([0, 2 * T + 1])
    if out.tech_kind == "translog":
        tech = TransLogTech(
            a=out.a,
            g1=out.g1,
            g2=out.g2,
            g3=out.g3,
            shock_sd=out.shock_sd,
            kappa=out.kappa_tilde,
        )
    else:
        tech = CesTildeTech(
            g1=out.g1,
            g2=out.g2,
            exp_ratio_skill=out.sigma / out.lam_skill[:-1],
            exp_ratio_invest=out.sigma / out.lam_invest,
            outer_exp=out.lam_skill[1:] * out.psi / out.sigma,
            shock_sd=out.shock_sd,
            kappa=out.kappa_tilde,
        )
    return TildeParams(
        periods=Periods(T=T),
        tech=tech,
        meas=meas,
        invest=out.invest_tilde,
        anchor=out.anchor_tilde,
        init_dist=init,
    )


def recover_structural(
    out: EstimatorOutput, loadings: LoadingEstimates, latent_mixture: MixtureModel
) -> ModelSpec:
    """Full model in the estimated-scale parameterization (locations zero).

    Sending the result back through the tilde map reproduces the estimates.
    """
    if np.any(out.lam_skill == 0.0) or np.any(out.lam_invest == 0.0):
        raise SpecError("estimated scale of zero; cannot recover structural parameters")
    tilde = output_tilde_params(out, loadings, latent_mixture)
    T = out.T
    if out.tech_kind == "translog":
        return retarget_translog(
            tilde, np.zeros(T + 1), out.lam_skill, np.zeros(T), out.lam_invest
        )
    return retarget_ces(tilde, np.zeros(T + 1), out.lam_skill, np.zeros(T))

"""First-step estimation: measurement system and latent joint distribution.

Loadings and intercepts of the normalized (first-measure) parameterization
are recovered from covariance ratios against reference measures taken from
other periods; the joint law of the latent log-vector
(ln th~_0..T, ln I~_0..T-1, ln Y) is then fit as a finite Gaussian mixture
by EM under the linear observation layer with error variances held fixed.

Reference choice and EM initialization are deliberately scale-equivariant:
rescaling the measures maps every intermediate quantity through the same
affine change, so downstream invariant functionals are reproduced exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .mixtures import MixtureModel
from .simulate import LatentPanel, mix_seed

__all__ = [
    "LoadingEstimates",
    "EmConfig",
    "EstimationDraws",
    "IdentificationError",
    "estimate_loadings",
    "fit_latent_mixture",
    "mixture_bic",
    "draw_latent",
    "draws_from_panel",
    "make_estimation_draws",
]

logger = logging.getLogger(__name__)

_COV_EIG_FLOOR = 1e-8


class IdentificationError(RuntimeError):
    """Sample covariances too weak to identify the measurement system."""


@dataclass(frozen=True)
class LoadingEstimates:
    """Normalized measurement-system estimates.

    lambda_tilde/mu_tilde: dict with 'skill' (T+1, M) and 'invest' (T, M)
    arrays, first columns exactly 1 and 0; error_var likewise; signal_var
    holds the implied variance of each first-measure latent.
    """

    lambda_tilde: dict
    mu_tilde: dict
    error_var: dict
    signal_var: dict
    rho0: float
    rho1: float
    anchor_err_var: float
    n: int

    @property
    def T(self) -> int:
        return self.lambda_tilde["invest"].shape[0]


def _cov_and_se(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xc = x - x.mean()
    yc = y - y.mean()
    n = x.shape[0]
    c = float(xc @ yc) / n
    se = np.sqrt(max(float((xc**2) @ (yc**2)) / n - c * c, 0.0) / n)
    return c, se


def _stack_measures(panel: LatentPanel):
    """All measures as a list of (var, t, m, values)."""
    out = []
    Ts, Ms = panel.z_skill.shape[:2]
    Ti, Mi = panel.z_invest.shape[:2]
    for t in range(Ts):
        for m in range(Ms):
            out.append(("skill", t, m, panel.z_skill[t, m]))
    for t in range(Ti):
        for m in range(Mi):
            out.append(("invest", t, m, panel.z_invest[t, m]))
    return out


def _ratio_against_refs(target: np.ndarray, base: np.ndarray, refs) -> float:
    """Weighted covariance-ratio estimate of loading(target)/loading(base).

    Admissible references must have |cov(ref, base)| above 5 of its own
    standard errors; estimates from all admissible references are combined
    with squared-correlation weights (a scale-free precision proxy).
    """
    n = base.shape[0]
    base_sd = base.std()
    est, wts = [], []
    for ref in refs:
        c_base, se_base = _cov_and_se(ref, base)
        if abs(c_base) <= 5.0 * se_base:
            continue
        c_tgt, _ = _cov_and_se(ref, target)
        corr = c_base / (ref.std() * base_sd)
        est.append(c_tgt / c_base)
        wts.append(corr * corr)
    if not est:
        raise IdentificationError(
            "reference covariances indistinguishable from zero; "
            "loading ratios are not identified in this sample"
        )
    wts = np.asarray(wts)
    return float(np.asarray(est) @ wts / wts.sum())


def estimate_loadings(panel: LatentPanel) -> LoadingEstimates:
    """Recover normalized loadings, intercepts, error variances and the anchor."""
    if panel.n < 50:
        raise IdentificationError("need at least 50 observations")
    all_meas = _stack_measures(panel)
    blocks = {"skill": panel.z_skill, "invest": panel.z_invest}
    lam = {}
    mu = {}
    evar = {}
    svar = {}
    for var, z in blocks.items():
        P, M, _ = z.shape
        lam[var] = np.ones((P, M))
        mu[var] = np.zeros((P, M))
        evar[var] = np.zeros((P, M))
        svar[var] = np.zeros(P)
        for t in range(P):
            refs = [vals for (v2, t2, _, vals) in all_meas if (v2, t2) != (var, t)]
            base = z[t, 0]
            for m in range(1, M):
                lam[var][t, m] = _ratio_against_refs(z[t, m], base, refs)
                mu[var][t, m] = z[t, m].mean() - lam[var][t, m] * base.mean()
            # implied first-measure signal variance from within-period pairs
            if M >= 2:
                est, wts = [], []
                for m1 in range(M):
                    for m2 in range(m1 + 1, M):
                        c, _ = _cov_and_se(z[t, m1], z[t, m2])
                        prod = lam[var][t, m1] * lam[var][t, m2]
                        est.append(c / prod)
                        wts.append(prod * prod)
                wts = np.asarray(wts)
                svar[var][t] = float(np.asarray(est) @ wts / wts.sum())
                for m in range(M):
                    evar[var][t, m] = max(
                        z[t, m].var() - lam[var][t, m] ** 2 * svar[var][t], 0.0
                    )
            else:
                # single observed measure: no error component
                svar[var][t] = z[t, 0].var()
                evar[var][t, 0] = 0.0
    # anchor: Q is one more measure of the final-period skill
    T = panel.z_invest.shape[0]
    base = panel.z_skill[T, 0]
    refs = [vals for (v2, t2, _, vals) in all_meas if (v2, t2) != ("skill", T)]
    rho1 = _ratio_against_refs(panel.q, base, refs)
    rho0 = float(panel.q.mean() - rho1 * base.mean())
    anchor_err = max(float(panel.q.var()) - rho1**2 * svar["skill"][T], 1e-12)
    return LoadingEstimates(
        lambda_tilde=lam,
        mu_tilde=mu,
        error_var=evar,
        signal_var=svar,
        rho0=rho0,
        rho1=rho1,
        anchor_err_var=anchor_err,
        n=panel.n,
    )


# --------------------------------------------------------------------------
# EM for the latent mixture
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EmConfig:
    restarts: int = 10
    max_iter: int = 1000
    tol: float = 1e-8
    kmeans_iters: int = 25
    seed: int = 0
    ridge: float = 0.05


def _observation_layer(panel: LatentPanel, loadings: LoadingEstimates):
    """(y, Lambda, c, R, dim): y = c + Lambda x + noise, diag(R) noise vars.

    Latent order: ln th~_0..T, ln I~_0..T-1, ln Y; income is included as a
    noiseless observation of its own coordinate, and Q as a measure of the
    final-period skill with loading rho1.
    """
    T = panel.z_invest.shape[0]
    dim = 2 * T + 2
    rows, cons, rvar, ys = [], [], [], []

    def add(coord, loading, intercept, noise_var, values):
        r = np.zeros(dim)
        r[coord] = loading
        rows.append(r)
        cons.append(intercept)
        rvar.append(noise_var)
        ys.append(values)

    for t in range(T + 1):
        for m in range(panel.z_skill.shape[1]):
            add(
                t,
                loadings.lambda_tilde["skill"][t, m],
                loadings.mu_tilde["skill"][t, m],
                loadings.error_var["skill"][t, m],
                panel.z_skill[t, m],
            )
    for t in range(T):
        for m in range(panel.z_invest.shape[1]):
            add(
                T + 1 + t,
                loadings.lambda_tilde["invest"][t, m],
                loadings.mu_tilde["invest"][t, m],
                loadings.error_var["invest"][t, m],
                panel.z_invest[t, m],
            )
    add(T, loadings.rho1, loadings.rho0, loadings.anchor_err_var, panel.q)
    add(2 * T + 1, 1.0, 0.0, 0.0, panel.ln_y)
    y = np.ascontiguousarray(np.column_stack(ys))
    return y, np.array(rows), np.array(cons), np.array(rvar), dim


def _composite_scores(panel: LatentPanel, loadings: LoadingEstimates) -> np.ndarray:
    """Per-coordinate averages of (Z - mu~)/lam~: crude latent proxies for init."""
    T = panel.z_invest.shape[0]
    cols = []
    for t in range(T + 1):
        lam = loadings.lambda_tilde["skill"][t]
        mu = loadings.mu_tilde["skill"][t]
        cols.append(((panel.z_skill[t] - mu[:, None]) / lam[:, None]).mean(axis=0))
    for t in range(T):
        lam = loadings.lambda_tilde["invest"][t]
        mu = loadings.mu_tilde["invest"][t]
        cols.append(((panel.z_invest[t] - mu[:, None]) / lam[:, None]).mean(axis=0))
    cols.append(panel.ln_y)
    return np.column_stack(cols)


def _kmeans_pp(X: np.ndarray, K: int, rng: np.random.Generator, iters: int):
    """k-means++ seeding plus Lloyd iterations on standardized columns."""
    Z = (X - X.mean(axis=0)) / np.maximum(X.std(axis=0), 1e-12)
    n = Z.shape[0]
    centers = np.empty((K, Z.shape[1]))
    centers[0] = Z[rng.integers(n)]
    d2 = np.sum((Z - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centers[k] = Z[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, np.sum((Z - centers[k]) ** 2, axis=1))
    labels = np.zeros(n, dtype=int)
    for _ in range(iters):
        dists = ((Z[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        for k in range(K):
            mask = labels == k
            if mask.any():
                centers[k] = Z[mask].mean(axis=0)
            else:
                centers[k] = Z[dists.min(axis=1).argmax()]
    return labels


def _floor_cov(S: np.ndarray, regularized: list) -> np.ndarray:
    S = 0.5 * (S + S.T)
    w = np.linalg.eigvalsh(S)[0]
    if w < _COV_EIG_FLOOR:
        bump = _COV_EIG_FLOOR - w + 1e-10
        S = S + bump * np.eye(S.shape[0])
        regularized.append(bump)
    return S


def _em_run(y, Lam, c, R, dim, K, init_labels, cfg: EmConfig):
    n = y.shape[0]
    regularized: list[float] = []

    # initialize from cluster moments of the composite scores mapped to latents
    weights = np.empty(K)
    means = np.empty((K, dim))
    covs = np.empty((K, dim, dim))
    scores = init_labels["scores"]
    labels = init_labels["labels"]
    total_cov = np.cov(scores.T) + 1e-6 * np.eye(dim)
    for k in range(K):
        mask = labels == k
        weights[k] = max(mask.mean(), 1.0 / (10 * K))
        if mask.sum() >= 2:
            means[k] = scores[mask].mean(axis=0)
            covs[k] = np.cov(scores[mask].T) + cfg.ridge * np.diag(np.diag(total_cov))
        else:
            means[k] = scores.mean(axis=0)
            covs[k] = total_cov.copy()
        covs[k] = _floor_cov(covs[k], regularized)
    weights = weights / weights.sum()

    ll_prev = -np.inf
    ll_trace = []
    yc = y - c
    for it in range(cfg.max_iter):
        # E-step
        obs_means = means @ Lam.T
        chols = np.empty((K, Lam.shape[0], Lam.shape[0]))
        gains = np.empty((K, dim, Lam.shape[0]))
        post_covs = np.empty((K, dim, dim))
        for k in range(K):
            obs_cov = Lam @ covs[k] @ Lam.T + np.diag(R)
            chols[k] = np.linalg.cholesky(obs_cov)
            cross = covs[k] @ Lam.T
            gains[k] = np.linalg.solve(obs_cov, cross.T).T
            post_covs[k] = covs[k] - gains[k] @ cross.T
        logpdf = _kernels.mixture_logpdf(yc, np.ascontiguousarray(obs_means), chols)
        logpost = logpdf + np.log(weights)
        ll_i = logsumexp(logpost, axis=1)
        ll = float(ll_i.sum())
        ll_trace.append(ll)
        resp = np.exp(logpost - ll_i[:, None])
        if ll + 1e-9 * (1.0 + abs(ll)) < ll_prev:
            raise RuntimeError(f"EM log-likelihood decreased at iteration {it}")
        done = abs(ll - ll_prev) <= cfg.tol * (1.0 + abs(ll))
        ll_prev = ll

        # M-step (observation layer fixed)
        Nk = resp.sum(axis=0)
        new_means = np.empty_like(means)
        new_covs = np.empty_like(covs)
        for k in range(K):
            xhat = means[k] + (yc - obs_means[k]) @ gains[k].T
            mk = resp[:, k] @ xhat / Nk[k]
            d = xhat - mk
            Sk = (resp[:, k] * d.T) @ d / Nk[k] + post_covs[k]
            new_means[k] = mk
            new_covs[k] = _floor_cov(Sk, regularized)
        weights = Nk / n
        means, covs = new_means, new_covs
        if done:
            break
    if regularized:
        logger.info("EM regularized %d collapsing covariances", len(regularized))
    return MixtureModel(weights=weights / weights.sum(), means=means, covs=covs), ll_prev, ll_trace


def fit_latent_mixture(
    panel: LatentPanel,
    loadings: LoadingEstimates,
    K: int = 2,
    em_config: EmConfig | None = None,
) -> MixtureModel:
    """Maximum-likelihood Gaussian mixture for the latent log-vector.

    Error variances and loadings stay fixed at their first-step values; EM
    runs from ``restarts`` k-means++ initializations and keeps the best
    final log-likelihood.
    """
    mix, _, _ = fit_latent_mixture_detailed(panel, loadings, K, em_config)
    return mix


def fit_latent_mixture_detailed(
    panel: LatentPanel,
    loadings: LoadingEstimates,
    K: int = 2,
    em_config: EmConfig | None = None,
):
    cfg = em_config or EmConfig()
    if K < 1:
        raise ValueError("K must be >= 1")
    if panel.n <= K:
        raise ValueError("more mixture components than observations")
    y, Lam, c, R, dim = _observation_layer(panel, loadings)
    scores = _composite_scores(panel, loadings)
    best = None
    for r in range(max(cfg.restarts, 1)):
        rng = np.random.Generator(np.random.Philox(mix_seed(cfg.seed, 7000 + r)))
        labels = (
            _kmeans_pp(scores, K, rng, cfg.kmeans_iters)
            if K > 1
            else np.zeros(panel.n, dtype=int)
        )
        mix, ll, trace = _em_run(
            y, Lam, c, R, dim, K, {"scores": scores, "labels": labels}, cfg
        )
        if best is None or ll > best[1]:
            best = (mix, ll, trace)
        if K == 1:
            break  # single component: EM is deterministic, restarts identical
    return best


def mixture_bic(loglik: float, K: int, dim: int, n: int) -> float:
    n_params = (K - 1) + K * dim + K * dim * (dim + 1) // 2
    return -2.0 * loglik + n_params * np.log(n)


def draw_latent(mix: MixtureModel, J: int, seed: int) -> np.ndarray:
    """J iid draws from the latent mixture; same seed, same table."""
    rng = np.random.Generator(np.random.Philox(mix_seed(seed, 9100)))
    return mix.draw(J, rng)


@dataclass(frozen=True)
class EstimationDraws:
    """Synthetic latent panel drawn from the fitted mixture (tilde scale)."""

    ln_theta: np.ndarray  # (T+1, J)
    ln_invest: np.ndarray  # (T, J)
    ln_y: np.ndarray  # (J,)
    q: np.ndarray  # (J,)

    @property
    def J(self) -> int:
        return self.ln_y.shape[0]

    @property
    def T(self) -> int:
        return self.ln_invest.shape[0]


def draws_from_panel(panel: LatentPanel) -> EstimationDraws:
    """Use simulated latent trajectories directly as a draw table (oracle path)."""
    if panel.ln_theta is None or panel.ln_invest is None:
        raise ValueError("panel does not carry latent trajectories")
    return EstimationDraws(
        ln_theta=panel.ln_theta,
        ln_invest=panel.ln_invest,
        ln_y=panel.ln_y,
        q=panel.q,
    )


def make_estimation_draws(
    mix: MixtureModel, loadings: LoadingEstimates, J: int, seed: int
) -> EstimationDraws:
    T = loadings.T
    x = draw_latent(mix, J, seed)
    rng = np.random.Generator(np.random.Philox(mix_seed(seed, 9200)))
    q = (
        loadings.rho0
        + loadings.rho1 * x[:, T]
        + np.sqrt(loadings.anchor_err_var) * rng.standard_normal(J)
    )
    return EstimationDraws(
        ln_theta=np.ascontiguousarray(x[:, : T + 1].T),
        ln_invest=np.ascontiguousarray(x[:, T + 1 : 2 * T + 1].T),
        ln_y=x[:, 2 * T + 1],
        q=q,
    )

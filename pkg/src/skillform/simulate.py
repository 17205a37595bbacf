"""Panel simulation, measure rescaling, and population moments.

Random draws come from named Philox substreams keyed by (equation, period,
measure), so a panel is bit-reproducible for a given seed no matter how the
surrounding code is parallelized, and coupled simulations (same seed,
transformed parameters) stay coupled draw-by-draw.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .mixtures import MixtureModel
from .params import (
    CesTech,
    CesTildeTech,
    MeasurementBlock,
    MeasurementParams,
    ModelSpec,
    SpecError,
    TildeParams,
    TransLogTech,
    spec_fingerprint,
)

__all__ = [
    "LatentPanel",
    "ScaleChange",
    "simulate_panel",
    "scale_measures",
    "scale_spec_measures",
    "population_moments",
    "MomentTable",
    "panel_to_csv",
    "panel_from_csv",
    "panel_to_cache",
    "panel_from_cache",
    "mix_seed",
]

TOOL_VERSION = "skillform 0.1.0"

# substream codes
_EQ_INIT = 1
_EQ_ETA_I = 2
_EQ_SHOCK = 3
_EQ_MEAS_SKILL = 4
_EQ_MEAS_INVEST = 5
_EQ_ETA_Q = 6


def _stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def mix_seed(seed: int, *idx: int) -> int:
    """Stable 63-bit child seed for (seed, idx...) (splitmix-style)."""
    x = int(seed) & (2**64 - 1)
    for i in idx:
        x = (x + 0x9E3779B97F4A7C15 + int(i)) & (2**64 - 1)
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & (2**64 - 1)
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & (2**64 - 1)
        x = x ^ (x >> 31)
    return x & (2**63 - 1)


@dataclass(frozen=True)
class ScaleChange:
    """Multiply every skill measure by s_theta and every investment measure by s_invest."""

    s_theta: float = 1.0
    s_invest: float = 1.0

    def __post_init__(self):
        if self.s_theta <= 0 or self.s_invest <= 0:
            raise SpecError("measure scale factors must be strictly positive")


@dataclass(frozen=True)
class LatentPanel:
    """Simulated trajectories plus all observables for n individuals.

    ln_theta: (T+1, n); ln_invest: (T, n); ln_y, q: (n,);
    z_skill: (T+1, M_s, n); z_invest: (T, M_i, n).
    """

    ln_theta: np.ndarray | None
    ln_invest: np.ndarray | None
    ln_y: np.ndarray
    q: np.ndarray
    z_skill: np.ndarray
    z_invest: np.ndarray
    seed: int
    spec_ref: str
    s_theta: float = 1.0
    s_invest: float = 1.0

    @property
    def n(self) -> int:
        return self.ln_y.shape[0]

    @property
    def T(self) -> int:
        return self.z_invest.shape[0]


def _transition(tech, t: int, ln_th: np.ndarray, ln_i: np.ndarray, eta: np.ndarray) -> np.ndarray:
    ln_th = np.ascontiguousarray(ln_th)
    ln_i = np.ascontiguousarray(ln_i)
    eta = np.ascontiguousarray(eta)
    if isinstance(tech, TransLogTech):
        return _kernels.translog_transition(
            ln_th, ln_i, tech.a[t], tech.g1[t], tech.g2[t], tech.g3[t], eta
        )
    if isinstance(tech, CesTech):
        r = tech.sigma[t]
        return _kernels.ces_transition(
            ln_th,
            ln_i,
            np.log(tech.g1[t]),
            np.log(tech.g2[t]),
            r,
            r,
            tech.psi[t] / r,
            eta,
        )
    if isinstance(tech, CesTildeTech):
        return _kernels.ces_transition(
            ln_th,
            ln_i,
            np.log(tech.g1[t]),
            np.log(tech.g2[t]),
            tech.exp_ratio_skill[t],
            tech.exp_ratio_invest[t],
            tech.outer_exp[t],
            eta,
        )
    raise SpecError(f"unknown technology {type(tech).__name__}")


def simulate_panel(spec: ModelSpec | TildeParams, n: int, seed: int) -> LatentPanel:
    """Simulate n individuals from the model. Bit-identical for equal seeds."""
    if isinstance(spec, TildeParams):
        spec = spec.as_spec()
    if n < 1:
        raise SpecError("n must be >= 1")
    T = spec.T
    tech = spec.tech
    inv = spec.invest

    init = spec.init_dist.draw(n, _stream(seed, _EQ_INIT, 0, 0))
    ln_y = init[:, 1]
    ln_theta = np.empty((T + 1, n))
    ln_invest = np.empty((T, n))
    ln_theta[0] = init[:, 0]

    resid_var = tech.shock_sd**2 - tech.kappa**2 * inv.eta_sd**2
    for t in range(T):
        eta_i = inv.eta_sd[t] * _stream(seed, _EQ_ETA_I, t, 0).standard_normal(n)
        ln_invest[t] = inv.b0[t] + inv.b1[t] * ln_theta[t] + inv.b2[t] * ln_y + eta_i
        noise = np.sqrt(resid_var[t]) * _stream(seed, _EQ_SHOCK, t, 0).standard_normal(n)
        eta_th = tech.kappa[t] * eta_i + noise
        ln_theta[t + 1] = _transition(tech, t, ln_theta[t], ln_invest[t], eta_th)
        if not np.all(np.isfinite(ln_theta[t + 1])):
            raise SpecError(f"non-finite skills produced at transition {t}")

    def measures(block: MeasurementBlock, latent: np.ndarray, eq: int) -> np.ndarray:
        P, M = block.mu.shape
        z = np.empty((P, M, n))
        for t in range(P):
            for m in range(M):
                eps = block.error_sd[t, m] * _stream(seed, eq, t, m).standard_normal(n)
                z[t, m] = block.mu[t, m] + block.lam[t, m] * latent[t] + eps
        return z

    z_skill = measures(spec.meas.skill, ln_theta, _EQ_MEAS_SKILL)
    z_invest = measures(spec.meas.invest, ln_invest, _EQ_MEAS_INVEST)
    q = (
        spec.anchor.rho0
        + spec.anchor.rho1 * ln_theta[T]
        + spec.anchor.eta_q_sd * _stream(seed, _EQ_ETA_Q, 0, 0).standard_normal(n)
    )
    return LatentPanel(
        ln_theta=ln_theta,
        ln_invest=ln_invest,
        ln_y=ln_y,
        q=q,
        z_skill=z_skill,
        z_invest=z_invest,
        seed=int(seed),
        spec_ref=spec_fingerprint(spec),
    )


def scale_measures(panel: LatentPanel, change: ScaleChange) -> LatentPanel:
    """Change the units of measurement of the observables; latents untouched."""
    return replace(
        panel,
        z_skill=panel.z_skill * change.s_theta,
        z_invest=panel.z_invest * change.s_invest,
        s_theta=panel.s_theta * change.s_theta,
        s_invest=panel.s_invest * change.s_invest,
    )


def scale_spec_measures(spec: ModelSpec, change: ScaleChange) -> ModelSpec:
    """The model whose simulated measures are the rescaled originals."""

    def scale_block(block: MeasurementBlock, s: float) -> MeasurementBlock:
        return MeasurementBlock(
            mu=block.mu * s, lam=block.lam * s, error_sd=block.error_sd * s
        )

    return replace(
        spec,
        meas=MeasurementParams(
            skill=scale_block(spec.meas.skill, change.s_theta),
            invest=scale_block(spec.meas.invest, change.s_invest),
        ),
    )


# --------------------------------------------------------------------------
# observable naming (also the CSV column order)
# --------------------------------------------------------------------------


def observable_names(spec_or_panel) -> list[str]:
    if isinstance(spec_or_panel, LatentPanel):
        Ts, Ms = spec_or_panel.z_skill.shape[:2]
        Ti, Mi = spec_or_panel.z_invest.shape[:2]
    else:
        Ts, Ms = spec_or_panel.meas.skill.mu.shape
        Ti, Mi = spec_or_panel.meas.invest.mu.shape
    names = ["lnY", "Q"]
    names += [f"Z_skill_t{t}_m{m + 1}" for t in range(Ts) for m in range(Ms)]
    names += [f"Z_invest_t{t}_m{m + 1}" for t in range(Ti) for m in range(Mi)]
    return names


def observable_matrix(panel: LatentPanel) -> np.ndarray:
    """(n, P) matrix in the documented column order: lnY, Q, then measures."""
    Ts, Ms, n = panel.z_skill.shape
    Ti, Mi = panel.z_invest.shape[:2]
    cols = [panel.ln_y, panel.q]
    cols += [panel.z_skill[t, m] for t in range(Ts) for m in range(Ms)]
    cols += [panel.z_invest[t, m] for t in range(Ti) for m in range(Mi)]
    return np.column_stack(cols)


# --------------------------------------------------------------------------
# population moments (oracle for equivalence checks)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentTable:
    """First and second moments of the observables, with MC standard errors.

    ``analytic`` moments have zero standard errors.
    """

    names: list[str]
    mean: np.ndarray
    cov: np.ndarray
    se_mean: np.ndarray
    se_cov: np.ndarray
    analytic: bool

    def max_standardized_diff(self, other: "MomentTable") -> float:
        """Largest |moment difference| in units of its combined MC SE."""
        se_m = np.sqrt(self.se_mean**2 + other.se_mean**2)
        se_c = np.sqrt(self.se_cov**2 + other.se_cov**2)
        if self.analytic and other.analytic:
            # exact comparison: express differences relative to magnitudes
            dm = np.abs(self.mean - other.mean) / (1.0 + np.abs(self.mean))
            dc = np.abs(self.cov - other.cov) / (1.0 + np.abs(self.cov))
            return float(max(dm.max(), dc.max()))
        zm = np.abs(self.mean - other.mean) / np.maximum(se_m, 1e-300)
        zc = np.abs(self.cov - other.cov) / np.maximum(se_c, 1e-300)
        return float(max(zm.max(), zc.max()))


def _affine_observables(spec: ModelSpec):
    """Affine map from the independent shock basis to the observables.

    Valid only when the latent recursion is linear (trans-log, g3 = 0).
    Basis order: [ln th_0, ln Y, eta_I_0..T-1, resid_0..T-1, eps_Q, all
    measure errors]; the first two carry the mixture, the rest independent
    normals whose variances are returned in ``basis_var``.
    """
    T = spec.T
    tech = spec.tech
    inv = spec.invest
    n_meas = spec.meas.skill.mu.size + spec.meas.invest.mu.size
    dim = 2 + 2 * T + 1 + n_meas
    basis_var = np.zeros(dim)
    basis_var[2 : 2 + T] = inv.eta_sd**2
    basis_var[2 + T : 2 + 2 * T] = tech.shock_sd**2 - tech.kappa**2 * inv.eta_sd**2
    basis_var[2 + 2 * T] = spec.anchor.eta_q_sd**2

    def row():
        return np.zeros(dim)

    ln_th = [row() for _ in range(T + 1)]
    ln_i = [row() for _ in range(T)]
    cons_th = np.zeros(T + 1)
    cons_i = np.zeros(T)
    ln_th[0][0] = 1.0
    ln_y = row()
    ln_y[1] = 1.0
    for t in range(T):
        ln_i[t] = inv.b1[t] * ln_th[t] + inv.b2[t] * ln_y
        ln_i[t][2 + t] += 1.0
        cons_i[t] = inv.b0[t] + inv.b1[t] * cons_th[t]
        ln_th[t + 1] = tech.g1[t] * ln_th[t] + tech.g2[t] * ln_i[t]
        ln_th[t + 1][2 + t] += tech.kappa[t]
        ln_th[t + 1][2 + T + t] += 1.0
        cons_th[t + 1] = tech.a[t] + tech.g1[t] * cons_th[t] + tech.g2[t] * cons_i[t]

    rows, cons = [], []
    rows.append(ln_y)
    cons.append(0.0)
    qrow = spec.anchor.rho1 * ln_th[T]
    qrow[2 + 2 * T] += 1.0
    rows.append(qrow)
    cons.append(spec.anchor.rho0 + spec.anchor.rho1 * cons_th[T])
    eps_idx = 2 + 2 * T + 1
    for block, latents, latent_cons in (
        (spec.meas.skill, ln_th, cons_th),
        (spec.meas.invest, ln_i, cons_i),
    ):
        P, M = block.mu.shape
        for t in range(P):
            for m in range(M):
                r = block.lam[t, m] * latents[t]
                r[eps_idx] += 1.0
                basis_var[eps_idx] = block.error_sd[t, m] ** 2
                eps_idx += 1
                rows.append(r)
                cons.append(block.mu[t, m] + block.lam[t, m] * latent_cons[t])
    return np.array(rows), np.array(cons), basis_var


def _analytic_moments(spec: ModelSpec) -> MomentTable:
    W, c, basis_var = _affine_observables(spec)
    dim = basis_var.shape[0]
    mix = spec.init_dist
    means_k = []
    covs_k = []
    for k in range(mix.K):
        bmean = np.zeros(dim)
        bmean[:2] = mix.means[k]
        bcov = np.diag(basis_var)
        bcov[:2, :2] = mix.covs[k]
        means_k.append(W @ bmean + c)
        covs_k.append(W @ bcov @ W.T)
    w = mix.weights
    mean = sum(w[k] * means_k[k] for k in range(mix.K))
    cov = np.zeros_like(covs_k[0])
    for k in range(mix.K):
        d = means_k[k] - mean
        cov += w[k] * (covs_k[k] + np.outer(d, d))
    P = mean.shape[0]
    return MomentTable(
        names=observable_names(spec),
        mean=mean,
        cov=cov,
        se_mean=np.zeros(P),
        se_cov=np.zeros((P, P)),
        analytic=True,
    )


def _simulated_moments(spec: ModelSpec, n_draws: int, seed: int) -> MomentTable:
    chunk = 200_000
    # pass 1: means
    s1 = None
    total = 0
    offsets = list(range(0, n_draws, chunk))
    for i, start in enumerate(offsets):
        m = min(chunk, n_draws - start)
        X = observable_matrix(simulate_panel(spec, m, seed=mix_seed(seed, i)))
        s1 = X.sum(axis=0) if s1 is None else s1 + X.sum(axis=0)
        total += m
    mean = s1 / total
    # pass 2: centered second and fourth cross-moments (same substreams)
    P = mean.shape[0]
    s2 = np.zeros((P, P))
    s22 = np.zeros((P, P))
    for i, start in enumerate(offsets):
        m = min(chunk, n_draws - start)
        X = observable_matrix(simulate_panel(spec, m, seed=mix_seed(seed, i)))
        Xc = X - mean
        s2 += Xc.T @ Xc
        Xc2 = Xc**2
        s22 += Xc2.T @ Xc2
    cov = s2 / total
    m22 = s22 / total
    se_cov = np.sqrt(np.maximum(m22 - cov**2, 0.0) / total)
    se_mean = np.sqrt(np.diag(cov) / total)
    return MomentTable(
        names=observable_names(spec),
        mean=mean,
        cov=cov,
        se_mean=se_mean,
        se_cov=se_cov,
        analytic=False,
    )


def population_moments(
    spec: ModelSpec | TildeParams, n_draws: int = 1_000_000, seed: int = 20240901
) -> MomentTable:
    """Exact moments where the model is linear in logs, else a seeded
    simulation estimate with Monte Carlo standard errors."""
    if isinstance(spec, TildeParams):
        spec = spec.as_spec()
    if isinstance(spec.tech, TransLogTech) and np.all(spec.tech.g3 == 0.0):
        return _analytic_moments(spec)
    return _simulated_moments(spec, n_draws, seed)


# --------------------------------------------------------------------------
# panel I/O
# --------------------------------------------------------------------------


def panel_to_csv(panel: LatentPanel, path) -> None:
    """Observables only, one row per individual, documented column order."""
    X = observable_matrix(panel)
    names = observable_names(panel)
    header = (
        f"# tool_version={TOOL_VERSION}\n"
        f"# seed={panel.seed}\n"
        f"# spec_fingerprint={panel.spec_ref}\n"
        f"# s_theta={panel.s_theta!r} s_invest={panel.s_invest!r}\n"
        f"# z_skill_shape={panel.z_skill.shape[0]}x{panel.z_skill.shape[1]} "
        f"z_invest_shape={panel.z_invest.shape[0]}x{panel.z_invest.shape[1]}\n"
    )
    buf = io.StringIO()
    buf.write(header)
    buf.write(",".join(names) + "\n")
    np.savetxt(buf, X, delimiter=",", fmt="%.17g")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def panel_from_csv(path) -> LatentPanel:
    """Load an observables-only panel (latents unavailable)."""
    meta = {}
    with open(path) as fh:
        lines = fh.readlines()
    body_start = 0
    for i, line in enumerate(lines):
        if line.startswith("#"):
            for tok in line[1:].strip().split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        else:
            body_start = i
            break
    names = lines[body_start].strip().split(",")
    X = np.loadtxt(lines[body_start + 1 :], delimiter=",", ndmin=2)
    shape_s = tuple(int(v) for v in meta["z_skill_shape"].split("x"))
    shape_i = tuple(int(v) for v in meta["z_invest_shape"].split("x"))
    n = X.shape[0]
    idx = {name: j for j, name in enumerate(names)}
    z_skill = np.empty((*shape_s, n))
    for t in range(shape_s[0]):
        for m in range(shape_s[1]):
            z_skill[t, m] = X[:, idx[f"Z_skill_t{t}_m{m + 1}"]]
    z_invest = np.empty((*shape_i, n))
    for t in range(shape_i[0]):
        for m in range(shape_i[1]):
            z_invest[t, m] = X[:, idx[f"Z_invest_t{t}_m{m + 1}"]]
    return LatentPanel(
        ln_theta=None,
        ln_invest=None,
        ln_y=X[:, idx["lnY"]],
        q=X[:, idx["Q"]],
        z_skill=z_skill,
        z_invest=z_invest,
        seed=int(meta.get("seed", -1)),
        spec_ref=meta.get("spec_fingerprint", ""),
        s_theta=float(meta.get("s_theta", 1.0)),
        s_invest=float(meta.get("s_invest", 1.0)),
    )


def panel_to_cache(panel: LatentPanel, path) -> None:
    """Lossless binary cache with embedded seed and spec fingerprint."""
    np.savez_compressed(
        path,
        ln_theta=panel.ln_theta if panel.ln_theta is not None else np.array([]),
        ln_invest=panel.ln_invest if panel.ln_invest is not None else np.array([]),
        ln_y=panel.ln_y,
        q=panel.q,
        z_skill=panel.z_skill,
        z_invest=panel.z_invest,
        seed=np.int64(panel.seed),
        spec_ref=np.str_(panel.spec_ref),
        s_theta=np.float64(panel.s_theta),
        s_invest=np.float64(panel.s_invest),
    )


def panel_from_cache(path) -> LatentPanel:
    with np.load(path, allow_pickle=False) as z:
        ln_theta = z["ln_theta"]
        ln_invest = z["ln_invest"]
        return LatentPanel(
            ln_theta=ln_theta if ln_theta.size else None,
            ln_invest=ln_invest if ln_invest.size else None,
            ln_y=z["ln_y"],
            q=z["q"],
            z_skill=z["z_skill"],
            z_invest=z["z_invest"],
            seed=int(z["seed"]),
            spec_ref=str(z["spec_ref"]),
            s_theta=float(z["s_theta"]),
            s_invest=float(z["s_invest"]),
        )

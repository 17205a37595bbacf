"""Parameter containers for the skill-formation model.

The model: a latent skill ``theta_t`` evolves over ``t = 0..T`` through a
production technology (trans-log or CES) with endogenous investment
``I_t`` (t = 0..T-1), a factor measurement system for both latents, and a
linear anchor equation tying final-period log-skill to an adult outcome Q.

All containers are frozen dataclasses holding read-only numpy arrays, so
transforms return new objects and equality checks are structural.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .mixtures import MixtureModel

__all__ = [
    "Periods",
    "MeasurementBlock",
    "MeasurementParams",
    "TransLogTech",
    "CesTech",
    "CesTildeTech",
    "InvestmentParams",
    "AnchorParams",
    "ModelSpec",
    "TildeParams",
    "RestrictionSet",
    "SKILL_RESTRICTIONS",
    "INVEST_RESTRICTIONS",
    "CES_EXTRA_RESTRICTIONS",
    "observed_investment_block",
    "spec_to_dict",
    "spec_from_dict",
    "spec_to_json",
    "spec_from_json",
    "spec_fingerprint",
    "spec_allclose",
]


def _ro(x, shape=None):
    """Convert to a read-only float array, optionally checking shape."""
    arr = np.asarray(x, dtype=np.float64)
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"expected shape {tuple(shape)}, got {arr.shape}")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


class SpecError(ValueError):
    """Raised when a parameter container violates a model invariant."""


@dataclass(frozen=True)
class Periods:
    """Number of transitions T; skills exist for t = 0..T, investment for t = 0..T-1."""

    T: int

    def __post_init__(self):
        if int(self.T) < 1:
            raise SpecError("Periods.T must be >= 1")
        object.__setattr__(self, "T", int(self.T))


@dataclass(frozen=True, eq=False)
class MeasurementBlock:
    """Intercepts, loadings and error sds for one latent's measures.

    Arrays are (n_periods, M).  A degenerate "observed" block has mu = 0,
    lam = 1 and error_sd = 0, representing a directly observed latent.
    """

    mu: np.ndarray
    lam: np.ndarray
    error_sd: np.ndarray

    def __post_init__(self):
        mu = _ro(self.mu)
        lam = _ro(self.lam, mu.shape)
        sd = _ro(self.error_sd, mu.shape)
        if mu.ndim != 2 or mu.shape[1] < 1:
            raise SpecError("measurement arrays must be (n_periods, M) with M >= 1")
        if np.any(lam == 0.0):
            raise SpecError("measurement loadings must be nonzero")
        if np.any(sd < 0.0):
            raise SpecError("measurement error sds must be nonnegative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "error_sd", sd)

    @property
    def n_periods(self) -> int:
        return self.mu.shape[0]

    @property
    def M(self) -> int:
        return self.mu.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MeasurementBlock):
            return NotImplemented
        return (
            np.array_equal(self.mu, other.mu)
            and np.array_equal(self.lam, other.lam)
            and np.array_equal(self.error_sd, other.error_sd)
        )


def observed_investment_block(T: int) -> MeasurementBlock:
    """Measurement block for directly observed investment (mu=0, lam=1, sd=0)."""
    return MeasurementBlock(
        mu=np.zeros((T, 1)), lam=np.ones((T, 1)), error_sd=np.zeros((T, 1))
    )


@dataclass(frozen=True, eq=False)
class MeasurementParams:
    """Measurement system for skills (T+1 periods) and investment (T periods)."""

    skill: MeasurementBlock
    invest: MeasurementBlock

    def validate(self, periods: Periods):
        if self.skill.n_periods != periods.T + 1:
            raise SpecError("skill measurement block must cover T+1 periods")
        if self.invest.n_periods != periods.T:
            raise SpecError("investment measurement block must cover T periods")

    def __eq__(self, other):
        if not isinstance(other, MeasurementParams):
            return NotImplemented
        return self.skill == other.skill and self.invest == other.invest


@dataclass(frozen=True, eq=False)
class TransLogTech:
    """Trans-log technology: ln th' = a + g1 ln th + g2 ln I + g3 ln th ln I + shock.

    ``shock_sd`` is the sd of the full production shock; ``kappa`` is the
    slope of its conditional mean in the investment shock (control-function
    endogeneity).  g3 = 0 is Cobb-Douglas.
    """

    a: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    g3: np.ndarray
    shock_sd: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        a = _ro(self.a)
        T = a.shape[0]
        for name in ("g1", "g2", "g3", "shock_sd", "kappa"):
            object.__setattr__(self, name, _ro(getattr(self, name), (T,)))
        object.__setattr__(self, "a", a)
        if np.any(self.shock_sd <= 0.0):
            raise SpecError("shock_sd must be positive")

    @property
    def T(self) -> int:
        return self.a.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TransLogTech):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name))
            for f in dataclasses.fields(self)
        )


@dataclass(frozen=True, eq=False)
class CesTech:
    """CES technology: th' = (g1 th^sigma + g2 I^sigma)^(psi/sigma) exp(shock)."""

    g1: np.ndarray
    g2: np.ndarray
    sigma: np.ndarray
    psi: np.ndarray
    shock_sd: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        g1 = _ro(self.g1)
        T = g1.shape[0]
        for name in ("g2", "sigma", "psi", "shock_sd", "kappa"):
            object.__setattr__(self, name, _ro(getattr(self, name), (T,)))
        object.__setattr__(self, "g1", g1)
        if np.any(self.g1 <= 0.0) or np.any(self.g2 <= 0.0):
            raise SpecError("CES share coefficients must be positive")
        if np.any(self.sigma == 0.0):
            raise SpecError("CES sigma must be nonzero")
        if np.any(self.psi <= 0.0):
            raise SpecError("CES psi must be positive")
        if np.any(self.shock_sd <= 0.0):
            raise SpecError("shock_sd must be positive")

    @property
    def T(self) -> int:
        return self.g1.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CesTech):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name))
            for f in dataclasses.fields(self)
        )


@dataclass(frozen=True, eq=False)
class CesTildeTech:
    """CES law of motion in the first-measure parameterization.

    th~' = (g1 th~^exp_ratio_skill + g2 I~^exp_ratio_invest)^outer_exp * exp(shock)

    The three exponent fields are the identified combinations
    sigma/lam_skill, sigma/lam_invest and lam_skill(t+1)*psi/sigma; a plain
    CesTech is the special case exp_ratio_skill == exp_ratio_invest.
    """

    g1: np.ndarray
    g2: np.ndarray
    exp_ratio_skill: np.ndarray
    exp_ratio_invest: np.ndarray
    outer_exp: np.ndarray
    shock_sd: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        g1 = _ro(self.g1)
        T = g1.shape[0]
        for name in (
            "g2",
            "exp_ratio_skill",
            "exp_ratio_invest",
            "outer_exp",
            "shock_sd",
            "kappa",
        ):
            object.__setattr__(self, name, _ro(getattr(self, name), (T,)))
        object.__setattr__(self, "g1", g1)
        if np.any(self.g1 <= 0.0) or np.any(self.g2 <= 0.0):
            raise SpecError("CES share coefficients must be positive")
        if np.any(self.exp_ratio_skill == 0.0) or np.any(self.exp_ratio_invest == 0.0):
            raise SpecError("CES exponent ratios must be nonzero")
        if np.any(self.shock_sd <= 0.0):
            raise SpecError("shock_sd must be positive")

    @property
    def T(self) -> int:
        return self.g1.shape[0]

    def __eq__(self, other):
        if not isinstance(other, CesTildeTech):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name))
            for f in dataclasses.fields(self)
        )


Technology = Union[TransLogTech, CesTech, CesTildeTech]


@dataclass(frozen=True, eq=False)
class InvestmentParams:
    """Investment rule: ln I = b0 + b1 ln theta + b2 ln Y + eta_I."""

    b0: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    eta_sd: np.ndarray

    def __post_init__(self):
        b0 = _ro(self.b0)
        T = b0.shape[0]
        for name in ("b1", "b2", "eta_sd"):
            object.__setattr__(self, name, _ro(getattr(self, name), (T,)))
        object.__setattr__(self, "b0", b0)
        if np.any(self.eta_sd <= 0.0):
            raise SpecError("investment shock sd must be positive")

    @property
    def T(self) -> int:
        return self.b0.shape[0]

    def __eq__(self, other):
        if not isinstance(other, InvestmentParams):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name))
            for f in dataclasses.fields(self)
        )


@dataclass(frozen=True)
class AnchorParams:
    """Adult-outcome anchor: Q = rho0 + rho1 ln theta_T + eta_Q."""

    rho0: float
    rho1: float
    eta_q_sd: float

    def __post_init__(self):
        object.__setattr__(self, "rho0", float(self.rho0))
        object.__setattr__(self, "rho1", float(self.rho1))
        object.__setattr__(self, "eta_q_sd", float(self.eta_q_sd))
        if self.rho1 == 0.0:
            raise SpecError("anchor slope rho1 must be nonzero")
        if self.eta_q_sd <= 0.0:
            raise SpecError("anchor noise sd must be positive")


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Full structural parameterization plus the initial (ln theta_0, ln Y) law.

    Income is constant across periods within an individual.
    """

    periods: Periods
    tech: Technology
    meas: MeasurementParams
    invest: InvestmentParams
    anchor: AnchorParams
    init_dist: MixtureModel

    def __post_init__(self):
        T = self.periods.T
        if self.tech.T != T:
            raise SpecError("technology array length must equal T")
        self.meas.validate(self.periods)
        if self.invest.T != T:
            raise SpecError("investment array length must equal T")
        if self.init_dist.dim != 2:
            raise SpecError("init_dist must be bivariate over (ln theta_0, ln Y)")
        # The production shock decomposes as kappa*eta_I + independent noise,
        # so its total variance must dominate the kappa component.
        resid = self.tech.shock_sd**2 - self.tech.kappa**2 * self.invest.eta_sd**2
        if np.any(resid <= 0.0):
            raise SpecError(
                "shock_sd too small for kappa: var(shock) must exceed kappa^2 var(eta_I)"
            )

    @property
    def T(self) -> int:
        return self.periods.T

    @property
    def is_translog(self) -> bool:
        return isinstance(self.tech, TransLogTech)

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (
            self.periods == other.periods
            and type(self.tech) is type(other.tech)
            and self.tech == other.tech
            and self.meas == other.meas
            and self.invest == other.invest
            and self.anchor == other.anchor
            and self.init_dist == other.init_dist
        )


@dataclass(frozen=True, eq=False)
class TildeParams:
    """The identified parameterization: first measure has intercept 0, loading 1.

    Same shape as a ModelSpec; for CES the technology is a CesTildeTech
    carrying the identified exponent combinations.
    """

    periods: Periods
    tech: Technology
    meas: MeasurementParams
    invest: InvestmentParams
    anchor: AnchorParams
    init_dist: MixtureModel

    def __post_init__(self):
        T = self.periods.T
        self.meas.validate(self.periods)
        if self.tech.T != T or self.invest.T != T:
            raise SpecError("array lengths must equal T")
        for block in (self.meas.skill, self.meas.invest):
            if not np.all(block.mu[:, 0] == 0.0) or not np.all(block.lam[:, 0] == 1.0):
                raise SpecError("first-measure normalization violated in TildeParams")

    @property
    def T(self) -> int:
        return self.periods.T

    @property
    def is_translog(self) -> bool:
        return isinstance(self.tech, TransLogTech)

    def as_spec(self) -> ModelSpec:
        """View the normalized parameters as a simulable ModelSpec."""
        tech = self.tech
        if isinstance(tech, CesTildeTech):
            # A tilde CES law is a plain CES exactly when the two inner
            # exponents agree; otherwise keep the generalized form.
            if np.allclose(tech.exp_ratio_skill, tech.exp_ratio_invest, rtol=0, atol=1e-14):
                sigma = tech.exp_ratio_skill
                tech = CesTech(
                    g1=tech.g1,
                    g2=tech.g2,
                    sigma=sigma,
                    psi=tech.outer_exp * sigma,
                    shock_sd=tech.shock_sd,
                    kappa=tech.kappa,
                )
        return ModelSpec(
            periods=self.periods,
            tech=tech,
            meas=self.meas,
            invest=self.invest,
            anchor=self.anchor,
            init_dist=self.init_dist,
        )

    def __eq__(self, other):
        if not isinstance(other, TildeParams):
            return NotImplemented
        return (
            self.periods == other.periods
            and type(self.tech) is type(other.tech)
            and self.tech == other.tech
            and self.meas == other.meas
            and self.invest == other.invest
            and self.anchor == other.anchor
            and self.init_dist == other.init_dist
        )


SKILL_RESTRICTIONS = ("ageInvariantSkill", "knownScaleTech")
INVEST_RESTRICTIONS = ("ageInvariantInvest", "crsOrZeroIntercept")
CES_EXTRA_RESTRICTIONS = ("ageInvariantLoading", "psiOne")


@dataclass(frozen=True)
class RestrictionSet:
    """One point-identifying restriction per group.

    The initial-scale restriction (first skill measure has loading 1 and
    intercept 0 at t = 0) is always imposed.  ``ces_extra`` is required for
    CES technologies and ignored for trans-log.
    """

    skill: str
    invest: str
    ces_extra: str | None = None

    def __post_init__(self):
        if self.skill not in SKILL_RESTRICTIONS:
            raise SpecError(
                f"skill restriction must be one of {SKILL_RESTRICTIONS}, got {self.skill!r}"
            )
        if self.invest not in INVEST_RESTRICTIONS:
            raise SpecError(
                f"invest restriction must be one of {INVEST_RESTRICTIONS}, got {self.invest!r}"
            )
        if self.ces_extra is not None and self.ces_extra not in CES_EXTRA_RESTRICTIONS:
            raise SpecError(
                f"ces_extra must be one of {CES_EXTRA_RESTRICTIONS}, got {self.ces_extra!r}"
            )

    def require_ces_extra(self) -> str:
        if self.ces_extra is None:
            raise SpecError(
                "a CES restriction set needs ces_extra "
                f"(one of {CES_EXTRA_RESTRICTIONS})"
            )
        return self.ces_extra


# --------------------------------------------------------------------------
# Serialization: a documented JSON config whose key paths mirror field names
# and whose arrays are indexed by period.  Floats survive round-trips exactly
# (shortest-repr decimal encoding).
# --------------------------------------------------------------------------


def _block_to_dict(b: MeasurementBlock) -> dict:
    return {
        "mu": b.mu.tolist(),
        "lam": b.lam.tolist(),
        "error_sd": b.error_sd.tolist(),
    }


def _tech_to_dict(tech: Technology) -> dict:
    if isinstance(tech, TransLogTech):
        kind = "translog"
    elif isinstance(tech, CesTech):
        kind = "ces"
    else:
        kind = "ces_tilde"
    d = {"kind": kind}
    for f in dataclasses.fields(tech):
        d[f.name] = getattr(tech, f.name).tolist()
    return d


def _tech_from_dict(d: dict) -> Technology:
    kind = d["kind"]
    args = {k: v for k, v in d.items() if k != "kind"}
    if kind == "translog":
        return TransLogTech(**args)
    if kind == "ces":
        return CesTech(**args)
    if kind == "ces_tilde":
        return CesTildeTech(**args)
    raise SpecError(f"unknown technology kind {kind!r}")


def _mixture_to_dict(m: MixtureModel) -> dict:
    return {
        "weights": m.weights.tolist(),
        "means": m.means.tolist(),
        "covs": m.covs.tolist(),
    }


def _mixture_from_dict(d: dict) -> MixtureModel:
    return MixtureModel(
        weights=np.asarray(d["weights"]),
        means=np.asarray(d["means"]),
        covs=np.asarray(d["covs"]),
    )


def spec_to_dict(spec: ModelSpec | TildeParams) -> dict:
    return {
        "class": "TildeParams" if isinstance(spec, TildeParams) else "ModelSpec",
        "periods": {"T": spec.periods.T},
        "tech": _tech_to_dict(spec.tech),
        "meas": {
            "skill": _block_to_dict(spec.meas.skill),
            "invest": _block_to_dict(spec.meas.invest),
        },
        "invest": {
            "b0": spec.invest.b0.tolist(),
            "b1": spec.invest.b1.tolist(),
            "b2": spec.invest.b2.tolist(),
            "eta_sd": spec.invest.eta_sd.tolist(),
        },
        "anchor": {
            "rho0": spec.anchor.rho0,
            "rho1": spec.anchor.rho1,
            "eta_q_sd": spec.anchor.eta_q_sd,
        },
        "init_dist": _mixture_to_dict(spec.init_dist),
    }


def spec_from_dict(d: dict) -> ModelSpec | TildeParams:
    cls = TildeParams if d.get("class") == "TildeParams" else ModelSpec
    return cls(
        periods=Periods(T=d["periods"]["T"]),
        tech=_tech_from_dict(d["tech"]),
        meas=MeasurementParams(
            skill=MeasurementBlock(**d["meas"]["skill"]),
            invest=MeasurementBlock(**d["meas"]["invest"]),
        ),
        invest=InvestmentParams(**d["invest"]),
        anchor=AnchorParams(**d["anchor"]),
        init_dist=_mixture_from_dict(d["init_dist"]),
    )


def spec_to_json(spec: ModelSpec | TildeParams, indent: int | None = 2) -> str:
    return json.dumps(spec_to_dict(spec), indent=indent)


def spec_from_json(text: str) -> ModelSpec | TildeParams:
    return spec_from_dict(json.loads(text))


def spec_fingerprint(spec: ModelSpec | TildeParams) -> str:
    """Stable 16-hex-char digest of the full parameterization."""
    canon = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def spec_allclose(a, b, rtol=1e-9, atol=1e-12) -> bool:
    """Componentwise closeness of two parameter bundles of the same shape."""
    if type(a.tech) is not type(b.tech) or a.periods.T != b.periods.T:
        return False

    def close(x, y):
        return np.allclose(x, y, rtol=rtol, atol=atol)

    for f in dataclasses.fields(a.tech):
        if not close(getattr(a.tech, f.name), getattr(b.tech, f.name)):
            return False
    for side in ("skill", "invest"):
        ba, bb = getattr(a.meas, side), getattr(b.meas, side)
        if not (close(ba.mu, bb.mu) and close(ba.lam, bb.lam) and close(ba.error_sd, bb.error_sd)):
            return False
    for name in ("b0", "b1", "b2", "eta_sd"):
        if not close(getattr(a.invest, name), getattr(b.invest, name)):
            return False
    if not close(
        [a.anchor.rho0, a.anchor.rho1, a.anchor.eta_q_sd],
        [b.anchor.rho0, b.anchor.rho1, b.anchor.eta_q_sd],
    ):
        return False
    return (
        close(a.init_dist.weights, b.init_dist.weights)
        and close(a.init_dist.means, b.init_dist.means)
        and close(a.init_dist.covs, b.init_dist.covs)
    )

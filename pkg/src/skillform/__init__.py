"""skillform: simulation, invariant estimation, and counterfactuals for
dynamic latent skill-formation models with factor measurement systems."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .mixtures import MixtureModel
from .params import (
    AnchorParams,
    CesTech,
    CesTildeTech,
    InvestmentParams,
    MeasurementBlock,
    MeasurementParams,
    ModelSpec,
    Periods,
    RestrictionSet,
    SpecError,
    TildeParams,
    TransLogTech,
    spec_allclose,
    spec_fingerprint,
    spec_from_dict,
    spec_from_json,
    spec_to_dict,
    spec_to_json,
)
from .reparam import (
    anchor_transform,
    ces_normalized_form,
    from_tilde,
    from_tilde_ces,
    from_tilde_translog,
    obs_equivalent,
    obs_equivalent_ces,
    obs_equivalent_translog,
    retarget_ces,
    retarget_translog,
    satisfies_restrictions,
    to_tilde,
    to_tilde_ces,
    to_tilde_translog,
)
from .simulate import (
    LatentPanel,
    ScaleChange,
    population_moments,
    scale_measures,
    scale_spec_measures,
    simulate_panel,
)

__version__ = "0.1.0"

import logging

from .log import config_pfadvantage_logging  # noqa: F401

logger = logging.getLogger(__name__)

from .complexity import (  # noqa: F401, E402
    ComplexityModel,
    ComplexityParams,
    CurvePoint,
    PQAVariant,
    crossover,
    curve_point,
    eval_model,
    fit_exponent,
    kappa_upper_bound,
    pqa_condition,
)
from .hhl_sim import HHLConfig, HHLResult, hhl_run  # noqa: F401, E402
from .netmodel import (  # noqa: F401, E402
    Branch,
    Bus,
    BusKind,
    NetworkCase,
    ReducedSystem,
    build_reduced_system,
    load_case,
    parse_case,
)
from .sparsela import CGResult, SparseMatrix, cg_iteration_bound, cg_solve  # noqa: F401, E402
from .spectra import (  # noqa: F401, E402
    SpectralReport,
    Tolerances,
    condition_number,
    extreme_eigs,
    spectral_report,
)
from .utils.errors import PFAException  # noqa: F401, E402

try:
    # Use live version from git
    from setuptools_scm import get_version

    # Warning: If the install is nested to the same depth, this will always succeed
    __version__ = get_version(root="..", relative_to=__file__)
    del get_version
except (ImportError, LookupError):
    # Use installed version
    from ._version import __version__  # noqa: F401

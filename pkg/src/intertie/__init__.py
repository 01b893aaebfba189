"""Market coupling for independently cleared electricity areas.

The package couples per-area DC-OPF clearings through an iterative
tieline capacity allocation and pricing mechanism, settles incentive
transfers and participation fees, and validates the decentralized
outcome against a centralized clearing oracle.
"""

from .network import (
    Bus,
    Generator,
    InternalLine,
    Network,
    QuadraticCost,
    Tieline,
    scale_costs,
    validate,
)
from .opf import (
    AreaInput,
    solve_area,
    solve_centralized,
    solve_centralized_excluding,
    stand_alone_clearing,
)
from .coupling import MechanismConfig, run, run_excluded
from .incentives import participation_fee, run_pipeline, settle

__version__ = "0.1.0"

__all__ = [
    "Bus",
    "Generator",
    "InternalLine",
    "Network",
    "QuadraticCost",
    "Tieline",
    "scale_costs",
    "validate",
    "AreaInput",
    "solve_area",
    "solve_centralized",
    "solve_centralized_excluding",
    "stand_alone_clearing",
    "MechanismConfig",
    "run",
    "run_excluded",
    "participation_fee",
    "run_pipeline",
    "settle",
    "__version__",
]

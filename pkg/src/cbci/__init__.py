"""Continuous-state branching processes with continuous immigration and their stationary laws.

The stationary laws are generalized gamma convolutions; the package maps Thorin pairs to
branching data and back, bounds the sector constant of the Dirichlet form, simulates paths and
implements the Boolean convolution structure on Thorin measures.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AlgorithmError,
    CbciError,
    ConsistencyError,
    DomainError,
    InconclusiveError,
    NotErgodicError,
    SolverError,
)
from .measures import (  # noqa: E402
    ZERO,
    Atomic,
    FreePoissonScaled,
    Grid,
    PositiveMeasure,
    PowerTail,
    StableTail,
    StableTailDual,
    Sum,
    ThorinPair,
    Window,
)
from .mechanisms import Quadruplet  # noqa: E402
from .correspondence import backward, forward  # noqa: E402

__all__ = [
    "AlgorithmError", "CbciError", "ConsistencyError", "DomainError", "InconclusiveError", "NotErgodicError",
    "SolverError", "ZERO", "Atomic", "FreePoissonScaled", "Grid", "PositiveMeasure", "PowerTail", "StableTail",
    "StableTailDual", "Sum", "ThorinPair", "Window", "Quadruplet", "backward", "forward",
]

"""subscan: sensing-pose sequence planning over a Bayesian Hilbert occupancy map.

Plans where to aim a cone-volume sensor next so that subsurface targets
(tumors embedded under an uneven surface) are localized in as few
sensing actions as possible. The occupancy belief is a sequential
Bayesian Hilbert map; the next pose maximizes closed-form Expected
Improvement over it.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    DataFormatError,
    GeometryError,
    NumericalError,
    SubscanError,
)

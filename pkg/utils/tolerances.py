"""
Numerical tolerances and their configuration.

Profiles are selected with the DQDS_TOLERANCE_PROFILE environment variable
(a .env file in the working directory is honoured), and single fields can be
overridden from the command line.
"""

import os
from dataclasses import dataclass, fields, replace
from typing import Dict, Optional

from dotenv import load_dotenv

from utils.errors import ConfigError

PROFILE_ENV_VAR = "DQDS_TOLERANCE_PROFILE"
DEFAULT_PROFILE = "default"


@dataclass(frozen=True)
class Tolerances:
    """Thresholds used for every numerical decision in the library.

    Attributes:
        eps_rank: relative singular value / residual below which a direction
            counts as linearly dependent (scaled by the Frobenius norm)
        eps_zero: absolute Frobenius norm below which a block counts as zero
        eps_eq: absolute Frobenius distance below which matrices are equal
        eps_spectral: margin below 1 that a spectral radius must clear
    """

    eps_rank: float = 1e-10
    eps_zero: float = 1e-9
    eps_eq: float = 1e-8
    eps_spectral: float = 1e-9

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (0.0 < value < 1e-2):
                raise ConfigError(f"{f.name} must lie in (0, 1e-2), got {value!r}")

    def override(self, **changes: Optional[float]) -> "Tolerances":
        """Return a copy with the non-None fields replaced."""
        updates = {k: float(v) for k, v in changes.items() if v is not None}
        unknown = set(updates) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"Unknown tolerance field(s): {', '.join(sorted(unknown))}")
        return replace(self, **updates)

    def as_dict(self) -> Dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PROFILES: Dict[str, Tolerances] = {
    "default": Tolerances(),
    "strict": Tolerances(eps_rank=1e-12, eps_zero=1e-11, eps_eq=1e-10, eps_spectral=1e-11),
    "loose": Tolerances(eps_rank=1e-8, eps_zero=1e-6, eps_eq=1e-6, eps_spectral=1e-7),
}


def get_profile(name: str) -> Tolerances:
    """Look up a named preset."""
    try:
        return PROFILES[name.strip().lower()]
    except KeyError:
        raise ConfigError(
            f"Unknown tolerance profile {name!r}; choose one of {', '.join(PROFILES)}"
        ) from None


def load_tolerances(profile: Optional[str] = None) -> Tolerances:
    """Resolve the active Tolerances.

    Args:
        profile: explicit preset name; when omitted the environment decides

    Returns:
        The selected preset (the "default" one if nothing is configured)
    """
    load_dotenv()
    name = profile or os.getenv(PROFILE_ENV_VAR) or DEFAULT_PROFILE
    return get_profile(name)

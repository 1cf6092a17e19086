"""Harmonic-extension multipliers, Gundy-Varopoulos Monte Carlo and L^p probes on tori."""

from .errors import (DomainError, GvlabError, NumericError, PreconditionError, ResourceError,
                     ValidationError)
from .montecarlo import (EnsembleResult, MCConfig, fk_estimate, gv_estimate_all, gv_estimate_Sij,
                         gv_estimate_Ti, gv_estimate_W, gv_oracle, occupation_mc, simulate_eta,
                         simulate_X)
from .multiplier import (AT_INFINITY, MeasureAlpha, MultiplierSymbol, constants, phi_alt,
                         phi_extension, s_symbol, t_symbol)
from .norm_probe import ProbeReport, probe, verify_bound_suite
from .special_fn import bessel_k, gamma, mcd2_pair
from .torus_spectral import (TorusField, TorusGrid, apply_symbol, heat_semigroup, lp_norm,
                             schrodinger_build)
from .vertical_diffusion import BMDrift, Bessel, DiffusionSpec, Tabulated, kernel_K

__version__ = "0.1.0"

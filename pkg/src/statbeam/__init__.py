"""Statistical linear beamforming for the multi-antenna broadcast channel.

Closed-form ergodic rates, SNR-extreme and large-M asymptotes, beamformer
designs and the Monte Carlo and grid-search oracles that certify them.
"""

from .channel import (
    BeamformerSet,
    CovarianceMatrix,
    EffectiveSpectrum,
    LinkStatistics,
    effective_spectrum_general,
    effective_spectrum_m2,
    exponential_correlation,
    link_statistics,
)
from .design import (
    DesignResult,
    design_common_basis,
    design_high_snr_m2,
    design_low_snr,
    fixed_point_design,
    grid_search_oracle_m2,
    low_snr_sum_rate_bound,
    per_user_upper_bound,
    projected_gradient_norm,
)
from .montecarlo import McEstimate, mc_ergodic_rate, mc_quadratic_form_density
from .numerics import (
    EigenDecomposition,
    exp_e1,
    generalized_dominant_eigvec,
    hermitian_eig,
    matrix_sqrt_psd,
)
from .rates import (
    RateReport,
    SinrBreakdown,
    asymptotic_sinr,
    ergodic_rate_general,
    ergodic_rate_m2,
    f_func,
    g_func,
    high_snr_rate_m2,
    high_snr_sum_rate_common_basis,
    low_snr_rate,
    semi_metric_d,
)

__version__ = "0.1.0"

__all__ = [
    "BeamformerSet",
    "CovarianceMatrix",
    "DesignResult",
    "EffectiveSpectrum",
    "EigenDecomposition",
    "LinkStatistics",
    "McEstimate",
    "RateReport",
    "SinrBreakdown",
    "asymptotic_sinr",
    "design_common_basis",
    "design_high_snr_m2",
    "design_low_snr",
    "effective_spectrum_general",
    "effective_spectrum_m2",
    "ergodic_rate_general",
    "ergodic_rate_m2",
    "exp_e1",
    "exponential_correlation",
    "f_func",
    "fixed_point_design",
    "g_func",
    "generalized_dominant_eigvec",
    "grid_search_oracle_m2",
    "hermitian_eig",
    "high_snr_rate_m2",
    "high_snr_sum_rate_common_basis",
    "link_statistics",
    "low_snr_rate",
    "low_snr_sum_rate_bound",
    "matrix_sqrt_psd",
    "mc_ergodic_rate",
    "mc_quadratic_form_density",
    "per_user_upper_bound",
    "projected_gradient_norm",
    "semi_metric_d",
]

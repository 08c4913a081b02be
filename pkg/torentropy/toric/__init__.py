"""Toric Kähler geometry: polytopes, potentials, Bergman measures and entropy asymptotics"""

from .asymptotics import (
    asymptotic_entropy,
    balanced_criticality,
    entropy_error_curve,
    gaussian_entropy,
    ke_center_check,
    mabuchi_functional,
    max_entropy_point,
    multinomial_refinement,
)
from .bergman import (
    DensityOfStates,
    NormingTable,
    balanced_check,
    build_table,
    density_of_states,
    norming_constant,
    partition_function,
    weight,
)
from .measures import (
    LatticeMeasure,
    bergman_measure,
    bernstein,
    convolution_power_check,
    convolve,
    entropy,
    ldp_residual,
    moments,
    rate_function,
    wright_fisher_matrix,
)
from .polytope import DelzantPolytope, simplex
from .potentials import (
    PotentialPair,
    apply_gauge,
    builtin_pair,
    curvature_scalar_L,
    inverse_moment_map,
    legendre_transform,
    moment_map,
)

__all__ = [
    'DelzantPolytope',
    'DensityOfStates',
    'LatticeMeasure',
    'NormingTable',
    'PotentialPair',
    'apply_gauge',
    'asymptotic_entropy',
    'balanced_check',
    'balanced_criticality',
    'bergman_measure',
    'bernstein',
    'build_table',
    'builtin_pair',
    'convolution_power_check',
    'convolve',
    'curvature_scalar_L',
    'density_of_states',
    'entropy',
    'entropy_error_curve',
    'gaussian_entropy',
    'inverse_moment_map',
    'ke_center_check',
    'ldp_residual',
    'legendre_transform',
    'mabuchi_functional',
    'max_entropy_point',
    'moment_map',
    'moments',
    'multinomial_refinement',
    'norming_constant',
    'partition_function',
    'rate_function',
    'simplex',
    'weight',
    'wright_fisher_matrix',
]

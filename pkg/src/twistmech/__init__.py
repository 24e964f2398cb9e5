"""Classical mechanics of N-particle systems on twist-deformed space-time."""

from .algebra import (
    AffineObservable,
    InverseMass,
    ParticleSystem,
    PerParticle,
    PhaseState,
    ThetaMatrix,
    TwistFunction,
    affine_bracket,
    bopp_shift,
    bracket_matrix,
    deformed_coordinate_observable,
    theta_of,
    twist_eval,
)
from .composite import (
    check_inverse_mass_condition,
    com_bracket,
    com_representation,
    com_split,
    cross_bracket,
    effective_theta,
)
from .dynamics import (
    Hamiltonian,
    PairwisePotential,
    UniformField,
    build_hamiltonian,
    com_equations_of_motion,
    equations_of_motion,
    integrate,
    momentum_conservation_residual,
    wep_compare,
    wep_deviation,
)

__version__ = "0.1.0"

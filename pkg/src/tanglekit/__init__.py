"""Flux, rotation vectors, periodic orbits, invariant manifolds and homoclinic
tangles for area-preserving torus maps homotopic to the identity."""

__version__ = "0.1.0"

from .flux import FluxVector, RotationVector, flux_across_curve, flux_vector, mean_rotation_vector
from .hamiltonian import BUILTIN_HAMILTONIANS, HamiltonianSpec, HamiltonianTerm, integrate_flow, stroboscopic_map
from .manifolds import GrowthSettings, ManifoldBranch, branch_invariance_residual, grow_branch
from .maps import (
    DoubleTwist,
    Identity,
    LiftedMap,
    ShearX,
    ShearY,
    Translation,
    TwistProfile,
    compose,
    evaluate_lift,
    inverse,
    inverse_point,
    iterate,
    jacobian,
    map_from_dict,
)
from .orbits import PeriodicOrbit, classify, find_periodic_orbits
from .perturbations import BumpProfile, NudgeSpec, TunerSpec, flux_tuner, local_nudge, rationalize_flux
from .tangle import (
    Crossing,
    EntrySequence,
    WedgeRegion,
    accumulation_report,
    find_crossings,
    first_return,
    wedge_entries,
)
from .torus import ClosedCurve, LatticeVector, LiftPoint, TorusPoint, intersection_number

__all__ = [name for name in dir() if not name.startswith("_")]

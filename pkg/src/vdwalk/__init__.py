"""Random walks on a lattice with varying dimension.

Builds the darned lattice (plane with a disc collapsed to a point, plus
an attached half-line), runs its continuous-time random walk exactly
and by Monte Carlo, and numerically certifies the isoperimetric, Nash,
exponential-weight and heat-kernel inequalities together with generator
convergence diagnostics.
"""

__version__ = "0.1.0"

from .lattice import (LatticeParams, SpacePoint, VdLattice, Vertex,
                      build_lattice, geodesic_distance, graph_distance,
                      segment_clears_disc)
from .kernel import (JumpKernel, KernelDistribution, build_kernel,
                     dirichlet_form, dirichlet_form_jump,
                     heat_kernel_density, jump_distribution,
                     transition_distribution)
from .montecarlo import (EmpiricalLaw, EstimateWithCI, PathSample,
                         empirical_law, estimate_modulus,
                         estimate_sup_exceedance, holding_time_report,
                         ks_distance, sample_path)
from .inequalities import (davies_weight_check, hk_bound_constant, iso_ratio,
                           iso_scan, nash_check, weighted_part)
from .generator import (TestFunction, apply_discrete_generator,
                        apply_limit_generator, convergence_report,
                        darning_occupation, make_test_function, s_k_mask)

__all__ = [name for name in dir() if not name.startswith("_")]

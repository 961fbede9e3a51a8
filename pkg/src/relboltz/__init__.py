"""Monte Carlo simulation and verification of the relativistic Boltzmann equation as a Markov process.

Modules:
    geometry      charts, metrics, Christoffel symbols, orthonormal frames
    phase_space   unit mass shell, Juttner and tabulated distribution fields
    geodesic      RK4 geodesic flow with shell renormalization
    collision     elastic binary collisions and kernels
    process       forward and past-directed jump processes, causal estimator
    causal        hypersurfaces, hitting times, normal variations
    harness       scenario files, checks, CLI
"""
from .errors import *  # noqa: F401,F403
from .rng import CounterRNG
from .geometry import (Chart, Tetrad, build_tetrad, christoffel, christoffel_fd, flrw, flrw_power, inner,
                       make_chart, metric_eval, minkowski, schwarzschild)
from .phase_space import (DistributionField, JuttnerField, JuttnerParams, PhasePoint, SumField, TabulatedField,
                          ZeroField, juttner_eval, juttner_sample, lift_to_shell, shell_error)
from .geodesic import FUTURE, PAST, geodesic_flow, geodesic_step
from .collision import (CollisionKernel, ScatterAngle, collide, collision_integral, kernel_constant,
                        kernel_hard_sphere, make_kernel, total_rate)
from .causal import (Hypersurface, bump_surface, flat_surface, gamma_bar, hitting_time, lemma_check, normal,
                     normal_variation, hitting_time_bound, tilted_surface)
from .process import (Estimate, PathBatch, SimConfig, estimate_f, martingale_check, simulate_backward,
                      simulate_forward, weak_stationarity_check)
from .stats import chi2_statistic, ks_statistic

__version__ = "0.1.0"

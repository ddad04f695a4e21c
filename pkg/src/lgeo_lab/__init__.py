"""lgeo-lab: Perelman L-geometry numerics on model Ricci flows."""

from .errors import (ChartError, InvalidInputError, LgeoError, MinimizationError,
                     SolverError, TailBoundError, TimeOutOfDomainError)
from .flows import (ConnectionSample, CurvatureSample, EuclideanStatic, FlowBackend,
                    MetricSample, RotSymNumeric, ShrinkingCylinder, ShrinkingSphere,
                    SpaceTimePoint, TimeDomain, make_flow)
from .geodesics import (LGeodesic, MinGeodesicResult, MinimizeOptions, ShootVector,
                        lexp, lexp_jacobian, lexp_jacobian_fd, minimize, shoot)
from .reduced import (GridSpec, IdentityReport, RVResult, ReducedField,
                      identity_residuals, monotone_check, reduced_distance,
                      reduced_field, reduced_volume, reduced_volume_domain,
                      reduced_volume_pushforward, tau_field_bundle)
from .regularity import (CylinderProbe, ScanRecord, ball_ratio_scan,
                         curvature_radius, eps_regularity_scan, lipschitz_probe,
                         scan_summary)
from .rotsym import (InitialProfile, SolveOptions, SolveReport, dumbbell_profile,
                     round_profile, self_convergence, solve_rotsym)

__version__ = "0.1.0"

"""Numerical toolkit for distance, Busemann, and barrier fields on 2-D
Riemannian metric charts, with a property-based verification harness."""

from .barrier import (BarrierField, LineFields, barrier_field,
                      build_line_fields, classify_lines, coray_bound_check,
                      equivalent, glued_line_path, line_sum_test, precedes,
                      pseudo_distance, quad_bound_constant, zero_set)
from .busemann import (TruncationSchedule, busemann_field, dl_field,
                       horofunction_field, semiconcavity_constant,
                       singular_set, superdifferential)
from .eikonal import (ScalarField, SourceSet, eikonal_residual,
                      load_field_csv, save_field_csv, save_field_pgm,
                      solve_distance)
from .errors import (BusefieldError, ConfigError, ConvergenceError,
                     CorayValidationError, CoverageError, DataError,
                     DomainError, InconsistencyError, PreconditionError,
                     ValidationError)
from .geodesic import (GeodesicPath, integrate_geodesic, line_spec, ray_spec,
                       trace_coray)
from .metric import (KINDS, MetricChart, custom_chart, cylinder_chart,
                     euclidean_chart, half_plane_chart, paraboloid_chart)
from .report import VerdictReport
from .verify import (ALL_SUITES, SuiteConfig, default_config, run_all,
                     run_suite, write_report)

__version__ = "0.1.0"

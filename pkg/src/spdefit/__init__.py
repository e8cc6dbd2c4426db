"""Simulation and two-stage estimation for a parabolic linear SPDE.

The model is dX_t(y) = (theta2 d^2/dy^2 + theta1 d/dy + theta0) X_t dt
+ sigma dB_t(y) on [0, T] x [0, 1] with Dirichlet boundaries.  The package
simulates space-time sample fields by spectral decomposition, estimates
(sigma0^2, eta) from realized-volatility profiles and (sigma^2, theta2,
theta1, theta0) from the projected coordinate process, computes the limit
covariances of both stages, and runs Monte Carlo studies that compare
standardized estimation errors against their limit normals.
"""

from .asymptotics import (adaptive_cov, contrast_cov, contrast_cov_fixed_m,
                          gamma_constant, uv_matrices, uv_matrices_fixed_m)
from .config import FullConfig, default_document, load_config
from .errors import (BadMagicError, ConfigError, EstimationError,
                     FieldFormatError, HeaderMismatchError, SimulationError,
                     SinkWriteError, SpdefitError, StudyError,
                     TruncatedFieldError, ValidationError, VersionError)
from .estimate import (ContrastEstimate, CoordPath, EstimateRecord,
                       EstimationConfig, QmleFit, Regime, VolProfile, contrast,
                       estimate_parameters, fit_min_contrast, fit_ou_qmle,
                       ou_quasi_loglik, plug_in_theta, profiled_sigma0,
                       project_coordinate, qv_sigma2, realized_vol_profile,
                       simulate_and_estimate, theta0_hat)
from .fieldfile import (FieldHeader, FieldWriter, iter_field_slices,
                        read_field, read_header, simulate_to_file, write_field)
from .model import (DerivedParams, EigenPair, OuTransition, SpdeParams,
                    derived_params, eigenfunction_eval, eigenvalue,
                    ou_transition, ou_transition_arrays, ou_variance_scale)
from .reportio import write_gallery_entry, write_study_report
from .simulate import (PROVENANCE, CoordMatrix, FieldDataset, GridSpec,
                       simulate_coordinates, simulate_field, synthesize_slice,
                       synthesize_slices)
from .study import (StatSummary, StudyConfig, StudyReport, build_report,
                    ks_statistic, run_replication, run_study,
                    summarize_statistic)

__version__ = "0.1.0"

"""Spectral clustering of degree-corrected blockmodels on spherical coordinates."""

from .embed import Embedding, ElbowResult, ase, dase, row_normalise, scree_elbows
from .evaluate import (TestReport, adjusted_rand_index, ks_gaussian_score, mardia_tests,
                       one_way_anova, paired_sign_test)
from .exceptions import (ComponentCollapseError, DensityError, DimensionError,
                         EdgeListParseError, InvertibilityError, NumericalError,
                         SelectionError, SelfLoopError, SingularGradientError,
                         UndefinedAngleError, UndefinedStatisticError)
from .graph import DegreeProfile, SparseGraph, degree_profile, load_edge_list, write_edge_list
from .mixture import (UNASSIGNED, FitResult, MixtureParams, SelectionResult, assign_communities,
                      bic, fit_constrained_em, fit_reference_gmm, log_likelihood, select_model,
                      select_reference_model)
from .pipeline import (EXPERIMENTS, ExperimentReport, SideResult, UsageError, run_algorithm1,
                       run_experiment)
from .simulate import (BlockModelSpec, GroundTruth, RhoLaw, sample, sample_dcscbm, sample_dcsbm,
                       sample_table_protocol)
from .spherical import (AsymptoticCovariance, SphericalEmbedding, analytic_gradient_eq2,
                        asymptotic_covariance, gradient_discrepancy_report, theta_gradient_2d,
                        to_spherical, transform_embedding)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

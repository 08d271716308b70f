"""Differentially private linear algebra: spans, equations, LP and point-in-hull."""
from .errors import *  # noqa: F401,F403
from .exact import (QQ, AffineSolutionSpace, FarkasWitness, Feasible, Field, Infeasible, Inside, Outside,
                    Solution, SubspaceBasis, affine_membership, canonical_basis, convex_membership,
                    feasible_point, nonneg_solve, rank, solve_exact, span_basis)
from .noise import (NoiseMode, PrivacyLedger, PrivacyParams, RngStream, compose_advanced, derive_seed,
                    noisy_avg, sample_gaussian, sample_laplace)
from .partition import BasisCount, Partition, basis_count, stable_partition
from .spans import (Hypothesis, LinearSystem, SpanResult, learn_subspace, private_affine_span,
                    private_linear_span, sanitize_linear_system)
from .perceptron import HomogeneousLP, SolveOutcome, ThresholdPolicy, count_violations, private_lp_homogeneous
from .lp import DPLPResult, LPInstance, perturbation_eta, solve_dp_lp
from .pinhull import (AffineTransform, Ellipsoid, GridSpec, PinHullPolicy, PinHullResult, aff2lin,
                      half_ellipsoid_update, inflate_and_round, pinhull)
from .instances import InstanceFile, gen_instance
from .experiments import ExperimentReport, run_experiment

__version__ = "0.1.0"

"""Optimal and robust control synthesis for linear systems with
multiplicative noise: exact generalized Riccati/Lyapunov solvers, model-based
policy gradient methods with certified step sizes, and a model-free
zeroth-order gradient pipeline on a stochastic rollout simulator.
"""

from .problem import (Gain, LqrmProblem, NoiseSpec, load_gain, load_problem,
                      make_diffusion_network, make_gradient_estimation_example,
                      make_random, make_suspension, save_gain, save_problem,
                      validate)
from .ops import (MeanSquareUnstableError, NotStabilizableError,
                  PolicyEvaluation, RiccatiSolution,
                  certify_almost_smoothness, certify_cost_bounds,
                  certify_gradient_domination, certify_trace_bound,
                  closed_loop_operator, evaluate, is_ms_stabilizing,
                  ms_spectral_radius, riccati_value_iteration,
                  robust_margin_scalar, solve_covariance_lyapunov,
                  solve_value_lyapunov, spectral_radius)
from .descent import (BoundBundle, DescentTrace, StepPolicy, backtracking_eta,
                      compute_bounds, optimize, step_gauss_newton,
                      step_gradient, step_natural)
from .rollout import (BatchRejectedError, GradientEstimate, RolloutBatch,
                      active_backend, estimate_gradient, finite_horizon_cost,
                      optimize_model_free, reference_sample_sizes,
                      sample_sphere, simulate_rollout)

__version__ = "0.1.0"

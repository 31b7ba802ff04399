"""Budget allocation for exploring multi-layered networks with random walkers.

Offline: exact visiting probabilities and greedy / DP allocation solvers.
Online: combinatorial UCB learners and baselines with a regret harness.
"""
from .errors import (CapExceeded, ConfigError, EnumerationTooLarge, InfeasibleAllocation,
                     InvalidGamma, MulaneError, NodeNotInLayer, NonConvergenceError,
                     OverlapError, ParseError, SinkNodeError, ValidationError)
from .network import (Layer, LayeredNetwork, build_network, dump_network, expand_multi_walker,
                      load_network, make_layer, set_alpha, stationary_distribution,
                      transition_matrix)
from .offline import (ApproxConstants, SolverResult, baseline_prop, beg, bege, dp_nonoverlapping,
                      mg, mg_nonoverlapping, opt_enumerate)
from .online import (BanditState, Environment, MarginalArmState, RegretTrace, SimulationConfig,
                     baseline_round, cucb_max_r_round, cucb_max_round, cucb_mg_round,
                     run_experiment, sample_trajectories, shrink_radius)
from .reward import IncrementalEvaluator, reward_nonoverlapping, reward_overlapping
from .visitprob import (MarginalGainTable, VisitProbTable, build_table, marginal_gains,
                        monte_carlo_visit_prob, visit_probabilities)

__version__ = "0.1.0"

"""Symmetry-aware generative flow networks over labeled graphs.

Tabular GFlowNet training on exactly enumerated graph state spaces,
with automorphism-based corrections that make the sampling distribution
proportional to the reward over isomorphism classes.
"""

from .graph_core import (AutomorphismGroup, CanonicalForm, LabeledGraph,
                         Permutation, are_isomorphic, automorphism_group,
                         automorphism_order, canonical_form,
                         canonical_relabeling, canonicalize,
                         graph_from_json_dict, graph_to_json_dict,
                         stabilizer_order, subgraph_orbit_size)
from .env import (ActionClass, CliqueEnv, CycleEnv, Environment,
                  GraphAction, IllustrativeEnv, group_by_orbit,
                  group_by_transition, is_terminated, make_env)
from .state_space import (ExactDistribution, StateDag, edge_probabilities,
                          enumerate_states, exact_terminating_distribution,
                          l1_error, target_distribution)
from .policy import (PolicyTable, Trajectory, backward_probabilities,
                     forward_probabilities, load_checkpoint,
                     sample_trajectory, save_checkpoint)
from .training import (MODES, Trainer, UnsupportedModeError, db_loss,
                       edge_step_constants, estimate_likelihood, fm_loss,
                       pe_group, pe_vectors, tb_loss, terminal_log_target)
from .fragments import FragmentEnv, default_vocabulary

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

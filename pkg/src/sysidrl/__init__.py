"""System identification for model-based RL: learning loops that aggregate
data across iterations, exact optimal-control solvers, and exact audits of
the performance bounds relating control cost to model training loss."""

from .audit import (BoundReport, IterativeRounds, audit_batch_bound,
                    audit_dagger_bounds, audit_last_policy, audit_theorem1,
                    check_pinsker_chain, cls_prediction_error, exact_regret_split,
                    kl_prediction_error, l1_prediction_error,
                    mismatch_coefficient, scaling_factor)
from .dataset import EXPLORATION, ON_POLICY, SampleBlock, TransitionDataset
from .domains import (AliasedGridworld, DelayedPlantDomain, GridworldSpec,
                      PlantSpec, make_aliased_gridworld, make_delayed_plant,
                      trap_visitation_mass)
from .explore import (CapabilityError, ExplicitFiniteExploration,
                      ExpertPolicyExploration, TrajectoryNoiseExploration,
                      uniform_finite_exploration)
from .losses import CLASSIFICATION, KL, L1, RegretReport, empirical_loss, regret_audit
from .loops import (FiniteEnv, LoopResult, PlantEnv, run_batch, run_batch_curve,
                    run_dagger, run_expert_seeded, select_policy)
from .mdp import (ExplicitDist, FiniteMdp, SamplerDist, exact_visitation,
                  policy_cost, policy_value, sample_visitation,
                  sample_visitation_counts, stopping_cap)
from .models import (AliasedFtlLearner, AliasedTabularModel, LinearOffsetModel,
                     RidgeOffsetLearner, TabularFtlLearner, TabularModel,
                     TimeVaryingOffsetModel, TimeVaryingRidgeLearner,
                     fit_aliased_ftl, fit_linear_ridge, fit_tabular_ftl,
                     fit_time_varying)
from .ocsolve import (ConvergenceError, OcSolution, riccati_discounted,
                      tv_lqr_tracking, value_iteration)
from .plant import LinearPlant, RolloutStats, collect_trajectory_samples, rollout_cost
from .policies import (LinearFeedback, MixturePolicy, TabularPolicy,
                       TimeVaryingAffine)
from .rng import stream, substream

__version__ = "0.1.0"

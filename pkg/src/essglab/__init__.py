"""Embodied semantic scene-graph exploration lab.

A deterministic procedural indoor simulator plus the full learning stack
for budgeted exploration that builds a semantic scene graph: soft-visibility
graphs, shaped rewards, single-head and factorised multi-head discrete
action spaces with curriculum masking, PPO and REINFORCE trainers, expert
demonstration generation, and an evaluation harness.
"""

from .actions import (ActionChoice, ActionSpec, Idle, Motion, StageMask, Stop,
                      decode, full_mask, make_action_spec, stage_mask)
from .env import EnvConfig, ExploreEnv
from .features import ObsConfig, StagnationConfig, StagnationState, stagnation_step
from .harness import EvalReport, WindowStats, evaluate, objective_J
from .reward import RewardConfig, StepEvents, potential, step_reward
from .ssg import (GlobalGraph, LocalGraph, MetricsSnapshot, VisibilityParams,
                  extract_relations, graph_metrics, observe_local,
                  soft_visibility, update_global)
from .trainer import (CurriculumConfig, CurriculumState, ScenarioConfig,
                      TrainerConfig, collect_rollouts, curriculum_update, gae,
                      il_pretrain, ppo_update, reinforce_update, train_loop)
from .world import (MotionResult, ObjectSpec, Pose, PoseCache, RangeScan,
                    SceneGenConfig, SceneSpec, build_pose_cache,
                    generate_scene, raycast_scan, step_kinematics,
                    viewpoint_grid)

__version__ = "0.1.0"

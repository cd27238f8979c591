"""Distill continuous-control policies into Voronoi-partitioned linear subpolicies."""

from .clustering import KMeansModel, SilhouetteReport, find_clusters, kmeans, silhouette
from .envs import (
    Dataset,
    DatasetMeta,
    Episode,
    EvalSummary,
    MountainCarEnv,
    SimpleGoalEnv,
    evaluate,
    make_env,
    rollout,
)
from .errors import (
    DimensionMismatchError,
    FormatError,
    InsufficientPointsError,
    InvalidArgumentError,
    InvalidStateError,
    UnsupportedOperationError,
    VqDistillError,
)
from .geometry import Codeword, Quantizer, add_codeword, build_quantizer
from .io import load_dataset, load_model, save_dataset, save_model
from .linear_policy import LinearSubpolicy, TrainConfig, TrainingReport, init_subpolicy, train
from .partitioner import (
    DistillConfig,
    DistillResult,
    IterationRecord,
    PartitionModel,
    candidate_states,
    distill,
    init_partition,
    model_predict,
    select_low_value,
    split_region,
)
from .teacher import (
    Critic,
    Layer,
    MonteCarloCritic,
    NetworkCritic,
    NetworkWeights,
    TeacherPolicy,
    load_teacher,
    make_scripted_teacher,
    mc_critic,
    mlp_forward,
    save_weights,
    scripted_mountaincar,
    scripted_simplegoal,
)

__version__ = "0.1.0"

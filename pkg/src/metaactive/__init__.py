"""Meta-learned single-shot, pool-based label acquisition."""

from .data import (BaseDataset, ClassPartition, Oracle, Problem, ProblemSuite, load_dataset,
                   make_problem_suite, oracle_query, partition_classes, sample_problem, standardize)
from .nn_core import ParamStore, Tensor, grad_check, no_grad
from .predictor import LabeledSubset, accuracy, cosine_similarity, euclidean_similarity, predict
from .selector import (SelectionMask, kmedoids, kmedoids_select, policy_scores, sample_alpha,
                       select, select_random)
from .trainer import (ModelParams, TrainConfig, episode_loss, evaluate, init_model,
                      policy_gradient_estimate, sgd_step, train)

__version__ = "0.1.0"

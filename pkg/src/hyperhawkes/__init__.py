"""Hyper Hawkes processes: linear Hawkes dynamics in a latent space whose
eigen-decomposition is predicted per interval by a recurrent hypernetwork."""

from .baselines import LHPParams, PoissonModel, fit_lhp, lhp_log_likelihood
from .data import Dataset, DataError, Event, Sequence, load_dataset, save_dataset, split_dataset
from .evaluation import EvalConfig, MetricsReport, evaluate, pit_values, predict_next_mark, predict_next_time
from .model import HHP, HHPConfig, dataset_log_likelihood, evaluate_sequence, log_likelihood
from .simulate import BoundViolation, simulate
from .train import TrainConfig, TrainingError, train

__version__ = "0.1.0"

"""Incremental anomaly detection for evolving cyber-physical-system telemetry."""

from .evaluation import Report, confusion, make_report, prf1, roc
from .mixup import MixupConfig, build_mixed_dataset, temporal_mixup
from .neuralnet import Adam, DenseNet, NumericalError
from .pipeline import MODES, RunConfig, TaskError, pretrain, run_experiment, run_task
from .scoring import NoiseModel, ScoringConfig, estimate_noise, score_pairs
from .simulator import EvolveSpec, SimConfig, evolve, make_tasks, simulate
from .ssm import SSMModel, TrainConfig, meta_finetune, train_standard
from .threshold import ScoreMemory, ThresholdConfig, compute_threshold
from .timeseries import DataError, Pairs, TimeSeries, load_csv, save_csv, sliding_pairs

__version__ = "0.1.0"

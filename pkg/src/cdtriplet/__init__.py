"""Cross-domain triplet-loss training of a small convolutional encoder for defect classification."""
__version__ = "0.1.0"

from .classifier import ConfusionMatrix, ReferenceBank, build_bank, classify, classify_batch, load_bank, save_bank
from .data import Dataset, DefectSpec, DomainSpec, SyntheticConfig, generate_pair
from .encoder import EncoderConfig, EncoderModel, embed, init_encoder, load_checkpoint, save_checkpoint
from .estimators import ReferenceClassifier, TripletEncoder
from .exceptions import CDTripletError
from .experiments import ExperimentConfig, run_experiment, run_suite
from .loss import LossConfig, basic_loss, modified_loss
from .optim import OptimizerConfig
from .training import TrainConfig, train

__all__ = ["ConfusionMatrix", "ReferenceBank", "build_bank", "classify", "classify_batch", "load_bank", "save_bank",
           "Dataset", "DefectSpec", "DomainSpec", "SyntheticConfig", "generate_pair",
           "EncoderConfig", "EncoderModel", "embed", "init_encoder", "load_checkpoint", "save_checkpoint",
           "ReferenceClassifier", "TripletEncoder", "CDTripletError", "ExperimentConfig", "run_experiment",
           "run_suite", "LossConfig", "basic_loss", "modified_loss", "OptimizerConfig", "TrainConfig", "train",
           "__version__"]

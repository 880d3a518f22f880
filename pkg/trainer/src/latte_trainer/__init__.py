"""Quantization-aware training for the streaming local decoder."""

from .dataset import Dataset, load_dataset
from .export import export_weights, import_weights
from .loss import masked_loss
from .qat import LocalDecoderNet
from .train import evaluate, train_curriculum

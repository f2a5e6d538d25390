"""
Data Loader Module for the CosDefense simulator

This module handles loading MNIST / Fashion-MNIST from IDX files and
generating synthetic Gaussian-cluster datasets for fast experiments.
"""

import gzip
import logging
import os
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import pandas as pd

from . import config
from .exceptions import ConfigurationError, IdxParseError
from .utils import log_analysis_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Labelled examples held as dense arrays.

    Attributes:
        features: float64 array of shape (n, dim)
        labels: int64 array of shape (n,), values in [0, num_classes)
        num_classes: Number of classes C
        split: 'train' or 'test'
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ConfigurationError(f"Dataset features must be non-empty 2-D, got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ConfigurationError(
                f"Dataset has {self.features.shape[0]} examples but {self.labels.shape[0]} labels"
            )
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ConfigurationError(f"Labels must lie in [0, {self.num_classes})")
        if self.split not in ("train", "test"):
            raise ConfigurationError(f"Invalid split: {self.split}. Must be 'train' or 'test'")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])


def _read_bytes(path: str) -> bytes:
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as handle:
        return handle.read()


def _read_header(raw: bytes, magic: int, num_dims: int, path: str) -> np.ndarray:
    header_len = 4 * (1 + num_dims)
    if len(raw) < header_len:
        raise IdxParseError("header", f"{path} is truncated ({len(raw)} bytes)")
    header = np.frombuffer(raw[:header_len], dtype=">u4")
    if int(header[0]) != magic:
        raise IdxParseError(
            "magic", f"{path} has magic 0x{int(header[0]):08x}, expected 0x{magic:08x}"
        )
    return header[1:].astype(np.int64)


def load_idx(images_path: str, labels_path: str, split: str = "train") -> Dataset:
    """
    Load an image/label pair of IDX files.

    Pixels are scaled to [0, 1] and flattened; gzipped files are accepted.

    Args:
        images_path: Path to the idx3 images file
        labels_path: Path to the idx1 labels file
        split: 'train' or 'test'

    Returns:
        Dataset with num_classes = 10

    Raises:
        IdxParseError: Bad magic number, truncated payload or count mismatch
    """
    log_analysis_step("DataLoader", f"Loading IDX pair: {images_path}, {labels_path}")

    image_raw = _read_bytes(images_path)
    count, rows, cols = _read_header(image_raw, config.IDX_IMAGES_MAGIC, 3, images_path)
    payload = np.frombuffer(image_raw, dtype=np.uint8, offset=16)
    if payload.size != count * rows * cols:
        raise IdxParseError(
            "images payload",
            f"{images_path} holds {payload.size} pixel bytes, header promises {count * rows * cols}",
        )

    label_raw = _read_bytes(labels_path)
    (label_count,) = _read_header(label_raw, config.IDX_LABELS_MAGIC, 1, labels_path)
    labels = np.frombuffer(label_raw, dtype=np.uint8, offset=8)
    if labels.size != label_count:
        raise IdxParseError(
            "labels payload",
            f"{labels_path} holds {labels.size} labels, header promises {label_count}",
        )
    if label_count != count:
        raise IdxParseError("count", f"{count} images but {label_count} labels")

    features = payload.reshape(count, rows * cols).astype(np.float64) / config.PIXEL_SCALE
    dataset = Dataset(
        features=features,
        labels=labels.astype(np.int64),
        num_classes=config.IDX_NUM_CLASSES,
        split=split,
    )
    log_analysis_step(
        "DataLoader", f"Loaded {len(dataset)} examples, feature dim {dataset.dim}"
    )
    return dataset


def make_synthetic(
    num_classes: int,
    n_per_class: int,
    dim: int,
    seed: int,
    radius: float = config.SYNTHETIC_RADIUS,
    noise_std: float = config.SYNTHETIC_NOISE_STD,
    split: str = "train",
) -> Dataset:
    """
    Generate Gaussian class clusters.

    Class c is centred at ``radius * e_c`` (the c-th unit vector), with
    isotropic noise of standard deviation ``noise_std``. The means do not
    depend on the seed, so a train and a test split drawn with different
    seeds share the same classes. Rows are shuffled under the seed.

    Args:
        num_classes: Number of classes C (>= 2)
        n_per_class: Examples per class (>= 1)
        dim: Feature dimension (>= C)
        seed: Seed for noise and row order

    Returns:
        Dataset with C * n_per_class examples
    """
    if num_classes < 2:
        raise ConfigurationError(f"Synthetic data needs at least 2 classes, got {num_classes}")
    if n_per_class < 1:
        raise ConfigurationError(f"n_per_class must be >= 1, got {n_per_class}")
    if dim < num_classes:
        raise ConfigurationError(f"Synthetic dim {dim} must be >= number of classes {num_classes}")

    rng = np.random.default_rng(seed)
    means = np.zeros((num_classes, dim))
    means[np.arange(num_classes), np.arange(num_classes)] = radius

    labels = np.repeat(np.arange(num_classes, dtype=np.int64), n_per_class)
    features = means[labels] + noise_std * rng.standard_normal((labels.size, dim))
    order = rng.permutation(labels.size)

    return Dataset(
        features=features[order],
        labels=labels[order],
        num_classes=num_classes,
        split=split,
    )


class DataLoader:
    """
    Class for locating and loading experiment datasets.
    """

    def __init__(self, data_dir: Optional[str] = None):
        """
        Initialize DataLoader.

        Args:
            data_dir: Path to data directory
                     If None, uses config.DATA_DIR
        """
        self.data_dir = data_dir or config.DATA_DIR
        log_analysis_step("DataLoader", f"Initialized with data_dir: {self.data_dir}", "DEBUG")

    def _resolve(self, dataset: str, filename: str) -> str:
        base = os.path.join(self.data_dir, dataset, filename)
        for candidate in (base, base + ".gz"):
            if os.path.exists(candidate):
                return candidate
        raise FileNotFoundError(f"Data file not found: {base}[.gz]")

    def dataset_paths(self, dataset: str, split: str) -> Dict[str, str]:
        """
        Resolve the image and label file paths for one split.

        Raises:
            FileNotFoundError: If either file is missing
        """
        if dataset not in ("mnist", "fmnist"):
            raise ConfigurationError(f"No IDX files for dataset '{dataset}'")
        if split not in config.IDX_FILES:
            raise ConfigurationError(f"Invalid split: {split}. Must be 'train' or 'test'")
        names = config.IDX_FILES[split]
        return {
            "images": self._resolve(dataset, names["images"]),
            "labels": self._resolve(dataset, names["labels"]),
        }

    def load_split(self, dataset: str, split: str) -> Dataset:
        """
        Load one split of MNIST or Fashion-MNIST.

        Args:
            dataset: 'mnist' or 'fmnist'
            split: 'train' or 'test'

        Returns:
            Dataset
        """
        paths = self.dataset_paths(dataset, split)
        try:
            return load_idx(paths["images"], paths["labels"], split=split)
        except Exception as e:
            logger.error(f"Error loading {dataset}/{split} from {self.data_dir}: {str(e)}")
            raise

    def load_train_test(self, dataset: str) -> Dict[str, Dataset]:
        """
        Load both splits; both files are checked before anything is parsed.
        """
        self.dataset_paths(dataset, "train")
        self.dataset_paths(dataset, "test")
        return {
            "train": self.load_split(dataset, "train"),
            "test": self.load_split(dataset, "test"),
        }

    def get_data_summary(self, dataset: Dataset) -> Dict:
        """
        Get summary statistics for a loaded dataset.

        Returns:
            Dictionary with example count, feature dim, classes and the
            per-class example counts
        """
        counts = pd.Series(dataset.labels).value_counts().sort_index()
        return {
            "split": dataset.split,
            "num_examples": len(dataset),
            "feature_dim": dataset.dim,
            "num_classes": dataset.num_classes,
            "examples_by_class": {int(k): int(v) for k, v in counts.items()},
        }

"""
Shared fixtures for the simulator tests
"""

import gzip
import os
import struct

import numpy as np
import pytest

from src.data_loader import make_synthetic
from src.experiment_config import ExperimentConfig
from src.fl_core import ModelUpdate
from src.tensor_nn import WEIGHT, ParamVector, Segment, build_layer_specs, init_model

DATA_DIR_ENV = "COSDEFENSE_DATA_DIR"


def flat_vector(values) -> ParamVector:
    """A ParamVector holding one flat weight segment."""
    values = np.asarray(values, dtype=np.float64)
    return ParamVector(values, (Segment(0, WEIGHT, 0, values.size, (1, values.size)),))


def model_updates(rows) -> list:
    """ModelUpdates with client ids 0..n-1 from a list of flat rows."""
    return [ModelUpdate(cid, flat_vector(row)) for cid, row in enumerate(rows)]


def write_idx(directory, name, images: np.ndarray, labels: np.ndarray, gz: bool = False):
    """
    Write an IDX image/label pair; returns (images_path, labels_path).
    """
    os.makedirs(directory, exist_ok=True)
    count, rows, cols = images.shape
    image_bytes = struct.pack(">IIII", 0x803, count, rows, cols) + images.astype(np.uint8).tobytes()
    label_bytes = struct.pack(">II", 0x801, labels.size) + labels.astype(np.uint8).tobytes()
    suffix = ".gz" if gz else ""
    opener = gzip.open if gz else open
    paths = []
    for filename, payload in ((f"{name}-images-idx3-ubyte", image_bytes), (f"{name}-labels-idx1-ubyte", label_bytes)):
        path = os.path.join(directory, filename + suffix)
        with opener(path, "wb") as handle:
            handle.write(payload)
        paths.append(path)
    return tuple(paths)


@pytest.fixture
def small_spec():
    return build_layer_specs([4, 5, 3])


@pytest.fixture
def small_model(small_spec):
    return init_model(small_spec, seed=3)


@pytest.fixture
def synthetic_train():
    return make_synthetic(num_classes=3, n_per_class=60, dim=5, seed=0)


@pytest.fixture
def synthetic_test():
    return make_synthetic(num_classes=3, n_per_class=20, dim=5, seed=1, split="test")


@pytest.fixture
def small_config(tmp_path):
    """A few-second synthetic experiment: 6 clients, 3 per round, 1 attacker."""
    return ExperimentConfig(
        dataset="synthetic",
        synthetic_classes=3,
        synthetic_per_class=60,
        synthetic_test_per_class=20,
        synthetic_dim=5,
        hidden_dims=(8,),
        num_clients=6,
        num_rounds=6,
        sample_rate=0.5,
        learning_rate=0.1,
        batch_size=16,
        q=0.5,
        malicious_frac=0.2,
        attack="ipm",
        attack_start=3,
        defense="cos_defense",
        calibration_rounds=3,
        progress=False,
        out_dir=str(tmp_path / "out"),
    )

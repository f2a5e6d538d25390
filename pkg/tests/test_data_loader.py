"""
Unit tests for DataLoader, IDX parsing and synthetic data
"""

import os

import numpy as np
import pytest

from src.data_loader import DataLoader, Dataset, load_idx, make_synthetic
from src.exceptions import ConfigurationError, IdxParseError
from tests.conftest import write_idx


def _images(count: int, rows: int = 2, cols: int = 3) -> np.ndarray:
    return (np.arange(count * rows * cols) % 256).reshape(count, rows, cols).astype(np.uint8)


class TestLoadIdx:
    """Test cases for IDX parsing"""

    def test_round_trip_values(self, tmp_path):
        """Pixels are flattened and scaled by 1/255"""
        images = _images(4)
        labels = np.array([0, 9, 3, 3])
        image_path, label_path = write_idx(tmp_path, "train", images, labels)

        data = load_idx(image_path, label_path)

        assert len(data) == 4
        assert data.dim == 6
        assert data.num_classes == 10
        assert np.array_equal(data.labels, labels)
        assert data.features[1, 0] == pytest.approx(6 / 255)
        assert data.features.max() <= 1.0

    def test_gzip_files_accepted(self, tmp_path):
        image_path, label_path = write_idx(tmp_path, "train", _images(2), np.array([1, 2]), gz=True)
        assert len(load_idx(image_path, label_path)) == 2

    def test_bad_magic(self, tmp_path):
        """Swapping the files trips the magic check"""
        image_path, label_path = write_idx(tmp_path, "train", _images(10), np.arange(10))
        with pytest.raises(IdxParseError) as info:
            load_idx(label_path, image_path)
        assert info.value.field == "magic"

    def test_truncated_payload(self, tmp_path):
        image_path, label_path = write_idx(tmp_path, "train", _images(3), np.array([1, 2, 3]))
        with open(image_path, "rb") as handle:
            raw = handle.read()
        with open(image_path, "wb") as handle:
            handle.write(raw[:-1])
        with pytest.raises(IdxParseError) as info:
            load_idx(image_path, label_path)
        assert info.value.field == "images payload"

    def test_count_mismatch(self, tmp_path):
        image_path, _ = write_idx(tmp_path / "a", "train", _images(3), np.array([1, 2, 3]))
        _, label_path = write_idx(tmp_path / "b", "train", _images(2), np.array([1, 2]))
        with pytest.raises(IdxParseError) as info:
            load_idx(image_path, label_path)
        assert info.value.field == "count"

    def test_truncated_header(self, tmp_path):
        image_path, label_path = write_idx(tmp_path, "train", _images(1), np.array([1]))
        with open(image_path, "wb") as handle:
            handle.write(b"\x00\x00\x08")
        with pytest.raises(IdxParseError) as info:
            load_idx(image_path, label_path)
        assert info.value.field == "header"


class TestDataLoader:
    """Test cases for DataLoader class"""

    def test_initialization(self):
        """Test DataLoader initialization"""
        loader = DataLoader()
        assert loader is not None
        assert hasattr(loader, "data_dir")

    def test_load_train_test(self, tmp_path):
        """Both splits are read from <data_dir>/<dataset>/"""
        folder = tmp_path / "mnist"
        write_idx(folder, "train", _images(5), np.arange(5))
        write_idx(folder, "t10k", _images(2), np.array([7, 8]))

        splits = DataLoader(str(tmp_path)).load_train_test("mnist")

        assert len(splits["train"]) == 5
        assert len(splits["test"]) == 2
        assert splits["test"].split == "test"

    def test_missing_files_raise_before_parsing(self, tmp_path):
        """A missing test split fails even though train exists"""
        write_idx(tmp_path / "fmnist", "train", _images(5), np.arange(5))
        with pytest.raises(FileNotFoundError):
            DataLoader(str(tmp_path)).load_train_test("fmnist")

    def test_unknown_dataset(self, tmp_path):
        with pytest.raises(ConfigurationError):
            DataLoader(str(tmp_path)).dataset_paths("cifar10", "train")

    def test_data_summary(self, tmp_path):
        """Summary counts examples per class"""
        write_idx(tmp_path / "mnist", "train", _images(4), np.array([1, 1, 2, 5]))
        loader = DataLoader(str(tmp_path))
        summary = loader.get_data_summary(loader.load_split("mnist", "train"))
        assert summary["num_examples"] == 4
        assert summary["examples_by_class"] == {1: 2, 2: 1, 5: 1}
        assert os.path.basename(loader.dataset_paths("mnist", "train")["images"]) == "train-images-idx3-ubyte"


class TestSynthetic:
    """Test cases for synthetic Gaussian clusters"""

    def test_shape_and_balance(self):
        data = make_synthetic(num_classes=4, n_per_class=25, dim=6, seed=0)
        assert len(data) == 100
        assert data.dim == 6
        assert np.bincount(data.labels).tolist() == [25, 25, 25, 25]

    def test_deterministic_per_seed(self):
        a = make_synthetic(3, 10, 4, seed=2)
        b = make_synthetic(3, 10, 4, seed=2)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_class_means_near_centres(self):
        """Class c clusters around radius * e_c"""
        data = make_synthetic(3, 2000, 3, seed=0, radius=4.0)
        for c in range(3):
            mean = data.features[data.labels == c].mean(axis=0)
            expected = np.zeros(3)
            expected[c] = 4.0
            assert np.allclose(mean, expected, atol=0.15)

    def test_dim_below_classes_rejected(self):
        with pytest.raises(ConfigurationError):
            make_synthetic(num_classes=5, n_per_class=3, dim=4, seed=0)

    def test_dataset_label_validation(self):
        with pytest.raises(ConfigurationError):
            Dataset(np.zeros((2, 2)), np.array([0, 3]), num_classes=3)

"""
Partitioner Module for the CosDefense simulator

This module splits a training set across clients with label skew,
places malicious clients across the client groups and draws local
mini-batches.

Partition scheme: the K clients are broken evenly into C groups. A point
with label c goes to group c with probability q and to each of the other
C - 1 groups with probability (1 - q) / (C - 1); inside its group it goes
to one member client chosen uniformly.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Optional

import numpy as np
import pandas as pd

from . import config
from .data_loader import Dataset
from .exceptions import ConfigurationError, EmptyClientError
from .tensor_nn import Batch
from .utils import derive_rng, log_analysis_step

logger = logging.getLogger(__name__)

# Tolerance when comparing q with 1/C
_Q_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class Partition:
    """
    Client -> example-index assignment.

    Attributes:
        assignments: client id -> ascending array of dataset indices
        num_clients: K
        num_groups: C (one group per class)
    """

    assignments: Dict[int, np.ndarray]
    num_clients: int
    num_groups: int

    @property
    def group_size(self) -> int:
        return self.num_clients // self.num_groups

    def client_indices(self, client_id: int) -> np.ndarray:
        return self.assignments[client_id]

    def client_group(self, client_id: int) -> int:
        return client_id // self.group_size

    def label_histogram(self, labels: np.ndarray, num_classes: int) -> pd.DataFrame:
        """
        Per-client label counts.

        Returns:
            DataFrame indexed by client id with one column per class
        """
        rows = {
            client_id: np.bincount(labels[indices], minlength=num_classes)
            for client_id, indices in sorted(self.assignments.items())
        }
        histogram = pd.DataFrame.from_dict(rows, orient="index", columns=list(range(num_classes)))
        histogram.index.name = "client_id"
        return histogram


def validate_partition_args(num_clients: int, num_classes: int, q: float) -> None:
    """
    Raises:
        ConfigurationError: q outside [1/C, 1], K < C, or K not divisible by C
    """
    if num_classes < 2:
        raise ConfigurationError(f"Need at least 2 classes, got {num_classes}")
    if not (1.0 / num_classes - _Q_TOLERANCE <= q <= 1.0):
        raise ConfigurationError(
            f"q must lie in [1/C, 1] = [{1.0 / num_classes:.4f}, 1], got {q}"
        )
    if num_clients < num_classes:
        raise ConfigurationError(
            f"Number of clients {num_clients} must be >= number of classes {num_classes}"
        )
    if num_clients % num_classes != 0:
        raise ConfigurationError(
            f"Number of clients {num_clients} must be divisible by number of classes {num_classes}"
        )


def partition_noniid(dataset: Dataset, num_clients: int, q: float, seed: int) -> Partition:
    """
    Label-skew partition of a dataset across clients.

    Args:
        dataset: Training set
        num_clients: K, divisible by the number of classes
        q: Non-iid degree in [1/C, 1]
        seed: Partition seed

    Returns:
        Partition assigning every example to exactly one client

    Example:
        >>> part = partition_noniid(train, num_clients=100, q=0.5, seed=0)
        >>> sum(len(ix) for ix in part.assignments.values()) == len(train)
        True
    """
    num_classes = dataset.num_classes
    validate_partition_args(num_clients, num_classes, q)
    log_analysis_step(
        "Partitioner", f"Partitioning {len(dataset)} examples over {num_clients} clients (q={q})"
    )

    rng = derive_rng(seed, config.STREAM_PARTITION)
    labels = dataset.labels
    n = labels.size
    group_size = num_clients // num_classes

    stay = rng.random(n) < q
    # uniform over the C - 1 groups other than the label's own
    other = rng.integers(0, num_classes - 1, size=n)
    other = other + (other >= labels)
    groups = np.where(stay, labels, other)
    members = rng.integers(0, group_size, size=n)
    owners = groups * group_size + members

    order = np.argsort(owners, kind="stable")
    counts = np.bincount(owners, minlength=num_clients)
    splits = np.split(order, np.cumsum(counts)[:-1])
    assignments = {client_id: np.sort(splits[client_id]) for client_id in range(num_clients)}

    empty = [client_id for client_id, ix in assignments.items() if ix.size == 0]
    if empty:
        log_analysis_step("Partitioner", f"{len(empty)} clients received no examples", "WARNING")

    return Partition(assignments=assignments, num_clients=num_clients, num_groups=num_classes)


def assign_malicious_clients(
    num_clients: int, num_groups: int, num_malicious: int, seed: int
) -> FrozenSet[int]:
    """
    Spread the malicious clients evenly across the client groups.

    Each group gets floor(m / C) attackers; the first m mod C groups of a
    seeded group permutation get one more. Inside a group the lowest ids
    are taken.

    Args:
        num_clients: K
        num_groups: C
        num_malicious: m = floor(p * K)
        seed: Placement seed

    Returns:
        Frozen set of malicious client ids
    """
    if num_malicious < 0 or num_malicious > num_clients:
        raise ConfigurationError(f"Cannot place {num_malicious} attackers among {num_clients} clients")
    if num_malicious == 0:
        return frozenset()

    group_size = num_clients // num_groups
    base, extra = divmod(num_malicious, num_groups)
    rng = derive_rng(seed, config.STREAM_PLACEMENT)
    bonus_groups = set(rng.permutation(num_groups)[:extra].tolist())

    malicious = set()
    for group in range(num_groups):
        quota = base + (1 if group in bonus_groups else 0)
        if quota > group_size:
            raise ConfigurationError(
                f"Group {group} cannot host {quota} attackers with only {group_size} clients"
            )
        start = group * group_size
        malicious.update(range(start, start + quota))
    return frozenset(malicious)


def sample_batch(
    dataset: Dataset,
    partition: Partition,
    client_id: int,
    batch_size: int,
    rng: np.random.Generator,
    label_transform: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Batch:
    """
    Draw a mini-batch uniformly with replacement from a client's examples.

    Args:
        dataset: Training set the partition refers to
        partition: Client assignments
        client_id: Client to sample from
        batch_size: B
        rng: Generator owned by the caller
        label_transform: Optional mapping applied to the drawn labels

    Raises:
        EmptyClientError: If the client holds no examples
    """
    indices = partition.client_indices(client_id)
    if indices.size == 0:
        raise EmptyClientError(client_id)
    picks = indices[rng.integers(0, indices.size, size=batch_size)]
    labels = dataset.labels[picks]
    if label_transform is not None:
        labels = label_transform(labels)
    return Batch(inputs=dataset.features[picks], labels=labels)


def label_entropy(histogram: pd.DataFrame) -> pd.Series:
    """
    Shannon entropy (nats) of each client's label distribution.

    Clients without examples get NaN.
    """
    totals = histogram.sum(axis=1)
    probs = histogram.div(totals.replace(0, np.nan), axis=0)
    terms = probs * np.log(probs.where(probs > 0))
    return -terms.sum(axis=1, min_count=1).where(totals > 0)


def get_partition_summary(partition: Partition, dataset: Dataset) -> Dict:
    """
    Summary statistics for a partition.

    Returns:
        Dictionary with client count, min/max/mean client size and the
        mean per-client label entropy
    """
    histogram = partition.label_histogram(dataset.labels, dataset.num_classes)
    sizes = histogram.sum(axis=1)
    entropy = label_entropy(histogram)
    return {
        "num_clients": partition.num_clients,
        "min_client_size": int(sizes.min()),
        "max_client_size": int(sizes.max()),
        "mean_client_size": float(sizes.mean()),
        "mean_label_entropy": float(entropy.mean()),
        "max_label_entropy": math.log(dataset.num_classes),
    }

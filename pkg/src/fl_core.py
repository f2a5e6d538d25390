"""
Federated Core Module for the CosDefense simulator

This module runs the FedAvg round loop:
- Client sampling
- Local SGD updates
- Attack injection and defense hooks
- Global model update and per-round records

Sign convention: clients send g = theta_local - theta_t (a descent step)
and the server applies theta_{t+1} = theta_t + Aggr(g).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from tqdm.auto import tqdm

from . import config
from .data_loader import Dataset
from .exceptions import AggregationError, ConfigurationError, EmptyClientError, ShapeError
from .experiment_config import ExperimentConfig
from .metrics import RoundRecord, evaluate_accuracy, last_layer_abs_cosines
from .partitioner import Partition, sample_batch
from .tensor_nn import Batch, ParamVector, axpy, loss_and_grad
from .utils import derive_rng, log_analysis_step, safe_mean

logger = logging.getLogger(__name__)

LossFn = Callable[[ParamVector, Batch], Tuple[float, ParamVector]]
LabelTransform = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ModelUpdate:
    """
    What the server sees from one client: its id and its update.
    """

    client_id: int
    delta: ParamVector


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    """
    A client update plus the simulator-side ground truth.

    Attributes:
        client_id: Client id
        delta: g = theta_local - theta_t
        is_malicious_truth: Whether the client is an attacker; never
            forwarded to a defense
    """

    client_id: int
    delta: ParamVector
    is_malicious_truth: bool = False

    def submission(self) -> ModelUpdate:
        """The server-visible part of this update."""
        return ModelUpdate(client_id=self.client_id, delta=self.delta)

    def replace_delta(self, delta: ParamVector) -> "ClientUpdate":
        if delta.layout != self.delta.layout:
            raise ShapeError(f"Replacement delta for client {self.client_id} has a different layout")
        return ClientUpdate(self.client_id, delta, self.is_malicious_truth)


@dataclass(frozen=True, eq=False)
class RoundState:
    """
    Global state between rounds.

    Randomness is derived from (seed, round, ...) on demand, so the seed
    is the whole generator state.
    """

    round: int
    params: ParamVector
    seed: int


@dataclass(frozen=True, eq=False)
class AggregationResult:
    """
    Output of a defense hook.

    Attributes:
        aggregate: Update added to theta_t, or None to keep theta_t
        benign_ids: Clients whose updates were kept
        filtered_ids: Clients excluded
        verdict: Defense-specific detail (scores, threshold, ...)
    """

    aggregate: Optional[ParamVector]
    benign_ids: Tuple[int, ...]
    filtered_ids: Tuple[int, ...] = ()
    verdict: Optional[object] = None


class AttackHook(Protocol):
    def is_active(self, round_index: int) -> bool: ...

    def label_transform(self, round_index: int) -> Optional[LabelTransform]: ...

    def __call__(self, round_index: int, updates: List[ClientUpdate]) -> List[ClientUpdate]: ...


class DefenseHook(Protocol):
    def __call__(
        self,
        global_params: ParamVector,
        updates: List[ModelUpdate],
        attacker_count: Optional[int] = None,
    ) -> AggregationResult: ...


class HonestClients:
    """Attack hook that never misbehaves."""

    def is_active(self, round_index: int) -> bool:
        return False

    def label_transform(self, round_index: int) -> Optional[LabelTransform]:
        return None

    def __call__(self, round_index: int, updates: List[ClientUpdate]) -> List[ClientUpdate]:
        return updates


class PlainFedAvg:
    """Defense hook that keeps everyone and averages uniformly."""

    needs_attacker_count = False

    def __call__(
        self,
        global_params: ParamVector,
        updates: List[ModelUpdate],
        attacker_count: Optional[int] = None,
    ) -> AggregationResult:
        ids = tuple(sorted(u.client_id for u in updates))
        return AggregationResult(aggregate=fedavg_aggregate(updates), benign_ids=ids)


@dataclass
class RoundHooks:
    attack: AttackHook = field(default_factory=HonestClients)
    defense: DefenseHook = field(default_factory=PlainFedAvg)


def sample_clients(num_clients: int, sample_rate: float, rng: np.random.Generator) -> List[int]:
    """
    Sample floor(K * rate) distinct clients uniformly without replacement.

    Returns:
        Client ids in ascending order

    Example:
        >>> sample_clients(5, 1.0, np.random.default_rng(0))
        [0, 1, 2, 3, 4]
    """
    count = int(math.floor(num_clients * sample_rate + 1e-9))
    if count < 1:
        raise ConfigurationError(
            f"floor(num_clients * sample_rate) must be >= 1, got {num_clients} * {sample_rate}"
        )
    chosen = rng.choice(num_clients, size=count, replace=False)
    return sorted(int(c) for c in chosen)


def local_update(
    global_params: ParamVector,
    dataset: Dataset,
    partition: Partition,
    client_id: int,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
    is_malicious: bool = False,
    label_transform: Optional[LabelTransform] = None,
    loss_fn: LossFn = loss_and_grad,
) -> ClientUpdate:
    """
    Run cfg.local_iters SGD steps from theta_t on one client's data.

    The update is accumulated directly, so with one local iteration it is
    exactly -learning_rate * grad.

    Args:
        global_params: theta_t (not mutated)
        dataset: Training set
        partition: Client assignments
        client_id: Client to train
        cfg: Experiment config (learning_rate, batch_size, local_iters)
        rng: Client's generator for batch draws
        is_malicious: Ground-truth flag carried on the result
        label_transform: Optional label mapping applied to each batch
        loss_fn: Loss/gradient function

    Returns:
        ClientUpdate

    Raises:
        EmptyClientError: If the client holds no data
    """
    delta = np.zeros_like(global_params.values)
    local = global_params
    for _ in range(cfg.local_iters):
        batch = sample_batch(dataset, partition, client_id, cfg.batch_size, rng, label_transform)
        _, grad = loss_fn(local, batch)
        delta = delta + (-cfg.learning_rate) * grad.values
        local = global_params.with_values(global_params.values + delta)
    return ClientUpdate(
        client_id=client_id,
        delta=global_params.with_values(delta),
        is_malicious_truth=is_malicious,
    )


def fedavg_aggregate(updates: Sequence, weights: Optional[Sequence[float]] = None) -> ParamVector:
    """
    Weighted element-wise mean of client updates.

    Terms are summed in ascending client-id order, so permuting the inputs
    (jointly with their weights) gives a bitwise identical result.

    Args:
        updates: Objects with client_id and delta
        weights: Non-negative weights summing to 1; uniform when None

    Returns:
        Aggregated update

    Raises:
        AggregationError: If updates is empty
        ConfigurationError: If weights are negative, do not sum to 1 or
            have the wrong length
    """
    if not updates:
        raise AggregationError("Cannot aggregate an empty update list")
    if weights is None:
        weights = [1.0 / len(updates)] * len(updates)
    if len(weights) != len(updates):
        raise ConfigurationError(f"Got {len(weights)} weights for {len(updates)} updates")
    weights = [float(w) for w in weights]
    if any(w < 0 for w in weights):
        raise ConfigurationError(f"Aggregation weights must be non-negative, got {weights}")
    if not math.isclose(sum(weights), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ConfigurationError(f"Aggregation weights must sum to 1, got {sum(weights)}")

    layout = updates[0].delta.layout
    order = sorted(range(len(updates)), key=lambda k: updates[k].client_id)
    total = np.zeros_like(updates[0].delta.values)
    for k in order:
        if updates[k].delta.layout != layout:
            raise ShapeError(f"Update of client {updates[k].client_id} has a different layout")
        total = total + weights[k] * updates[k].delta.values
    return updates[0].delta.with_values(total)


class FederatedSimulator:
    """
    Class for running the federated round loop.
    """

    def __init__(
        self,
        cfg: ExperimentConfig,
        train: Dataset,
        test: Dataset,
        partition: Partition,
        malicious_ids: frozenset,
        hooks: Optional[RoundHooks] = None,
        loss_fn: LossFn = loss_and_grad,
    ):
        """
        Initialize FederatedSimulator.

        Args:
            cfg: Experiment config
            train: Training set the partition refers to
            test: Evaluation set
            partition: Client assignments
            malicious_ids: Ground-truth attacker ids
            hooks: Attack and defense hooks; honest FedAvg when None
        """
        self.cfg = cfg
        self.train = train
        self.test = test
        self.partition = partition
        self.malicious_ids = frozenset(malicious_ids)
        self.hooks = hooks or RoundHooks()
        self.loss_fn = loss_fn

    def _train_client(self, state: RoundState, client_id: int) -> Optional[ClientUpdate]:
        rng = derive_rng(state.seed, state.round, client_id, config.STREAM_LOCAL_TRAINING)
        is_malicious = client_id in self.malicious_ids
        transform = self.hooks.attack.label_transform(state.round) if is_malicious else None
        try:
            return local_update(
                state.params,
                self.train,
                self.partition,
                client_id,
                self.cfg,
                rng,
                is_malicious=is_malicious,
                label_transform=transform,
                loss_fn=self.loss_fn,
            )
        except EmptyClientError:
            log_analysis_step(
                "Simulator", f"Round {state.round}: client {client_id} holds no data, skipped", "WARNING"
            )
            return None

    def _local_updates(self, state: RoundState, sampled: List[int]) -> List[ClientUpdate]:
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                results = list(pool.map(lambda cid: self._train_client(state, cid), sampled))
        else:
            results = [self._train_client(state, cid) for cid in sampled]
        return sorted((u for u in results if u is not None), key=lambda u: u.client_id)

    def run_round(self, state: RoundState) -> Tuple[RoundState, RoundRecord]:
        """
        Execute one round: sample, train, attack, defend, update.

        Args:
            state: theta_t, t and the run seed

        Returns:
            Tuple of (state for round t + 1, RoundRecord for round t)
        """
        t = state.round
        if t >= self.cfg.num_rounds:
            raise ConfigurationError(f"Round {t} is past num_rounds {self.cfg.num_rounds}")

        sampled = sample_clients(
            self.cfg.num_clients,
            self.cfg.sample_rate,
            derive_rng(state.seed, t, config.STREAM_SAMPLING),
        )
        attack_active = self.hooks.attack.is_active(t)
        updates = self._local_updates(state, sampled)
        updates = sorted(self.hooks.attack(t, updates), key=lambda u: u.client_id)

        malicious_sampled = tuple(u.client_id for u in updates if u.is_malicious_truth)
        received = tuple(u.client_id for u in updates)

        if updates:
            attacker_count = (
                len(malicious_sampled)
                if getattr(self.hooks.defense, "needs_attacker_count", False)
                else None
            )
            result = self.hooks.defense(
                state.params, [u.submission() for u in updates], attacker_count
            )
        else:
            result = AggregationResult(aggregate=None, benign_ids=())

        if result.aggregate is None:
            new_params = state.params
        else:
            new_params = axpy(state.params, result.aggregate, 1.0)

        scores = last_layer_abs_cosines(state.params, {u.client_id: u.delta for u in updates})
        malicious = set(malicious_sampled)
        record = RoundRecord(
            round=t,
            test_accuracy=evaluate_accuracy(new_params, self.test),
            mean_abs_cos_all=safe_mean(scores.values()),
            mean_abs_cos_benign_truth=safe_mean(s for c, s in scores.items() if c not in malicious),
            mean_abs_cos_malicious_truth=safe_mean(s for c, s in scores.items() if c in malicious),
            filtered_ids=tuple(sorted(result.filtered_ids)),
            benign_set_size=len(result.benign_ids),
            attack_active=attack_active,
            sampled_ids=received,
            malicious_sampled_ids=malicious_sampled,
        )
        log_analysis_step(
            "Simulator",
            f"Round {t}: accuracy {record.test_accuracy:.4f}, filtered {list(record.filtered_ids)}",
            "DEBUG",
        )
        return RoundState(round=t + 1, params=new_params, seed=state.seed), record

    def run(self, initial_params: ParamVector) -> Tuple[ParamVector, List[RoundRecord]]:
        """
        Run all cfg.num_rounds rounds from initial_params.

        Returns:
            Tuple of (final parameters, per-round records)
        """
        log_analysis_step(
            "Simulator",
            f"Running {self.cfg.num_rounds} rounds, {self.cfg.clients_per_round} of "
            f"{self.cfg.num_clients} clients per round, {len(self.malicious_ids)} attackers",
        )
        state = RoundState(round=0, params=initial_params, seed=self.cfg.seed)
        records: List[RoundRecord] = []
        for t in tqdm(range(self.cfg.num_rounds), disable=not self.cfg.progress, desc="rounds"):
            if t == self.cfg.attack_start and self.hooks.attack.is_active(t):
                log_analysis_step("Simulator", f"Attack starts at round {t}")
            state, record = self.run_round(state)
            records.append(record)
        if records:
            log_analysis_step(
                "Simulator", f"Final test accuracy: {records[-1].test_accuracy:.4f}"
            )
        return state.params, records

"""
Defenses Module for the CosDefense simulator

Robust aggregation rules plugged into the round engine:
- CosDefense: score each update by |cos| between the last-layer weights
  of the global model and of the update, min-max normalize, and drop
  every client scoring at or above the mean
- Krum and Multi-Krum
- Coordinate-wise median
- Norm clipping and Clipping-Median

Defenses only ever see (theta_t, [ModelUpdate]); ground truth stays in
the simulator. The Krum family may be handed the true attacker count.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import config
from .data_loader import Dataset
from .exceptions import AggregationError, ConfigurationError
from .experiment_config import DefenseSpec, ExperimentConfig
from .fl_core import AggregationResult, ModelUpdate, fedavg_aggregate, local_update, sample_clients
from .partitioner import Partition
from .tensor_nn import ParamVector, axpy, last_layer_vector
from .utils import cosine_similarity, derive_rng, log_analysis_step

logger = logging.getLogger(__name__)

__all__ = [
    "ClientScore",
    "DefenseVerdict",
    "DefenseSpec",
    "RobustAggregator",
    "calibrate_clip_bound",
    "clipping_median",
    "coordinate_median",
    "cos_defense_filter",
    "cosine_similarity",
    "krum",
    "krum_scores",
    "multi_krum",
    "norm_clip",
    "normalize_scores",
]

BENIGN = "benign"
MALICIOUS = "malicious"


@dataclass(frozen=True)
class ClientScore:
    """
    One client's CosDefense scores.

    Attributes:
        client_id: Client id
        raw_cos: |cos| against the global last layer, in [0, 1]
        score: Min-max normalized score in [0, 1]
        label: 'benign' or 'malicious'
    """

    client_id: int
    raw_cos: float
    score: float
    label: str


@dataclass(frozen=True)
class DefenseVerdict:
    """
    CosDefense decision for one round.

    Attributes:
        scores: One entry per received update, in input order
        threshold: Mean normalized score (inf when degenerate)
        degenerate: True when all raw scores were equal
    """

    scores: Tuple[ClientScore, ...]
    threshold: float
    degenerate: bool = False

    @property
    def benign_ids(self) -> FrozenSet[int]:
        return frozenset(s.client_id for s in self.scores if s.label == BENIGN)

    @property
    def malicious_ids(self) -> FrozenSet[int]:
        return frozenset(s.client_id for s in self.scores if s.label == MALICIOUS)


def normalize_scores(raw_scores: Mapping[int, float]) -> DefenseVerdict:
    """
    Min-max normalize raw scores and split them at their mean.

    A client is benign iff its normalized score is strictly below the
    mean. When max == min (including a single client) nobody is flagged.

    Args:
        raw_scores: client id -> raw |cos| score (insertion order kept)

    Returns:
        DefenseVerdict

    Example:
        >>> v = normalize_scores({0: 0.9, 1: 0.1, 2: 0.2, 3: 0.15})
        >>> sorted(v.benign_ids)
        [1, 2, 3]
    """
    if not raw_scores:
        raise AggregationError("CosDefense needs at least one update")

    ids = list(raw_scores)
    raw = np.array([raw_scores[cid] for cid in ids], dtype=np.float64)
    low, high = float(raw.min()), float(raw.max())

    if high == low:
        scores = tuple(ClientScore(cid, float(r), 0.0, BENIGN) for cid, r in zip(ids, raw))
        return DefenseVerdict(scores=scores, threshold=math.inf, degenerate=True)

    normalized = (raw - low) / (high - low)
    threshold = float(np.mean(normalized))
    scores = tuple(
        ClientScore(cid, float(r), float(s), BENIGN if s < threshold else MALICIOUS)
        for cid, r, s in zip(ids, raw, normalized)
    )
    return DefenseVerdict(scores=scores, threshold=threshold)


def cos_defense_filter(
    global_params: ParamVector,
    updates: Sequence[ModelUpdate],
    include_bias: bool = False,
) -> Tuple[FrozenSet[int], DefenseVerdict]:
    """
    Filter updates by last-layer cosine against the global model.

    Only the last layer's weights (plus its bias when include_bias) are
    read from theta_t and from every update.

    Args:
        global_params: theta_t
        updates: Received updates
        include_bias: Append the last layer's bias to both vectors

    Returns:
        Tuple of (benign client ids, DefenseVerdict)
    """
    reference = last_layer_vector(global_params, include_bias)
    raw = {
        u.client_id: abs(cosine_similarity(reference, last_layer_vector(u.delta, include_bias)))
        for u in updates
    }
    verdict = normalize_scores(raw)
    log_analysis_step(
        "CosDefense",
        f"threshold {verdict.threshold:.4f}, flagged {sorted(verdict.malicious_ids)}",
        "DEBUG",
    )
    return verdict.benign_ids, verdict


def _check_krum_bound(n: int, f: int) -> None:
    if f < 0 or n - f - 2 < 1:
        raise ConfigurationError(f"Krum needs n - f - 2 >= 1, got n={n}, f={f}")


def krum_scores(updates: Sequence[ModelUpdate], f: int) -> Dict[int, float]:
    """
    Krum score of every update: the summed squared Euclidean distance to
    its n - f - 2 nearest other updates (full flattened vectors).

    Raises:
        ConfigurationError: If n - f - 2 < 1
    """
    n = len(updates)
    _check_krum_bound(n, f)
    stacked = np.stack([u.delta.values for u in updates])
    distances = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            distances[i, j] = distances[j, i] = float(np.sum((stacked[i] - stacked[j]) ** 2))

    k = n - f - 2
    scores = {}
    for i, u in enumerate(updates):
        others = np.sort(np.delete(distances[i], i))
        scores[u.client_id] = float(np.sum(others[:k]))
    return scores


def _rank_by_score(scores: Mapping[int, float]) -> List[int]:
    return sorted(scores, key=lambda cid: (scores[cid], cid))


def krum(updates: Sequence[ModelUpdate], f: int) -> int:
    """
    Id of the update with the lowest Krum score; ties go to the lowest id.

    Example:
        deltas [0,0], [0.1,0], [0,0.1], [10,10] with f=1 select client 0.
    """
    return _rank_by_score(krum_scores(updates, f))[0]


def multi_krum(updates: Sequence[ModelUpdate], f: int) -> FrozenSet[int]:
    """The n - f ids with the lowest Krum scores."""
    ranked = _rank_by_score(krum_scores(updates, f))
    return frozenset(ranked[: len(updates) - f])


def coordinate_median(updates: Sequence[ModelUpdate]) -> ParamVector:
    """
    Per-coordinate median; an even count averages the two middle values.

    Raises:
        AggregationError: If updates is empty
    """
    if not updates:
        raise AggregationError("Cannot take the median of an empty update list")
    stacked = np.stack([u.delta.values for u in updates])
    return updates[0].delta.with_values(np.median(stacked, axis=0))


def norm_clip(delta: ParamVector, bound: float) -> ParamVector:
    """
    Scale delta down to Euclidean norm ``bound`` if it is longer.
    """
    if not bound > 0:
        raise ConfigurationError(f"Clip bound must be > 0, got {bound}")
    norm = delta.norm()
    if norm <= bound:
        return delta
    return delta.with_values(delta.values * (bound / norm))


def clipping_median(updates: Sequence[ModelUpdate], bound: float) -> ParamVector:
    """Norm-clip every update, then take the coordinate-wise median."""
    if not updates:
        raise AggregationError("Cannot aggregate an empty update list")
    clipped = [ModelUpdate(u.client_id, norm_clip(u.delta, bound)) for u in updates]
    return coordinate_median(clipped)


def calibrate_clip_bound(
    cfg: ExperimentConfig,
    train: Dataset,
    partition: Partition,
    initial_params: ParamVector,
    rounds: Optional[int] = None,
) -> float:
    """
    Median update norm over a short benign FedAvg run.

    Args:
        cfg: Experiment config (protocol parameters and seed)
        train: Training set
        partition: Client assignments
        initial_params: theta_0
        rounds: Calibration rounds; cfg.calibration_rounds when None

    Returns:
        Clip bound (> 0)
    """
    if rounds is None:
        rounds = cfg.calibration_rounds
    log_analysis_step("Calibration", f"Running {rounds} benign rounds to pick the clip bound")

    params = initial_params
    norms: List[float] = []
    for t in range(rounds):
        sampled = sample_clients(
            cfg.num_clients, cfg.sample_rate, derive_rng(cfg.seed, t, config.STREAM_SAMPLING)
        )
        updates = []
        for cid in sampled:
            if partition.client_indices(cid).size == 0:
                continue
            rng = derive_rng(cfg.seed, t, cid, config.STREAM_LOCAL_TRAINING)
            updates.append(local_update(params, train, partition, cid, cfg, rng))
        if not updates:
            continue
        norms.extend(u.delta.norm() for u in updates)
        params = axpy(params, fedavg_aggregate(updates), 1.0)

    bound = float(np.median(norms)) if norms else 0.0
    if not bound > 0:
        raise ConfigurationError("Calibration produced no positive update norm; set clip_bound explicitly")
    log_analysis_step("Calibration", f"Clip bound set to {bound:.6f}")
    return bound


class RobustAggregator:
    """
    Defense hook for the round engine.

    Args:
        spec: Defense selection
        clip_bound: Bound for clipping_median; overrides spec.clip_bound
    """

    def __init__(self, spec: DefenseSpec, clip_bound: Optional[float] = None):
        self.spec = spec
        self.clip_bound = clip_bound if clip_bound is not None else spec.clip_bound
        if spec.uses_clipping and self.clip_bound is None:
            raise ConfigurationError("clip_bound: clipping_median needs a clip bound")

    @property
    def needs_attacker_count(self) -> bool:
        return self.spec.is_krum_family and self.spec.krum_f is None

    def _resolve_f(self, n: int, attacker_count: Optional[int]) -> int:
        if self.spec.krum_f is not None:
            _check_krum_bound(n, self.spec.krum_f)
            return self.spec.krum_f
        f = attacker_count or 0
        if n - f - 2 < 1:
            clamped = max(n - 3, 0)
            log_analysis_step(
                "Krum", f"f={f} too large for {n} updates, clamped to {clamped}", "WARNING"
            )
            f = clamped
        _check_krum_bound(n, f)
        return f

    def _post_filter(self, kept: List[ModelUpdate]) -> ParamVector:
        if self.spec.post_filter_aggregation == "median":
            return coordinate_median(kept)
        return fedavg_aggregate(kept)

    def __call__(
        self,
        global_params: ParamVector,
        updates: List[ModelUpdate],
        attacker_count: Optional[int] = None,
    ) -> AggregationResult:
        """
        Aggregate one round's updates under the configured defense.

        Returns:
            AggregationResult; aggregate is None when nothing survives
        """
        if not updates:
            raise AggregationError("Defense received no updates")
        all_ids = tuple(sorted(u.client_id for u in updates))
        kind = self.spec.kind
        verdict = None

        if kind == "none":
            return AggregationResult(fedavg_aggregate(updates), all_ids)
        if kind == "median":
            return AggregationResult(coordinate_median(updates), all_ids)
        if kind == "clipping_median":
            return AggregationResult(clipping_median(updates, self.clip_bound), all_ids)

        if kind == "cos_defense":
            benign, verdict = cos_defense_filter(global_params, updates, self.spec.include_bias)
        elif kind == "krum":
            benign = frozenset([krum(updates, self._resolve_f(len(updates), attacker_count))])
        elif kind == "multi_krum":
            benign = multi_krum(updates, self._resolve_f(len(updates), attacker_count))
        else:
            raise ConfigurationError(f"Unknown defense kind: {kind}")

        kept = [u for u in updates if u.client_id in benign]
        filtered = tuple(cid for cid in all_ids if cid not in benign)
        if not kept:
            return AggregationResult(None, (), filtered, verdict)
        # single Krum winner: fedavg of one update is that update
        aggregate = fedavg_aggregate(kept) if kind != "cos_defense" else self._post_filter(kept)
        return AggregationResult(aggregate, tuple(sorted(benign)), filtered, verdict)
